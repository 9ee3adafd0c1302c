//! Fuzzy aggregation of review evidence into per-attribute quality scores.
//!
//! Each review statement carries a polarity and the set of quality
//! attributes it talks about. Positive statements count as High evidence,
//! neutral as Medium and negative as Low; the score is the weighted mean
//! `(w_L*L + w_M*M + w_H*H) / (L + M + H)`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::annotate::PolarityLabel;
use crate::graph::{QualityAttribute, QualityScore};

#[derive(Debug, thiserror::Error, Clone, Copy, PartialEq, Eq)]
pub enum QualityError {
    #[error("no evidence for this attribute")]
    NoEvidence,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentimentCounts {
    pub low: u64,
    pub medium: u64,
    pub high: u64,
}

impl SentimentCounts {
    pub fn new(low: u64, medium: u64, high: u64) -> Self {
        SentimentCounts { low, medium, high }
    }

    pub fn total(&self) -> u64 {
        self.low + self.medium + self.high
    }

    pub fn record(&mut self, polarity: PolarityLabel) {
        match polarity {
            PolarityLabel::Positive => self.high += 1,
            PolarityLabel::Neutral => self.medium += 1,
            PolarityLabel::Negative => self.low += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuzzyWeights {
    pub low: f64,
    pub medium: f64,
    pub high: f64,
}

impl Default for FuzzyWeights {
    fn default() -> Self {
        FuzzyWeights {
            low: 0.0,
            medium: 0.5,
            high: 1.0,
        }
    }
}

impl FuzzyWeights {
    /// Closed range every score falls into under these weights.
    pub fn range(&self) -> (f64, f64) {
        let lo = self.low.min(self.medium).min(self.high);
        let hi = self.low.max(self.medium).max(self.high);
        (lo, hi)
    }
}

pub fn fuzzy_score(counts: SentimentCounts, weights: &FuzzyWeights) -> Result<f64, QualityError> {
    let total = counts.total();
    if total == 0 {
        return Err(QualityError::NoEvidence);
    }
    let weighted = weights.low * counts.low as f64
        + weights.medium * counts.medium as f64
        + weights.high * counts.high as f64;
    Ok(weighted / total as f64)
}

/// Buckets the statements that mention `attribute` and scores them.
pub fn aggregate(
    package: &str,
    attribute: QualityAttribute,
    statements: &[(PolarityLabel, BTreeSet<QualityAttribute>)],
) -> Result<QualityScore, QualityError> {
    let mut counts = SentimentCounts::default();
    for (polarity, attrs) in statements {
        if attrs.contains(&attribute) {
            counts.record(*polarity);
        }
    }
    if counts.total() == 0 {
        return Err(QualityError::NoEvidence);
    }
    Ok(QualityScore {
        package: package.to_string(),
        attribute,
        count_l: counts.low,
        count_m: counts.medium,
        count_h: counts.high,
        evidence: BTreeSet::new(),
    })
}

/// Verbal band for display only; ranking always uses the numeric score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityBand {
    Low,
    Medium,
    High,
}

pub fn band(score: f64) -> QualityBand {
    if score < 0.33 {
        QualityBand::Low
    } else if score < 0.67 {
        QualityBand::Medium
    } else {
        QualityBand::High
    }
}
