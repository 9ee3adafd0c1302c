//! Tab-separated evaluation inputs for `pkgraph eval`.
//!
//! Every file has three columns. A first row starting with `item_id` is a
//! header; blank lines and `#` comments are ignored.

use std::collections::BTreeSet;

use pkgraph_core::evaluation::{
    classification_metrics, mcnemar, wilcoxon_signed_rank, ClassificationMetrics, ConfusionCounts, McNemarResult,
    WilcoxonResult,
};
use serde::Serialize;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum InputError {
    #[error("line {line}: expected 3 tab-separated columns, found {found}")]
    Columns { line: usize, found: usize },
    #[error("line {line}: {reason}")]
    Value { line: usize, reason: String },
    #[error("duplicate item id {id:?} on line {line}")]
    Duplicate { id: String, line: usize },
}

/// `(line number, item id, column 2, column 3)` rows.
fn rows(text: &str) -> Result<Vec<(usize, String, String, String)>, InputError> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    let mut first = true;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = trimmed.split('\t').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(InputError::Columns { line, found: cols.len() });
        }
        if std::mem::take(&mut first) && cols[0] == "item_id" {
            continue;
        }
        if !seen.insert(cols[0].to_string()) {
            return Err(InputError::Duplicate { id: cols[0].into(), line });
        }
        out.push((line, cols[0].to_string(), cols[1].to_string(), cols[2].to_string()));
    }
    Ok(out)
}

fn binary(line: usize, v: &str) -> Result<bool, InputError> {
    match v {
        "1" | "true" | "hit" => Ok(true),
        "0" | "false" | "miss" => Ok(false),
        other => Err(InputError::Value { line, reason: format!("expected a binary outcome, got {other:?}") }),
    }
}

fn real(line: usize, v: &str) -> Result<f64, InputError> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| InputError::Value { line, reason: format!("expected a number, got {v:?}") })
}

/// `(item_id, gold, predicted)` rows, scored one-vs-rest for `positive`.
pub fn confusion_from_labels(text: &str, positive: &str) -> Result<ConfusionCounts, InputError> {
    let mut cc = ConfusionCounts::default();
    for (_, _, gold, pred) in rows(text)? {
        match (gold == positive, pred == positive) {
            (true, true) => cc.tp += 1,
            (false, true) => cc.fp += 1,
            (true, false) => cc.fn_ += 1,
            (false, false) => cc.tn += 1,
        }
    }
    Ok(cc)
}

/// Discordant counts `(b, c)`: items only A hit, items only B hit.
pub fn discordant_pairs(text: &str) -> Result<(u64, u64), InputError> {
    let (mut b, mut c) = (0, 0);
    for (line, _, a, bb) in rows(text)? {
        match (binary(line, &a)?, binary(line, &bb)?) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok((b, c))
}

pub fn paired_scores(text: &str) -> Result<Vec<(f64, f64)>, InputError> {
    rows(text)?
        .into_iter()
        .map(|(line, _, a, b)| Ok((real(line, &a)?, real(line, &b)?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "test", rename_all = "snake_case")]
pub enum EvalReport {
    Classification {
        counts: ConfusionCounts,
        metrics: ClassificationMetrics,
    },
    Mcnemar {
        b: u64,
        c: u64,
        result: McNemarResult,
    },
    Wilcoxon {
        pairs: usize,
        result: WilcoxonResult,
    },
    SampleSize {
        population: Option<u64>,
        confidence: f64,
        margin: f64,
        n: u64,
    },
}

pub fn classification_report(text: &str, positive: &str) -> anyhow::Result<EvalReport> {
    let counts = confusion_from_labels(text, positive)?;
    let metrics = classification_metrics(counts)?;
    Ok(EvalReport::Classification { counts, metrics })
}

pub fn mcnemar_report(text: &str) -> anyhow::Result<EvalReport> {
    let (b, c) = discordant_pairs(text)?;
    Ok(EvalReport::Mcnemar { b, c, result: mcnemar(b, c)? })
}

pub fn wilcoxon_report(text: &str) -> anyhow::Result<EvalReport> {
    let pairs = paired_scores(text)?;
    let result = wilcoxon_signed_rank(&pairs)?;
    Ok(EvalReport::Wilcoxon { pairs: pairs.len(), result })
}
