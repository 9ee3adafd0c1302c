//! Evaluation machinery: classification metrics against consensus labels,
//! recommendation coverage and agreement, significance tests and
//! finite-population sample sizing.

use std::collections::{BTreeMap, BTreeSet};
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("all confusion counts are zero")]
    EmptyEvaluation,
    #[error("selected set is empty")]
    EmptySelection,
    #[error("usage frequency for {0} must be positive")]
    InvalidFrequency(String),
    #[error("need at least {k} results, got {got}")]
    InsufficientResults { k: usize, got: usize },
    #[error("no discordant pairs")]
    NoDiscordantPairs,
    #[error("all paired differences are zero")]
    NoDifferences,
    #[error("no pairs supplied")]
    NoPairs,
    #[error("unsupported confidence level {0}")]
    UnsupportedConfidence(String),
    #[error("margin must lie in (0, 1), got {0}")]
    InvalidMargin(String),
    #[error("population must be at least 1")]
    EmptyPopulation,
    #[error("k must be at least 1")]
    InvalidK,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    /// Tallies (gold, predicted) pairs where `true` is the positive class.
    pub fn from_pairs<I: IntoIterator<Item = (bool, bool)>>(pairs: I) -> Self {
        let mut cc = ConfusionCounts::default();
        for (gold, pred) in pairs {
            match (gold, pred) {
                (true, true) => cc.tp += 1,
                (false, true) => cc.fp += 1,
                (true, false) => cc.fn_ += 1,
                (false, false) => cc.tn += 1,
            }
        }
        cc
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// `None` marks an undefined metric (zero denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn classification_metrics(cc: ConfusionCounts) -> Result<ClassificationMetrics, EvalError> {
    let total = cc.total();
    if total == 0 {
        return Err(EvalError::EmptyEvaluation);
    }
    let precision = ratio(cc.tp, cc.tp + cc.fp);
    let recall = ratio(cc.tp, cc.tp + cc.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Ok(ClassificationMetrics {
        precision,
        recall,
        f1,
        accuracy: (cc.tp + cc.tn) as f64 / total as f64,
    })
}

pub fn coverage<T: Ord>(selected: &BTreeSet<T>, recommended: &BTreeSet<T>) -> Result<f64, EvalError> {
    if selected.is_empty() {
        return Err(EvalError::EmptySelection);
    }
    let hit = selected.intersection(recommended).count();
    Ok(hit as f64 / selected.len() as f64)
}

/// Coverage where each selected item weighs its usage frequency.
pub fn weighted_coverage<T: Ord + ToString>(
    selected: &BTreeMap<T, f64>,
    recommended: &BTreeSet<T>,
) -> Result<f64, EvalError> {
    if selected.is_empty() {
        return Err(EvalError::EmptySelection);
    }
    let mut covered = 0.0;
    let mut total = 0.0;
    for (item, &freq) in selected {
        if !(freq > 0.0 && freq.is_finite()) {
            return Err(EvalError::InvalidFrequency(item.to_string()));
        }
        total += freq;
        if recommended.contains(item) {
            covered += freq;
        }
    }
    Ok(covered / total)
}

/// `|top_k(a) ∩ top_k(b)| / k`.
pub fn topk_agreement<T: Eq + Hash + Ord>(a: &[T], b: &[T], k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidK);
    }
    let shortest = a.len().min(b.len());
    if shortest < k {
        return Err(EvalError::InsufficientResults { k, got: shortest });
    }
    let top_a: BTreeSet<&T> = a[..k].iter().collect();
    let top_b: BTreeSet<&T> = b[..k].iter().collect();
    Ok(top_a.intersection(&top_b).count() as f64 / k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McNemarMethod {
    /// Chi-square(1) with continuity correction, used when b + c >= 25.
    ChiSquareCorrected,
    /// Exact two-sided binomial test on (b, b + c, 0.5).
    ExactBinomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: McNemarMethod,
}

pub const MCNEMAR_EXACT_BELOW: u64 = 25;

/// `b` counts items only system A got right, `c` items only B got right.
pub fn mcnemar(b: u64, c: u64) -> Result<McNemarResult, EvalError> {
    let n = b + c;
    if n == 0 {
        return Err(EvalError::NoDiscordantPairs);
    }
    if n >= MCNEMAR_EXACT_BELOW {
        return mcnemar_chi_square(b, c);
    }
    mcnemar_exact(b, c)
}

/// Continuity-corrected chi-square(1) branch regardless of `b + c`.
pub fn mcnemar_chi_square(b: u64, c: u64) -> Result<McNemarResult, EvalError> {
    let n = b + c;
    if n == 0 {
        return Err(EvalError::NoDiscordantPairs);
    }
    let diff = b.abs_diff(c) as f64;
    let statistic = (diff - 1.0).powi(2) / n as f64;
    let chi = ChiSquared::new(1.0).expect("one degree of freedom");
    Ok(McNemarResult {
        statistic,
        p_value: chi.sf(statistic).clamp(0.0, 1.0),
        method: McNemarMethod::ChiSquareCorrected,
    })
}

/// Exact two-sided binomial branch regardless of `b + c`.
pub fn mcnemar_exact(b: u64, c: u64) -> Result<McNemarResult, EvalError> {
    let n = b + c;
    if n == 0 {
        return Err(EvalError::NoDiscordantPairs);
    }
    let k = b.min(c);
    let tail: f64 = (0..=k).map(|i| binomial_pmf_half(n, i)).sum();
    Ok(McNemarResult {
        statistic: k as f64,
        p_value: (2.0 * tail).min(1.0),
        method: McNemarMethod::ExactBinomial,
    })
}

/// `C(n, i) / 2^n`.
fn binomial_pmf_half(n: u64, i: u64) -> f64 {
    let i = i.min(n - i);
    let mut coeff = 1.0f64;
    for j in 0..i {
        coeff = coeff * (n - j) as f64 / (j + 1) as f64;
    }
    coeff * 0.5f64.powi(n as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    Exact,
    NormalApproximation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// `min(W+, W-)`.
    pub statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    pub p_value: f64,
    pub n_effective: usize,
    pub method: WilcoxonMethod,
}

pub const WILCOXON_EXACT_MAX_N: usize = 25;

/// Midranks (1-based) of `values`, which must be sorted ascending.
fn midranks(sorted: &[f64]) -> Vec<f64> {
    let mut ranks = vec![0.0; sorted.len()];
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        ranks[i..=j].iter_mut().for_each(|x| *x = r);
        i = j + 1;
    }
    ranks
}

/// Two-sided signed-rank test on paired samples `(a, b)`, differences `a - b`.
pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)]) -> Result<WilcoxonResult, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::NoPairs);
    }
    let diffs: Vec<f64> = pairs
        .iter()
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    wilcoxon_from_differences(&diffs)
}

pub fn wilcoxon_from_differences(diffs: &[f64]) -> Result<WilcoxonResult, EvalError> {
    let mut nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    if nonzero.is_empty() {
        return Err(EvalError::NoDifferences);
    }
    nonzero.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&abs);
    let n = nonzero.len();
    let w_plus: f64 = nonzero
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;
    let statistic = w_plus.min(w_minus);

    let (p_value, method) = if n <= WILCOXON_EXACT_MAX_N {
        (exact_signed_rank_p(&ranks, statistic), WilcoxonMethod::Exact)
    } else {
        let mut tie_term = 0.0;
        let mut i = 0;
        while i < abs.len() {
            let mut j = i;
            while j + 1 < abs.len() && abs[j + 1] == abs[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            tie_term += t * t * t - t;
            i = j + 1;
        }
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let p = if var <= 0.0 {
            1.0
        } else {
            // continuity correction toward the mean
            let z = ((statistic - mean).abs() - 0.5).max(0.0) / var.sqrt();
            let normal = Normal::standard();
            (2.0 * normal.sf(z)).min(1.0)
        };
        (p, WilcoxonMethod::NormalApproximation)
    };
    Ok(WilcoxonResult {
        statistic,
        w_plus,
        w_minus,
        p_value,
        n_effective: n,
        method,
    })
}

/// `min(1, 2 * P(W+ <= w))` under the null where every sign is equally
/// likely. Ranks are doubled so midranks become integers and the null
/// distribution is built by dynamic programming over subsets.
fn exact_signed_rank_p(ranks: &[f64], w: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut ways = vec![0f64; max + 1];
    ways[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if ways[s] > 0.0 {
                ways[s + r] += ways[s];
            }
        }
        reach += r;
    }
    let limit = (w * 2.0).round() as usize;
    let hits: f64 = ways[..=limit.min(max)].iter().sum();
    let total = 2f64.powi(ranks.len() as i32);
    (2.0 * hits / total).min(1.0)
}

/// Two-sided critical z for the supported confidence levels.
pub fn z_for_confidence(confidence: f64) -> Result<f64, EvalError> {
    const LEVELS: [(f64, f64); 3] = [(0.90, 1.645), (0.95, 1.96), (0.99, 2.576)];
    LEVELS
        .iter()
        .find(|(c, _)| (c - confidence).abs() < 1e-9)
        .map(|(_, z)| *z)
        .ok_or_else(|| EvalError::UnsupportedConfidence(confidence.to_string()))
}

/// Cochran's sample size at p = 0.5 with finite population correction.
/// `population = None` means an unbounded population.
pub fn sample_size(population: Option<u64>, confidence: f64, margin: f64) -> Result<u64, EvalError> {
    let z = z_for_confidence(confidence)?;
    if !(margin > 0.0 && margin < 1.0) {
        return Err(EvalError::InvalidMargin(margin.to_string()));
    }
    let n0 = z * z * 0.25 / (margin * margin);
    match population {
        None => Ok(n0.ceil() as u64),
        Some(0) => Err(EvalError::EmptyPopulation),
        Some(n) => {
            let corrected = n0 / (1.0 + (n0 - 1.0) / n as f64);
            Ok((corrected.ceil() as u64).min(n))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn metrics_examples() {
        let m = classification_metrics(ConfusionCounts::new(9, 1, 1, 9)).unwrap();
        assert!(close(m.precision.unwrap(), 0.9, 1e-12));
        assert!(close(m.recall.unwrap(), 0.9, 1e-12));
        assert!(close(m.f1.unwrap(), 0.9, 1e-12));
        assert!(close(m.accuracy, 0.9, 1e-12));

        let m = classification_metrics(ConfusionCounts::new(0, 0, 5, 5)).unwrap();
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, Some(0.0));
        assert_eq!(m.f1, None);

        let m = classification_metrics(ConfusionCounts::new(7, 0, 0, 0)).unwrap();
        assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (Some(1.0), Some(1.0), Some(1.0), 1.0));
        assert_eq!(
            classification_metrics(ConfusionCounts::default()),
            Err(EvalError::EmptyEvaluation)
        );
    }

    #[test]
    fn coverage_examples() {
        let sel: BTreeSet<_> = ["a", "b", "c", "d"].into();
        assert_eq!(coverage(&sel, &["a", "b", "c", "x"].into()).unwrap(), 0.75);
        assert_eq!(coverage(&sel, &["a", "b", "c", "d", "e"].into()).unwrap(), 1.0);
        assert_eq!(coverage(&sel, &["q"].into()).unwrap(), 0.0);
        assert_eq!(coverage(&BTreeSet::<&str>::new(), &sel), Err(EvalError::EmptySelection));
    }

    #[test]
    fn weighted_coverage_examples() {
        let sel: BTreeMap<_, _> = [("a", 99.0), ("b", 1.0)].into();
        assert!(close(weighted_coverage(&sel, &["a"].into()).unwrap(), 0.99, 1e-12));
        let uniform: BTreeMap<_, _> = [("a", 3.0), ("b", 3.0), ("c", 3.0), ("d", 3.0)].into();
        let rec: BTreeSet<_> = ["a", "b", "c", "x"].into();
        assert_eq!(weighted_coverage(&uniform, &rec).unwrap(), 0.75);
        assert_eq!(weighted_coverage(&sel, &["a", "b"].into()).unwrap(), 1.0);
        let bad: BTreeMap<_, _> = [("a", 0.0)].into();
        assert!(matches!(weighted_coverage(&bad, &rec), Err(EvalError::InvalidFrequency(_))));
    }

    #[test]
    fn agreement_examples() {
        let a: Vec<u32> = (0..10).collect();
        assert_eq!(topk_agreement(&a, &a, 10).unwrap(), 1.0);
        let mut b: Vec<u32> = (0..8).collect();
        b.extend([100, 101]);
        assert!(close(topk_agreement(&a, &b, 10).unwrap(), 0.8, 1e-12));
        let c: Vec<u32> = (50..60).collect();
        assert_eq!(topk_agreement(&a, &c, 10).unwrap(), 0.0);
        assert_eq!(
            topk_agreement(&a, &c[..5], 10),
            Err(EvalError::InsufficientResults { k: 10, got: 5 })
        );
    }

    #[test]
    fn mcnemar_examples() {
        let r = mcnemar(15, 5).unwrap();
        assert_eq!(r.method, McNemarMethod::ExactBinomial);
        // 2 * sum_{i<=5} C(20,i) / 2^20 = 2 * 21700 / 1048576
        assert!(close(r.p_value, 43400.0 / 1048576.0, 1e-12));
        let r = mcnemar_chi_square(15, 5).unwrap();
        assert!(close(r.statistic, 4.05, 1e-12));
        assert!(close(r.p_value, 0.0441, 1e-4));
        let r = mcnemar(3, 1).unwrap();
        assert_eq!(r.method, McNemarMethod::ExactBinomial);
        assert!(close(r.p_value, 0.625, 1e-12));
        let r = mcnemar(20, 20).unwrap();
        assert_eq!(r.method, McNemarMethod::ChiSquareCorrected);
        assert!(close(r.statistic, 1.0 / 40.0, 1e-12));
        assert!(r.p_value > 0.8);
        assert_eq!(mcnemar(0, 0), Err(EvalError::NoDiscordantPairs));
        let r = mcnemar(30, 10).unwrap();
        assert!(close(r.statistic, 361.0 / 40.0, 1e-12));
        assert_eq!(mcnemar(30, 10).unwrap().p_value, mcnemar(10, 30).unwrap().p_value);
    }

    #[test]
    fn wilcoxon_examples() {
        let r = wilcoxon_from_differences(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(close(r.p_value, 0.0625, 1e-12));
        let r = wilcoxon_from_differences(&[1.0, -1.0]).unwrap();
        assert_eq!((r.w_plus, r.w_minus, r.statistic), (1.5, 1.5, 1.5));
        assert_eq!(r.p_value, 1.0);
        assert_eq!(wilcoxon_signed_rank(&[(1.0, 1.0)]), Err(EvalError::NoDifferences));
        let r = wilcoxon_signed_rank(&[(3.0, 1.0), (2.0, 2.0), (0.0, 1.0)]).unwrap();
        assert_eq!(r.n_effective, 2);
    }

    #[test]
    fn wilcoxon_large_uses_normal() {
        let d: Vec<f64> = (1..=40).map(|i| if i % 3 == 0 { -(i as f64) } else { i as f64 }).collect();
        let r = wilcoxon_from_differences(&d).unwrap();
        assert_eq!(r.method, WilcoxonMethod::NormalApproximation);
        assert!(r.p_value > 0.0 && r.p_value < 1.0);
    }

    #[test]
    fn sample_size_examples() {
        assert_eq!(sample_size(Some(16_887), 0.95, 0.05).unwrap(), 376);
        assert_eq!(sample_size(None, 0.95, 0.05).unwrap(), 385);
        assert_eq!(sample_size(Some(10), 0.95, 0.05).unwrap(), 10);
        assert_eq!(sample_size(Some(1), 0.99, 0.01).unwrap(), 1);
        // the standard formula at the other two populations
        assert_eq!(sample_size(Some(12_137), 0.95, 0.05).unwrap(), 373);
        assert_eq!(sample_size(Some(2_700), 0.95, 0.05).unwrap(), 337);
        assert!(matches!(sample_size(Some(100), 0.8, 0.05), Err(EvalError::UnsupportedConfidence(_))));
        assert!(matches!(sample_size(Some(100), 0.95, 1.5), Err(EvalError::InvalidMargin(_))));
    }
}
