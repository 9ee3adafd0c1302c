//! Corpus characterization reports: usage and keyword frequency
//! distributions over log-spaced intervals, top-k tables and the registry
//! availability split.
//!
//! Intervals are lower-open and upper-closed (`10 < x <= 100`); the first
//! bucket is the singleton `x = 1` and the last is `x > last edge`.
//! Percentages are rounded half-up to two decimals using integer arithmetic.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum AnalyticsError {
    #[error("count for {0} must be at least 1")]
    InvalidCount(String),
    #[error("total {total} is smaller than the largest count {max}")]
    InconsistentTotals { total: u64, max: u64 },
    #[error("bucket edges must be strictly ascending and start at 1")]
    InvalidBuckets,
}

/// A percentage held in hundredths of a percent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Percent(u64);

impl Percent {
    /// `count / total * 100`, rounded half-up to two decimals. `None` when total is 0.
    pub fn of(count: u64, total: u64) -> Option<Percent> {
        if total == 0 {
            return None;
        }
        let num = count as u128 * 10_000 * 2 + total as u128;
        Some(Percent((num / (2 * total as u128)) as u64))
    }

    pub fn hundredths(self) -> u64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}%", self.0 / 100, self.0 % 100)
    }
}

fn pct_text(p: Option<Percent>) -> String {
    p.map_or_else(|| "n/a".to_string(), |p| p.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketSpec {
    edges: Vec<u64>,
}

impl Default for BucketSpec {
    fn default() -> Self {
        BucketSpec {
            edges: vec![1, 10, 100, 1_000, 10_000, 50_000, 100_000],
        }
    }
}

impl BucketSpec {
    pub fn new(edges: Vec<u64>) -> Result<Self, AnalyticsError> {
        if edges.first() != Some(&1) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AnalyticsError::InvalidBuckets);
        }
        Ok(BucketSpec { edges })
    }

    pub fn bucket_count(&self) -> usize {
        self.edges.len() + 1
    }

    /// Index of the bucket holding `x` (x >= 1).
    pub fn bucket_of(&self, x: u64) -> usize {
        self.edges.partition_point(|&e| e < x)
    }

    pub fn label(&self, idx: usize) -> String {
        if idx == 0 {
            format!("x = {}", self.edges[0])
        } else if idx < self.edges.len() {
            format!("{} < x <= {}", self.edges[idx - 1], self.edges[idx])
        } else {
            format!("x > {}", self.edges[self.edges.len() - 1])
        }
    }

    fn bounds(&self, idx: usize) -> (Option<u64>, Option<u64>) {
        if idx == 0 {
            (None, Some(self.edges[0]))
        } else if idx < self.edges.len() {
            (Some(self.edges[idx - 1]), Some(self.edges[idx]))
        } else {
            (Some(self.edges[self.edges.len() - 1]), None)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub interval: String,
    /// Exclusive lower bound.
    pub lower: Option<u64>,
    /// Inclusive upper bound.
    pub upper: Option<u64>,
    pub count: u64,
    pub percentage: Option<Percent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub rows: Vec<DistributionRow>,
    pub total_items: u64,
}

impl DistributionReport {
    fn from_counts<I>(counts: I, spec: &BucketSpec) -> Self
    where
        I: IntoIterator<Item = u64>,
    {
        let mut tally = vec![0u64; spec.bucket_count()];
        let mut total = 0;
        for c in counts {
            tally[spec.bucket_of(c)] += 1;
            total += 1;
        }
        let rows = if total == 0 {
            Vec::new()
        } else {
            tally
                .iter()
                .enumerate()
                .map(|(i, &count)| {
                    let (lower, upper) = spec.bounds(i);
                    DistributionRow {
                        interval: spec.label(i),
                        lower,
                        upper,
                        count,
                        percentage: Percent::of(count, total),
                    }
                })
                .collect()
        };
        DistributionReport {
            rows,
            total_items: total,
        }
    }

    pub fn row(&self, interval: &str) -> Option<&DistributionRow> {
        self.rows.iter().find(|r| r.interval == interval)
    }

    pub fn to_tsv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| vec![r.interval.clone(), r.count.to_string(), pct_text(r.percentage)])
            .collect();
        tsv(&["interval", "count", "percentage"], &rows)
    }

    pub fn render_table(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| vec![r.interval.clone(), r.count.to_string(), pct_text(r.percentage)])
            .collect();
        let mut out = table(&["Interval", "Count", "Percentage"], &rows);
        out.push_str(&format!("total: {}\n", self.total_items));
        out
    }
}

pub fn usage_histogram<'a, I>(stats: I, spec: &BucketSpec) -> Result<DistributionReport, AnalyticsError>
where
    I: IntoIterator<Item = (&'a str, u64)>,
{
    let mut counts = Vec::new();
    for (name, count) in stats {
        if count == 0 {
            return Err(AnalyticsError::InvalidCount(name.to_string()));
        }
        counts.push(count);
    }
    Ok(DistributionReport::from_counts(counts, spec))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedRow {
    pub rank: usize,
    pub name: String,
    pub count: u64,
    pub percentage: Option<Percent>,
}

fn ranked<'a, I>(items: I, k: usize, total: u64) -> Vec<RankedRow>
where
    I: IntoIterator<Item = (&'a str, u64)>,
{
    let mut rows: Vec<(&str, u64)> = items.into_iter().collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    rows.into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (name, count))| RankedRow {
            rank: i + 1,
            name: name.to_string(),
            count,
            percentage: Percent::of(count, total),
        })
        .collect()
}

/// Most used packages with their share of all scanned scripts.
pub fn top_k_usage<'a, I>(stats: I, k: usize, total_scripts: u64) -> Result<Vec<RankedRow>, AnalyticsError>
where
    I: IntoIterator<Item = (&'a str, u64)>,
{
    let items: Vec<(&str, u64)> = stats.into_iter().collect();
    let max = items.iter().map(|(_, c)| *c).max().unwrap_or(0);
    if total_scripts < max {
        return Err(AnalyticsError::InconsistentTotals {
            total: total_scripts,
            max,
        });
    }
    Ok(ranked(items, k, total_scripts))
}

pub fn ranked_tsv(name_header: &str, rows: &[RankedRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.rank.to_string(), r.name.clone(), r.count.to_string(), pct_text(r.percentage)])
        .collect();
    tsv(&["rank", name_header, "count", "percentage"], &body)
}

pub fn ranked_table(name_header: &str, rows: &[RankedRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.rank.to_string(), r.name.clone(), r.count.to_string(), pct_text(r.percentage)])
        .collect();
    table(&["Rank", name_header, "Count", "Percentage"], &body)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvailabilitySplit {
    pub registry: u64,
    pub non_registry: u64,
    pub registry_percentage: Option<Percent>,
    pub non_registry_percentage: Option<Percent>,
}

impl AvailabilitySplit {
    pub fn to_tsv(&self) -> String {
        tsv(&["availability", "count", "percentage"], &self.rows())
    }

    pub fn render_table(&self) -> String {
        table(&["Availability", "Count", "Percentage"], &self.rows())
    }

    fn rows(&self) -> Vec<Vec<String>> {
        vec![
            vec!["registry".into(), self.registry.to_string(), pct_text(self.registry_percentage)],
            vec![
                "non_registry".into(),
                self.non_registry.to_string(),
                pct_text(self.non_registry_percentage),
            ],
        ]
    }
}

/// Partition of distinct packages. A package listed more than once counts
/// as available if any entry says so.
pub fn availability_split<'a, I>(items: I) -> AvailabilitySplit
where
    I: IntoIterator<Item = (&'a str, bool)>,
{
    let mut seen: BTreeMap<&str, bool> = BTreeMap::new();
    for (name, available) in items {
        *seen.entry(name).or_default() |= available;
    }
    let registry = seen.values().filter(|a| **a).count() as u64;
    let total = seen.len() as u64;
    AvailabilitySplit {
        registry,
        non_registry: total - registry,
        registry_percentage: Percent::of(registry, total),
        non_registry_percentage: Percent::of(total - registry, total),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordReport {
    pub distribution: DistributionReport,
    pub top: Vec<RankedRow>,
    pub total_occurrences: u64,
}

/// Occurrence-count distribution of keywords and the top-k keywords by
/// share of all occurrences.
pub fn keyword_frequency<I, S>(keywords: I, spec: &BucketSpec, k: usize) -> KeywordReport
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut total = 0;
    for kw in keywords {
        *counts.entry(kw.as_ref().to_string()).or_default() += 1;
        total += 1;
    }
    let distribution = DistributionReport::from_counts(counts.values().copied(), spec);
    let top = ranked(counts.iter().map(|(k, v)| (k.as_str(), *v)), k, total);
    KeywordReport {
        distribution,
        top,
        total_occurrences: total,
    }
}

pub fn tsv(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = headers.join("\t");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join("\t"));
        out.push('\n');
    }
    out
}

/// Fixed-width table; the first column is left-aligned, the rest right-aligned.
pub fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (i, cell) in r.iter().enumerate() {
            if i < widths.len() {
                widths[i] = widths[i].max(cell.chars().count());
            }
        }
    }
    let fmt_row = |cells: Vec<&str>| {
        let mut line = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            if i == 0 {
                line.push_str(&format!("{cell:<w$}", w = widths[i]));
            } else {
                line.push_str(&format!("{cell:>w$}", w = widths[i]));
            }
        }
        line.trim_end().to_string() + "\n"
    };
    let mut out = fmt_row(headers.to_vec());
    let rule: usize = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
    out.push_str(&"-".repeat(rule));
    out.push('\n');
    for r in rows {
        out.push_str(&fmt_row(r.iter().map(String::as_str).collect()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn histogram_example() {
        let stats = [("a", 1), ("b", 1), ("c", 5), ("d", 500)];
        let rep = usage_histogram(stats, &BucketSpec::default()).unwrap();
        assert_eq!(rep.total_items, 4);
        assert_eq!(rep.rows.len(), 8);
        let row = |l: &str| rep.row(l).unwrap();
        assert_eq!(row("x = 1").count, 2);
        assert_eq!(row("x = 1").percentage.unwrap().to_string(), "50.00%");
        assert_eq!(row("1 < x <= 10").count, 1);
        assert_eq!(row("100 < x <= 1000").count, 1);
        assert_eq!(row("10 < x <= 100").count, 0);
        assert_eq!(row("x > 100000").count, 0);
    }

    #[test]
    fn histogram_edges_and_errors() {
        let spec = BucketSpec::default();
        assert_eq!(spec.bucket_of(10), 1);
        assert_eq!(spec.bucket_of(11), 2);
        assert_eq!(spec.bucket_of(100_000), 6);
        assert_eq!(spec.bucket_of(100_001), 7);
        let empty = usage_histogram(Vec::<(&str, u64)>::new(), &spec).unwrap();
        assert_eq!(empty.total_items, 0);
        assert!(empty.rows.is_empty());
        assert_eq!(
            usage_histogram([("z", 0)], &spec),
            Err(AnalyticsError::InvalidCount("z".into()))
        );
        assert!(BucketSpec::new(vec![1, 5, 5]).is_err());
        assert!(BucketSpec::new(vec![2, 5]).is_err());
    }

    #[test]
    fn printed_ratios() {
        assert_eq!(Percent::of(179_815, 798_669).unwrap().to_string(), "22.51%");
        assert_eq!(Percent::of(133_263, 798_669).unwrap().to_string(), "16.69%");
        assert_eq!(Percent::of(18_466, 39_841).unwrap().to_string(), "46.35%");
        assert_eq!(Percent::of(21_375, 39_841).unwrap().to_string(), "53.65%");
        assert_eq!(Percent::of(4_104, 279_563).unwrap().to_string(), "1.47%");
        assert_eq!(Percent::of(1, 1).unwrap().to_string(), "100.00%");
        // half-up at exactly .5 hundredths
        assert_eq!(Percent::of(1, 8).unwrap().to_string(), "12.50%");
        assert_eq!(Percent::of(1, 1600).unwrap().to_string(), "0.06%");
    }

    #[test]
    fn top_k_rows() {
        let rows = top_k_usage([("numpy", 179_815), ("typing", 133_263)], 10, 798_669).unwrap();
        assert_eq!(rows[0].name, "numpy");
        assert_eq!(rows[0].percentage.unwrap().to_string(), "22.51%");
        assert_eq!(rows[1].percentage.unwrap().to_string(), "16.69%");
        assert_eq!(
            top_k_usage([("a", 5)], 1, 4),
            Err(AnalyticsError::InconsistentTotals { total: 4, max: 5 })
        );
        let ties = top_k_usage([("b", 2), ("a", 2), ("c", 3)], 2, 10).unwrap();
        assert_eq!(ties.iter().map(|r| r.name.as_str()).collect::<Vec<_>>(), ["c", "a"]);
    }

    #[test]
    fn availability() {
        let mut items: Vec<(String, bool)> = (0..18_466).map(|i| (format!("r{i}"), true)).collect();
        items.extend((0..21_375).map(|i| (format!("n{i}"), false)));
        let split = availability_split(items.iter().map(|(n, a)| (n.as_str(), *a)));
        assert_eq!(split.registry, 18_466);
        assert_eq!(split.registry_percentage.unwrap().to_string(), "46.35%");
        assert_eq!(split.non_registry_percentage.unwrap().to_string(), "53.65%");

        let all = availability_split([("a", true), ("b", true)]);
        assert_eq!(all.non_registry_percentage.unwrap().to_string(), "0.00%");
        let none = availability_split(Vec::<(&str, bool)>::new());
        assert_eq!((none.registry, none.non_registry), (0, 0));
        assert!(none.to_tsv().contains("n/a"));
    }

    #[test]
    fn keywords() {
        let spec = BucketSpec::default();
        let rep = keyword_frequency(["a", "b", "c"], &spec, 10);
        assert_eq!(rep.distribution.row("x = 1").unwrap().percentage.unwrap().to_string(), "100.00%");
        let rep = keyword_frequency(["a", "a", "a", "b", "b", "b"], &spec, 10);
        assert_eq!(rep.distribution.row("1 < x <= 10").unwrap().count, 2);
        assert_eq!(rep.top[0].percentage.unwrap().to_string(), "50.00%");
    }

    #[test]
    fn rendering() {
        let rep = usage_histogram([("a", 1)], &BucketSpec::default()).unwrap();
        let tsv = rep.to_tsv();
        assert!(tsv.starts_with("interval\tcount\tpercentage\nx = 1\t1\t100.00%\n"));
        assert_eq!(tsv.lines().count(), 9);
        let table = rep.render_table();
        assert!(table.lines().nth(1).unwrap().starts_with("---"));
    }

    proptest! {
        #[test]
        fn partition_and_rounding(counts in proptest::collection::vec(1u64..200_000, 1..300)) {
            let names: Vec<String> = (0..counts.len()).map(|i| format!("p{i}")).collect();
            let rep = usage_histogram(
                names.iter().map(String::as_str).zip(counts.iter().copied()),
                &BucketSpec::default(),
            ).unwrap();
            let sum: u64 = rep.rows.iter().map(|r| r.count).sum();
            prop_assert_eq!(sum, counts.len() as u64);
            let pct: i64 = rep.rows.iter().map(|r| r.percentage.unwrap().hundredths() as i64).sum();
            prop_assert!((pct - 10_000).abs() <= rep.rows.len() as i64);
        }
    }
}
