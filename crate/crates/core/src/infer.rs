//! Query construction and multi-criteria ranking over a sealed graph.
//!
//! `total = max(0, α·T + β·Q + γ·U − δ·V)` where T is topical fit, Q the
//! quality evidence, U log-normalized usage and V the vulnerability penalty.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::annotate::{KeywordTable, WeightedTerm};
use crate::exec::Execution;
use crate::graph::{normalize_name, normalize_term, GraphError, KnowledgeGraph, QualityAttribute, TopicKind, TopicMatch};
use crate::version;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum InferError {
    #[error("no intent terms or quality attributes in the query")]
    EmptyIntent,
    #[error("unknown package {0}")]
    UnknownPackage(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficients {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl Default for Coefficients {
    fn default() -> Self {
        Coefficients {
            alpha: 0.5,
            beta: 0.2,
            gamma: 0.2,
            delta: 0.3,
        }
    }
}

impl Coefficients {
    pub fn validate(&self) -> Result<(), InferError> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma), ("delta", self.delta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(InferError::InvalidConfig(format!("{name} must be a non-negative number, got {v}")));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Coefficients {
            alpha: self.alpha * c,
            beta: self.beta * c,
            gamma: self.gamma * c,
            delta: self.delta * c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KindWeights {
    pub developer_defined: f64,
    pub user_defined: f64,
    pub taxonomy: f64,
}

impl Default for KindWeights {
    fn default() -> Self {
        KindWeights {
            developer_defined: 1.0,
            user_defined: 0.8,
            taxonomy: 0.6,
        }
    }
}

impl KindWeights {
    pub fn of(&self, kind: TopicKind) -> f64 {
        match kind {
            TopicKind::DeveloperDefined => self.developer_defined,
            TopicKind::UserDefined => self.user_defined,
            TopicKind::Taxonomy => self.taxonomy,
        }
    }

    pub fn max(&self) -> f64 {
        self.developer_defined.max(self.user_defined).max(self.taxonomy)
    }

    pub fn validate(&self) -> Result<(), InferError> {
        let all = [self.developer_defined, self.user_defined, self.taxonomy];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || self.max() <= 0.0 {
            return Err(InferError::InvalidConfig(
                "kind weights must be non-negative with a positive maximum".into(),
            ));
        }
        Ok(())
    }
}

/// Everything the scorer is tunable by.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankingConfig {
    pub coefficients: Coefficients,
    pub kind_weights: KindWeights,
}

impl RankingConfig {
    pub fn validate(&self) -> Result<(), InferError> {
        self.coefficients.validate()?;
        self.kind_weights.validate()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    pub exclude_vulnerable: bool,
    pub min_quality: Option<f64>,
    /// Runtime version the caller deploys on, checked against each
    /// package's declared runtime requirement.
    pub runtime_constraint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredQuery {
    pub terms: Vec<WeightedTerm>,
    pub required_attributes: BTreeSet<QualityAttribute>,
    pub constraints: Constraints,
    pub k: usize,
}

impl StructuredQuery {
    pub fn validate(&self) -> Result<(), InferError> {
        if self.k == 0 {
            return Err(InferError::InvalidQuery("k must be at least 1".into()));
        }
        if let Some(q) = self.constraints.min_quality {
            if !(0.0..=1.0).contains(&q) {
                return Err(InferError::InvalidQuery(format!("min_quality {q} outside [0, 1]")));
            }
        }
        if let Some(t) = self.terms.iter().find(|t| !(t.weight.is_finite() && t.weight >= 0.0)) {
            return Err(InferError::InvalidQuery(format!("term {:?} has invalid weight {}", t.term, t.weight)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOptions {
    pub k: usize,
    pub constraints: Constraints,
    /// Attributes requested explicitly, in addition to those lifted from terms.
    pub required_attributes: BTreeSet<QualityAttribute>,
}

impl Default for QueryOptions {
    fn default() -> Self {
        QueryOptions {
            k: 10,
            constraints: Constraints::default(),
            required_attributes: BTreeSet::new(),
        }
    }
}

/// Normalizes and deduplicates intent terms (highest weight wins) and lifts
/// leading quality-attribute words ("secure", "fast", ...) out of each term
/// into `required_attributes`.
pub fn build_query(
    intent_terms: &[WeightedTerm],
    keywords: &KeywordTable<QualityAttribute>,
    options: QueryOptions,
) -> Result<StructuredQuery, InferError> {
    let mut required = options.required_attributes;
    let mut weights: BTreeMap<String, f64> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for wt in intent_terms {
        let normalized = normalize_term(&wt.term);
        let mut tokens: Vec<String> = normalized.split(' ').filter(|t| !t.is_empty()).map(String::from).collect();
        while let Some((len, attr)) = keywords.prefix_match(&tokens) {
            required.insert(*attr);
            tokens.drain(..len);
        }
        if tokens.is_empty() {
            continue;
        }
        let term = tokens.join(" ");
        match weights.get_mut(&term) {
            Some(w) => *w = w.max(wt.weight),
            None => {
                weights.insert(term.clone(), wt.weight);
                order.push(term);
            }
        }
    }
    if order.is_empty() && required.is_empty() {
        return Err(InferError::EmptyIntent);
    }
    let query = StructuredQuery {
        terms: order
            .into_iter()
            .map(|t| {
                let w = weights[&t];
                WeightedTerm { term: t, weight: w }
            })
            .collect(),
        required_attributes: required,
        constraints: options.constraints,
        k: options.k,
    };
    query.validate()?;
    Ok(query)
}

fn best_matches(package: &str, query: &StructuredQuery, graph: &KnowledgeGraph, kw: &KindWeights) -> Vec<(usize, TopicKind)> {
    let mut kinds_by_term: BTreeMap<&str, Vec<TopicKind>> = BTreeMap::new();
    for (key, _) in graph.topics_of(package) {
        kinds_by_term.entry(key.term.as_str()).or_default().push(key.kind);
    }
    query
        .terms
        .iter()
        .enumerate()
        .filter_map(|(i, t)| {
            let kinds = kinds_by_term.get(t.term.as_str())?;
            kinds
                .iter()
                .copied()
                .max_by(|a, b| kw.of(*a).total_cmp(&kw.of(*b)).then_with(|| b.cmp(a)))
                .map(|k| (i, k))
        })
        .collect()
}

/// Weighted share of query terms the package's topics cover, each term
/// credited once at its best-matching kind.
pub fn topical_score(package: &str, query: &StructuredQuery, graph: &KnowledgeGraph, kw: &KindWeights) -> f64 {
    let denom: f64 = query.terms.iter().map(|t| t.weight).sum::<f64>() * kw.max();
    if denom <= 0.0 {
        return 0.0;
    }
    let num: f64 = best_matches(package, query, graph, kw)
        .into_iter()
        .map(|(i, kind)| query.terms[i].weight * kw.of(kind))
        .sum();
    (num / denom).clamp(0.0, 1.0)
}

/// Neutral value used when there is no quality evidence.
pub const QUALITY_PRIOR: f64 = 0.5;
/// Penalty per unfixed vulnerability, saturating at 1.
pub const PENALTY_PER_VULNERABILITY: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Components {
    pub topical: f64,
    pub quality: f64,
    pub usage: f64,
    pub vulnerability_penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeInput {
    pub attribute: QualityAttribute,
    /// `None` when no evidence exists and the prior was used.
    pub score: Option<f64>,
}

/// The raw values each component was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreInputs {
    pub script_count: u64,
    pub max_script_count: u64,
    pub unfixed_vulnerabilities: Vec<String>,
    pub quality: Vec<AttributeInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub package: String,
    pub total: f64,
    pub components: Components,
    pub coefficients: Coefficients,
    pub matched_terms: Vec<TopicMatch>,
    pub evidence_links: Vec<String>,
    pub inputs: ScoreInputs,
}

fn quality_component(package: &str, query: &StructuredQuery, graph: &KnowledgeGraph) -> (f64, Vec<AttributeInput>) {
    if query.required_attributes.is_empty() {
        let inputs: Vec<AttributeInput> = graph
            .quality_of(package)
            .filter_map(|q| q.score().map(|s| AttributeInput { attribute: q.attribute, score: Some(s) }))
            .collect();
        let q = if inputs.is_empty() {
            QUALITY_PRIOR
        } else {
            inputs.iter().filter_map(|i| i.score).sum::<f64>() / inputs.len() as f64
        };
        return (q, inputs);
    }
    let inputs: Vec<AttributeInput> = query
        .required_attributes
        .iter()
        .map(|&attribute| AttributeInput {
            attribute,
            score: graph.quality_score(package, attribute).and_then(|q| q.score()),
        })
        .collect();
    let q = inputs.iter().map(|i| i.score.unwrap_or(QUALITY_PRIOR)).sum::<f64>() / inputs.len() as f64;
    (q, inputs)
}

pub fn score(
    package: &str,
    query: &StructuredQuery,
    graph: &KnowledgeGraph,
    config: &RankingConfig,
) -> Result<Recommendation, InferError> {
    let name = normalize_name(package).map_err(|_| InferError::UnknownPackage(package.to_string()))?;
    if graph.package(&name).is_none() {
        return Err(InferError::UnknownPackage(package.to_string()));
    }
    let kw = &config.kind_weights;
    let c = config.coefficients;

    let matches = best_matches(&name, query, graph, kw);
    let topical = topical_score(&name, query, graph, kw);
    let (quality, quality_inputs) = quality_component(&name, query, graph);

    let script_count = graph.usage(&name).map_or(0, |u| u.script_count);
    let max_script_count = graph.max_script_count();
    let usage = if max_script_count == 0 {
        0.0
    } else {
        ((1.0 + script_count as f64).ln() / (1.0 + max_script_count as f64).ln()).clamp(0.0, 1.0)
    };

    let unfixed: Vec<String> = graph
        .vulnerabilities_of(&name)
        .filter(|v| !v.fixed)
        .map(|v| v.id.clone())
        .collect();
    let penalty = (PENALTY_PER_VULNERABILITY * unfixed.len() as f64).min(1.0);

    let total = (c.alpha * topical + c.beta * quality + c.gamma * usage - c.delta * penalty).max(0.0);

    let matched_terms: Vec<TopicMatch> = matches
        .iter()
        .map(|&(i, kind)| TopicMatch { term: query.terms[i].term.clone(), kind })
        .collect();
    let mut links: BTreeSet<String> = BTreeSet::new();
    for (key, sources) in graph.topics_of(&name) {
        if matched_terms.iter().any(|m| m.term == key.term && m.kind == key.kind) {
            links.extend(sources.iter().cloned());
        }
    }
    links.extend(unfixed.iter().cloned());
    for q in graph.quality_of(&name) {
        if query.required_attributes.is_empty() || query.required_attributes.contains(&q.attribute) {
            links.extend(q.evidence.iter().cloned());
        }
    }

    Ok(Recommendation {
        package: name,
        total,
        components: Components {
            topical,
            quality,
            usage,
            vulnerability_penalty: penalty,
        },
        coefficients: c,
        matched_terms,
        evidence_links: links.into_iter().collect(),
        inputs: ScoreInputs {
            script_count,
            max_script_count,
            unfixed_vulnerabilities: unfixed,
            quality: quality_inputs,
        },
    })
}

/// Why a query produced no results.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmptyDiagnostics {
    pub candidates: usize,
    pub removed_vulnerable: usize,
    pub removed_min_quality: usize,
    pub removed_runtime: usize,
    /// Query terms no package topic matched.
    pub unmatched_terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Ranking {
    Ranked { results: Vec<Recommendation> },
    EmptyResult { diagnostics: EmptyDiagnostics },
}

impl Ranking {
    pub fn results(&self) -> &[Recommendation] {
        match self {
            Ranking::Ranked { results } => results,
            Ranking::EmptyResult { .. } => &[],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.results().is_empty()
    }
}

fn runtime_ok(graph: &KnowledgeGraph, package: &str, runtime: &str) -> bool {
    match graph.latest_metadata(package) {
        Some(m) if !m.requires_runtime.trim().is_empty() => version::satisfies(&m.requires_runtime, runtime),
        _ => true,
    }
}

fn order(a: &Recommendation, b: &Recommendation) -> Ordering {
    b.total.total_cmp(&a.total).then_with(|| a.package.cmp(&b.package))
}

pub fn recommend(
    query: &StructuredQuery,
    graph: &KnowledgeGraph,
    config: &RankingConfig,
    execution: Execution,
) -> Result<Ranking, InferError> {
    query.validate()?;
    config.validate()?;
    let candidates: Vec<String> = if query.terms.is_empty() {
        graph.packages().map(|p| p.name.clone()).collect()
    } else {
        graph
            .packages_by_topic(query.terms.iter().map(|t| t.term.as_str()))?
            .into_iter()
            .map(|h| h.package)
            .collect()
    };
    let mut diag = EmptyDiagnostics {
        candidates: candidates.len(),
        ..Default::default()
    };

    let scored = execution.map(&candidates, |p| score(p, query, graph, config));
    let mut kept = Vec::with_capacity(scored.len());
    for rec in scored {
        let rec = rec?;
        if query.constraints.exclude_vulnerable && !rec.inputs.unfixed_vulnerabilities.is_empty() {
            diag.removed_vulnerable += 1;
            continue;
        }
        if let Some(min) = query.constraints.min_quality {
            if rec.components.quality < min {
                diag.removed_min_quality += 1;
                continue;
            }
        }
        if let Some(rt) = &query.constraints.runtime_constraint {
            if !runtime_ok(graph, &rec.package, rt) {
                diag.removed_runtime += 1;
                continue;
            }
        }
        kept.push(rec);
    }
    if kept.is_empty() {
        let matched: BTreeSet<String> = graph
            .packages_by_topic(query.terms.iter().map(|t| t.term.as_str()))?
            .into_iter()
            .flat_map(|h| h.matches.into_iter().map(|m| m.term))
            .collect();
        diag.unmatched_terms = query
            .terms
            .iter()
            .filter(|t| !matched.contains(&t.term))
            .map(|t| t.term.clone())
            .collect();
        tracing::debug!(?diag, "query produced no results");
        return Ok(Ranking::EmptyResult { diagnostics: diag });
    }
    kept.sort_by(order);
    kept.truncate(query.k);
    Ok(Ranking::Ranked { results: kept })
}
