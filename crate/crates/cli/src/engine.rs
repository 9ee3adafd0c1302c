//! Query-side operations over one sealed snapshot, shared by the CLI and
//! the HTTP service so both produce identical rankings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use pkgraph_core::analytics::{usage_histogram, BucketSpec, DistributionReport};
use pkgraph_core::annotate::{extract_intent_terms, AnnotateError, BaselineAnnotator};
use pkgraph_core::graph::{
    normalize_name, KnowledgeGraph, MetadataRecord, QualityAttribute, TopicKind, UsageStat, VulnerabilityRecord,
};
use pkgraph_core::infer::{
    build_query, recommend, Coefficients, Constraints, EmptyDiagnostics, InferError, QueryOptions, Ranking,
    RankingConfig, Recommendation, StructuredQuery,
};
use pkgraph_core::quality::{band, QualityBand};
use pkgraph_core::{Execution, SNAPSHOT_VERSION};
use serde::{Deserialize, Serialize};

pub const MAX_K: usize = 100;
pub const MAX_STORY_CHARS: usize = 10_000;
pub const MAX_COMPARE: usize = 10;

fn default_k() -> usize {
    10
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Filters {
    pub exclude_vulnerable: bool,
    pub min_quality: Option<f64>,
    pub required_attributes: BTreeSet<QualityAttribute>,
    pub runtime_constraint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendRequest {
    pub story: String,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub filters: Filters,
    #[serde(default)]
    pub coefficients: Option<Coefficients>,
}

impl RecommendRequest {
    pub fn new(story: &str, k: usize) -> Self {
        RecommendRequest {
            story: story.to_string(),
            k,
            filters: Filters::default(),
            coefficients: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendResponse {
    pub recommendations: Vec<Recommendation>,
    pub query_echo: StructuredQuery,
    pub graph_build_timestamp: Option<i64>,
    /// Wall-clock time of the response; the only field allowed to differ
    /// between identical requests.
    pub served_at: i64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ServiceError {
    #[error("{0}")]
    BadRequest(String),
    #[error("unknown package {0}")]
    NotFound(String),
    #[error("the story contains no usable intent terms")]
    EmptyIntent,
    #[error("no package satisfies the query")]
    EmptyResult {
        query_echo: Box<StructuredQuery>,
        diagnostics: EmptyDiagnostics,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicView {
    pub term: String,
    pub kind: TopicKind,
    pub sources: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityView {
    pub attribute: QualityAttribute,
    pub score: Option<f64>,
    pub band: Option<QualityBand>,
    pub low: u64,
    pub medium: u64,
    pub high: u64,
    pub evidence: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackageDetail {
    pub name: String,
    pub display_name: String,
    pub registry_available: bool,
    pub metadata: Vec<MetadataRecord>,
    pub topics: Vec<TopicView>,
    pub vulnerabilities: Vec<VulnerabilityRecord>,
    pub unfixed_vulnerabilities: usize,
    pub quality: Vec<QualityView>,
    pub usage: Option<UsageStat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareRequest {
    pub names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareCell {
    pub score: Option<f64>,
    pub band: Option<QualityBand>,
    pub evidence_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub attribute: QualityAttribute,
    /// One cell per package, in request order.
    pub cells: Vec<CompareCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackageOverview {
    pub name: String,
    pub latest_version: Option<String>,
    pub unfixed_vulnerabilities: usize,
    pub script_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareMatrix {
    pub packages: Vec<PackageOverview>,
    pub rows: Vec<CompareRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub snapshot_version: String,
    pub graph_build_timestamp: Option<i64>,
    pub packages: usize,
}

pub struct Engine {
    graph: KnowledgeGraph,
    annotator: BaselineAnnotator,
    ranking: RankingConfig,
    execution: Execution,
}

impl Engine {
    pub fn new(graph: KnowledgeGraph, ranking: RankingConfig) -> Result<Engine, String> {
        if !graph.is_sealed() {
            return Err("graph is not sealed".into());
        }
        ranking.validate().map_err(|e| e.to_string())?;
        Ok(Engine {
            graph,
            annotator: BaselineAnnotator::default(),
            ranking,
            execution: Execution::default(),
        })
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn graph(&self) -> &KnowledgeGraph {
        &self.graph
    }

    pub fn query_for(&self, req: &RecommendRequest) -> Result<StructuredQuery, ServiceError> {
        if req.story.chars().count() > MAX_STORY_CHARS {
            return Err(ServiceError::BadRequest(format!("story exceeds {MAX_STORY_CHARS} characters")));
        }
        if !(1..=MAX_K).contains(&req.k) {
            return Err(ServiceError::BadRequest(format!("k must be between 1 and {MAX_K}, got {}", req.k)));
        }
        if let Some(q) = req.filters.min_quality {
            if !(0.0..=1.0).contains(&q) {
                return Err(ServiceError::BadRequest(format!("min_quality {q} outside [0, 1]")));
            }
        }
        let terms = match extract_intent_terms(&self.annotator, &req.story) {
            Ok(t) => t,
            Err(AnnotateError::EmptyIntent | AnnotateError::InvalidInput(_)) => return Err(ServiceError::EmptyIntent),
            Err(e) => return Err(ServiceError::BadRequest(e.to_string())),
        };
        let options = QueryOptions {
            k: req.k,
            constraints: Constraints {
                exclude_vulnerable: req.filters.exclude_vulnerable,
                min_quality: req.filters.min_quality,
                runtime_constraint: req.filters.runtime_constraint.clone(),
            },
            required_attributes: req.filters.required_attributes.clone(),
        };
        build_query(&terms, self.annotator.quality_table(), options).map_err(infer_error)
    }

    pub fn recommend(&self, req: &RecommendRequest, served_at: i64) -> Result<RecommendResponse, ServiceError> {
        let query = self.query_for(req)?;
        let mut cfg = self.ranking;
        if let Some(c) = req.coefficients {
            c.validate().map_err(|e| ServiceError::BadRequest(e.to_string()))?;
            cfg.coefficients = c;
        }
        match recommend(&query, &self.graph, &cfg, self.execution).map_err(infer_error)? {
            Ranking::Ranked { results } => Ok(RecommendResponse {
                recommendations: results,
                query_echo: query,
                graph_build_timestamp: self.graph.build_timestamp(),
                served_at,
            }),
            Ranking::EmptyResult { diagnostics } => Err(ServiceError::EmptyResult {
                query_echo: Box::new(query),
                diagnostics,
            }),
        }
    }

    fn resolve(&self, raw: &str) -> Result<String, ServiceError> {
        let name = normalize_name(raw).map_err(|_| ServiceError::NotFound(raw.to_string()))?;
        if self.graph.package(&name).is_none() {
            return Err(ServiceError::NotFound(name));
        }
        Ok(name)
    }

    pub fn package(&self, raw: &str) -> Result<PackageDetail, ServiceError> {
        let name = self.resolve(raw)?;
        let node = self.graph.package(&name).expect("resolved");
        let quality = self
            .graph
            .quality_of(&name)
            .map(|q| {
                let score = q.score();
                QualityView {
                    attribute: q.attribute,
                    score,
                    band: score.map(band),
                    low: q.count_l,
                    medium: q.count_m,
                    high: q.count_h,
                    evidence: q.evidence.iter().cloned().collect(),
                }
            })
            .collect();
        Ok(PackageDetail {
            name: name.clone(),
            display_name: node.display_name.clone(),
            registry_available: node.registry_available,
            metadata: self.graph.metadata_of(&name).cloned().collect(),
            topics: self
                .graph
                .topics_of(&name)
                .map(|(k, s)| TopicView {
                    term: k.term.clone(),
                    kind: k.kind,
                    sources: s.iter().cloned().collect(),
                })
                .collect(),
            vulnerabilities: self.graph.vulnerabilities_of(&name).cloned().collect(),
            unfixed_vulnerabilities: self.graph.unfixed_vulnerability_count(&name),
            quality,
            usage: self.graph.usage(&name),
        })
    }

    pub fn compare(&self, req: &CompareRequest) -> Result<CompareMatrix, ServiceError> {
        if req.names.is_empty() || req.names.len() > MAX_COMPARE {
            return Err(ServiceError::BadRequest(format!("names must list 1 to {MAX_COMPARE} packages")));
        }
        let mut names = Vec::new();
        for raw in &req.names {
            let n = self.resolve(raw)?;
            if names.contains(&n) {
                return Err(ServiceError::BadRequest(format!("{n} listed twice")));
            }
            names.push(n);
        }
        let rows = QualityAttribute::ALL
            .into_iter()
            .map(|attribute| CompareRow {
                attribute,
                cells: names
                    .iter()
                    .map(|n| {
                        let q = self.graph.quality_score(n, attribute);
                        let score = q.and_then(|q| q.score());
                        CompareCell {
                            score,
                            band: score.map(band),
                            evidence_count: q.map_or(0, |q| q.evidence.len()),
                        }
                    })
                    .collect(),
            })
            .collect();
        let packages = names
            .iter()
            .map(|n| PackageOverview {
                name: n.clone(),
                latest_version: self.graph.latest_metadata(n).map(|m| m.version.clone()),
                unfixed_vulnerabilities: self.graph.unfixed_vulnerability_count(n),
                script_count: self.graph.usage(n).map_or(0, |u| u.script_count),
            })
            .collect();
        Ok(CompareMatrix { packages, rows })
    }

    pub fn usage_report(&self) -> DistributionReport {
        usage_histogram(
            self.graph.usage_stats().filter(|(_, u)| u.script_count > 0).map(|(n, u)| (n, u.script_count)),
            &BucketSpec::default(),
        )
        .expect("zero counts are filtered")
    }

    pub fn health(&self) -> Health {
        Health {
            status: "ok".into(),
            snapshot_version: SNAPSHOT_VERSION.into(),
            graph_build_timestamp: self.graph.build_timestamp(),
            packages: self.graph.package_count(),
        }
    }
}

fn infer_error(e: InferError) -> ServiceError {
    match e {
        InferError::EmptyIntent => ServiceError::EmptyIntent,
        InferError::UnknownPackage(p) => ServiceError::NotFound(p),
        other => ServiceError::BadRequest(other.to_string()),
    }
}

/// Fixed-width ranking table printed by `recommend`.
pub fn ranking_table(recs: &[Recommendation]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>4}  {:<24} {:>7} {:>6} {:>6} {:>6} {:>6}  matched",
        "rank", "package", "total", "T", "Q", "U", "V"
    );
    for (i, r) in recs.iter().enumerate() {
        let matched: Vec<String> = r.matched_terms.iter().map(|m| format!("{} ({})", m.term, m.kind.as_str())).collect();
        let _ = writeln!(
            out,
            "{:>4}  {:<24} {:>7.4} {:>6.3} {:>6.3} {:>6.3} {:>6.3}  {}",
            i + 1,
            r.package,
            r.total,
            r.components.topical,
            r.components.quality,
            r.components.usage,
            r.components.vulnerability_penalty,
            matched.join(", ")
        );
    }
    out
}

/// Per-kind occurrence list of developer-defined keywords, one entry per
/// (package, keyword) pair.
pub fn developer_keywords(graph: &KnowledgeGraph) -> Vec<String> {
    let mut out = Vec::new();
    for p in graph.packages() {
        let terms: BTreeMap<&str, ()> = graph
            .topics_of(&p.name)
            .filter(|(k, _)| k.kind == TopicKind::DeveloperDefined)
            .map(|(k, _)| (k.term.as_str(), ()))
            .collect();
        out.extend(terms.into_keys().map(str::to_string));
    }
    out
}
