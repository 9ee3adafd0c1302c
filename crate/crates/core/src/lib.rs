//! Knowledge-graph based recommendation of third-party Python packages.
//!
//! The crate covers the offline half of the system: import extraction and
//! corpus scanning, sentiment annotation and fuzzy quality aggregation, the
//! sealed knowledge graph with snapshot persistence, the ranking engine,
//! distribution analytics and the evaluation statistics.

pub mod analytics;
pub mod annotate;
pub mod data;
pub mod evaluation;
pub mod exec;
pub mod graph;
pub mod imports;
pub mod infer;
pub mod quality;
pub mod scan;
pub mod snapshot;
pub mod synth;
pub mod version;

pub use exec::Execution;
pub use graph::{
    normalize_name, normalize_term, GraphError, KnowledgeGraph, MetadataRecord, Origin, PackageName, PackageNode,
    QualityAttribute, QualityScore, Severity, Taxonomy, TopicKind, TopicLabel, UsageStat, VersionRange,
    VulnerabilityRecord,
};
pub use infer::{build_query, recommend, score, Coefficients, KindWeights, Ranking, RankingConfig, Recommendation, StructuredQuery};
pub use snapshot::{load_snapshot, save_snapshot, SnapshotError, SNAPSHOT_VERSION};
