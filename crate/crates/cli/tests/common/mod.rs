#![allow(dead_code)]

use std::path::{Path, PathBuf};

use pkgraph::config::IngestSettings;
use pkgraph::pipeline::{self, BuildOptions, IngestPlan, IngestSummary, Staging};
use pkgraph_core::{Execution, KnowledgeGraph};
use pkgraph_ingest::{Endpoints, FetchPolicy, Ingest};

pub const BUILD_TS: i64 = 1_717_300_000;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/trio/replay")
}

pub fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas/v1")
}

pub struct Trio {
    pub dir: tempfile::TempDir,
    pub graph: KnowledgeGraph,
    pub second_ingest: IngestSummary,
}

impl Trio {
    pub fn staging(&self) -> PathBuf {
        self.dir.path().join("staging")
    }
    pub fn scan(&self) -> PathBuf {
        self.dir.path().join("scan")
    }
}

/// Search, scan, package lookups, rescan and build, all from the replay
/// bundle.
pub fn build_trio() -> Trio {
    let dir = tempfile::tempdir().unwrap();
    let staging = dir.path().join("staging");
    let client = Ingest::replay(fixture_dir(), Endpoints::default(), FetchPolicy::default()).unwrap();
    let settings = IngestSettings::default();

    let search = IngestPlan { terms: vec!["web framework".into()], packages: vec![], settings: settings.clone() };
    pipeline::run_ingest(&client, &search, &staging).unwrap();
    let first = Staging::load(&staging).unwrap();
    let pass1 = pipeline::run_scan(&first.corpus_dir(), first.registry_names(), Execution::Sequential, true).unwrap();

    let lookups = IngestPlan { terms: vec![], packages: pipeline::packages_from_scan(&pass1), settings };
    let second_ingest = pipeline::run_ingest(&client, &lookups, &staging).unwrap();

    let staged = Staging::load(&staging).unwrap();
    let scan = pipeline::run_scan(&staged.corpus_dir(), staged.registry_names(), Execution::Sequential, true).unwrap();
    std::fs::create_dir_all(dir.path().join("scan")).unwrap();
    pipeline::write_scan(&scan, &dir.path().join("scan")).unwrap();
    let graph = pipeline::build_graph(&staged, Some(&scan), &BuildOptions { taxonomy: None, timestamp: BUILD_TS }).unwrap();
    Trio { dir, graph, second_ingest }
}

/// Hand-derived totals for the story "web framework" under default
/// coefficients (0.5, 0.2, 0.2, 0.3).
///
/// django: developer keyword (1.0), reviews give performance 1/2 and
/// reliability 1 so Q = 0.75, most used (U = 1), one open advisory (0.25).
/// selenium: user topic from a test comment (0.8), no reviews (prior 0.5),
/// one of four files. spacy: repository taxonomy topic (0.6), one negative
/// reliability review (0.0), two of four files.
pub fn expected_totals() -> [(&'static str, f64); 3] {
    let u = |s: f64| (1.0 + s).ln() / 5f64.ln();
    [
        ("django", 0.5 * 1.0 + 0.2 * 0.75 + 0.2 * 1.0 - 0.3 * 0.25),
        ("selenium", 0.5 * 0.8 + 0.2 * 0.5 + 0.2 * u(1.0)),
        ("spacy", 0.5 * 0.6 + 0.2 * 0.0 + 0.2 * u(2.0)),
    ]
}
