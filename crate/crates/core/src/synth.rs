//! Seeded generators for graphs and source corpora, used by property tests,
//! benchmarks and the acceptance suite.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::graph::{
    KnowledgeGraph, MetadataRecord, Origin, QualityAttribute, QualityScore, Severity, Taxonomy, TopicKind,
    TopicLabel, UsageStat, VersionRange, VulnerabilityRecord,
};
use crate::scan::SourceFile;

const USER_TERMS: &[&str] = &[
    "web scraping",
    "data pipeline",
    "image resize",
    "rest client",
    "chat bot",
    "log parsing",
    "unit tests",
    "web framework",
];

const DEV_TERMS: &[&str] = &[
    "web framework",
    "http",
    "orm",
    "nlp",
    "testing",
    "browser automation",
    "machine learning",
    "plotting",
];

const VERSIONS: &[&str] = &["0.1", "0.9.2", "1.0", "1.4.1", "2.0", "3.2.5"];
const RUNTIMES: &[&str] = &["", ">=3.6", ">=3.8", ">=3.8,<4", "<3"];

pub fn package_pool(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("pkg-{i:05}")).collect()
}

/// A graph with at most `max_packages` packages and a mix of every node kind.
/// Not sealed, so callers can keep mutating it.
pub fn random_graph_unsealed<R: Rng>(rng: &mut R, max_packages: usize) -> KnowledgeGraph {
    let n = rng.random_range(1..=max_packages.max(1));
    graph_of_size(rng, n)
}

/// Like [`random_graph_unsealed`] with exactly `n` packages.
pub fn graph_of_size<R: Rng>(rng: &mut R, n: usize) -> KnowledgeGraph {
    let taxonomy = Taxonomy::default();
    let tax_terms: Vec<&str> = taxonomy.terms().take(24).collect();
    let mut g = KnowledgeGraph::with_taxonomy(taxonomy.clone());
    let names = package_pool(n);
    for name in &names {
        g.upsert_package(name).expect("valid name");
    }
    for name in &names {
        for _ in 0..rng.random_range(0..4) {
            let (kind, term) = match rng.random_range(0..3) {
                0 => (TopicKind::DeveloperDefined, *DEV_TERMS.choose(rng).unwrap()),
                1 => (TopicKind::UserDefined, *USER_TERMS.choose(rng).unwrap()),
                _ => (TopicKind::Taxonomy, *tax_terms.choose(rng).unwrap()),
            };
            let source = format!("repo-{}/main.py", rng.random_range(0..20));
            g.attach(name, TopicLabel::new(kind, term, &source)).expect("valid topic");
        }
        if rng.random_bool(0.6) {
            for _ in 0..rng.random_range(1..3) {
                let version = *VERSIONS.choose(rng).unwrap();
                let origin = if rng.random_bool(0.7) { Origin::Registry } else { Origin::CodeHost };
                let mut m = MetadataRecord::new(name, version, origin);
                m.requires_runtime = RUNTIMES.choose(rng).unwrap().to_string();
                m.star_count = rng.random_range(0..50_000);
                m.fork_count = rng.random_range(0..5_000);
                m.release_count = rng.random_range(0..200);
                m.download_count = rng.random_range(0..10_000_000);
                m.keywords = vec![DEV_TERMS.choose(rng).unwrap().to_string()];
                m.last_update = Some(rng.random_range(1_500_000_000..1_750_000_000));
                // a repeated (version, origin) key with a different payload is a conflict
                let _ = g.attach(name, m);
            }
        }
        for i in 0..rng.random_range(0..3) {
            let fixed_at = if rng.random_bool(0.5) { Some("2.0".to_string()) } else { None };
            let v = VulnerabilityRecord {
                id: format!("GHSA-{name}-{i}"),
                package: name.clone(),
                severity: *[Severity::Low, Severity::Medium, Severity::High, Severity::Critical, Severity::Unknown]
                    .choose(rng)
                    .unwrap(),
                affected_ranges: vec![VersionRange {
                    introduced: Some("0".into()),
                    fixed: fixed_at,
                }],
                fixed: rng.random_bool(0.4),
            };
            g.attach(name, v).expect("valid vulnerability");
        }
        let attrs: Vec<&QualityAttribute> = QualityAttribute::ALL.iter().collect();
        let how_many = rng.random_range(0..4);
        let picked: Vec<QualityAttribute> = attrs.choose_multiple(rng, how_many).map(|a| **a).collect();
        for attr in picked {
            let (l, m, h) = loop {
                let c = (rng.random_range(0..6), rng.random_range(0..6), rng.random_range(0..6));
                if c.0 + c.1 + c.2 > 0 {
                    break c;
                }
            };
            let evidence: BTreeSet<String> = (0..rng.random_range(0..3))
                .map(|i| format!("https://forum.example/{name}/{i}"))
                .collect();
            let q = QualityScore {
                package: name.clone(),
                attribute: attr,
                count_l: l,
                count_m: m,
                count_h: h,
                evidence,
            };
            g.attach(name, q).expect("valid quality");
        }
        if rng.random_bool(0.8) {
            let scripts = rng.random_range(0..5_000u64);
            let repos = if scripts == 0 { 0 } else { rng.random_range(0..=scripts.min(300)) };
            g.attach(name, UsageStat { script_count: scripts, repo_count: repos }).expect("valid usage");
        }
    }
    g
}

pub fn random_graph<R: Rng>(rng: &mut R, max_packages: usize) -> KnowledgeGraph {
    let mut g = random_graph_unsealed(rng, max_packages);
    g.seal_at(rng.random_range(1_600_000_000..1_800_000_000));
    g
}

/// Query terms drawn from the same vocabulary the graph generator uses.
pub fn random_terms<R: Rng>(rng: &mut R) -> Vec<String> {
    let taxonomy = Taxonomy::default();
    let tax_terms: Vec<&str> = taxonomy.terms().take(24).collect();
    let pool: Vec<&str> = DEV_TERMS.iter().chain(USER_TERMS).chain(tax_terms.iter()).copied().collect();
    let n = rng.random_range(1..=3);
    let mut out: Vec<String> = pool.choose_multiple(rng, n).map(|s| s.to_string()).collect();
    out.sort();
    out.dedup();
    out
}

const MODULES: &[&str] = &[
    "numpy", "pandas", "requests", "django", "flask", "os", "sys", "json", "re", "sklearn", "cv2", "yaml",
    "selenium", "spacy", "torch", "matplotlib", "bs4", "pytest", "collections", "typing", "it_helpers",
];

/// `files` synthetic Python sources spread over `repos` repositories.
pub fn synthetic_corpus<R: Rng>(rng: &mut R, repos: usize, files: usize) -> Vec<SourceFile> {
    (0..files)
        .map(|i| {
            let mut src = String::from("\"\"\"module docstring for data pipeline\"\"\"\n");
            for _ in 0..rng.random_range(1..12) {
                let m = MODULES.choose(rng).unwrap();
                match rng.random_range(0..4) {
                    0 => src.push_str(&format!("import {m}\n")),
                    1 => src.push_str(&format!("from {m} import thing\n")),
                    2 => src.push_str(&format!("import {m} as alias  # web scraping\n")),
                    _ => src.push_str(&format!("from .{m} import local\n")),
                }
            }
            src.push_str("\ndef main():\n    s = \"import fake\"\n    return s\n");
            for j in 0..rng.random_range(0..40) {
                src.push_str(&format!("x{j} = {j} * 2\n"));
            }
            SourceFile {
                path: format!("repo{:03}/mod{i:05}.py", i % repos.max(1)),
                contents: Ok(src.into_bytes()),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn generated_graphs_are_consistent() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for _ in 0..50 {
            let g = random_graph(&mut rng, 50);
            assert!(g.is_sealed());
            assert!(g.package_count() <= 50);
            g.check_integrity().unwrap();
        }
    }

    #[test]
    fn corpus_shape() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(1);
        let files = synthetic_corpus(&mut rng, 4, 20);
        assert_eq!(files.len(), 20);
        assert!(files[5].path.starts_with("repo001/"));
    }
}
