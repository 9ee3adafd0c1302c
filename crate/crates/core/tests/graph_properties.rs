use std::collections::BTreeSet;

use pkgraph_core::graph::{
    normalize_name, Attachment, KnowledgeGraph, MetadataRecord, Origin, QualityAttribute, QualityScore, Severity,
    TopicKind, TopicLabel, UsageStat, VulnerabilityRecord,
};
use pkgraph_core::snapshot;
use pkgraph_core::synth;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn normalization_is_idempotent(raw in "[ -~]{1,24}") {
        if let Ok(once) = normalize_name(&raw) {
            prop_assert_eq!(normalize_name(&once).unwrap(), once.clone());
            prop_assert!(!once.contains("--"));
            prop_assert_eq!(once.to_lowercase(), once);
        }
    }
}

fn item_pool() -> Vec<(String, Attachment)> {
    let mut items: Vec<(String, Attachment)> = Vec::new();
    for p in ["aa", "bb", "cc"] {
        items.push((p.into(), TopicLabel::new(TopicKind::DeveloperDefined, "http", "registry").into()));
        items.push((p.into(), TopicLabel::new(TopicKind::UserDefined, "web scraping", &format!("{p}/x.py")).into()));
        items.push((p.into(), TopicLabel::new(TopicKind::UserDefined, "web scraping", "other/y.py").into()));
        let mut m = MetadataRecord::new(p, "1.0", Origin::Registry);
        m.last_update = Some(100 + p.len() as i64);
        items.push((p.into(), m.into()));
        let mut m = MetadataRecord::new(p, "2.0", Origin::CodeHost);
        m.last_update = Some(50);
        items.push((p.into(), m.into()));
        items.push((
            p.into(),
            VulnerabilityRecord {
                id: format!("CVE-{p}"),
                package: p.into(),
                severity: Severity::Medium,
                affected_ranges: vec![],
                fixed: false,
            }
            .into(),
        ));
        items.push((
            p.into(),
            QualityScore {
                package: p.into(),
                attribute: QualityAttribute::Usability,
                count_l: 1,
                count_m: 2,
                count_h: 3,
                evidence: BTreeSet::new(),
            }
            .into(),
        ));
        items.push((p.into(), UsageStat { script_count: 9, repo_count: 3 }.into()));
    }
    items
}

fn build(order: &[usize], dup: &[usize]) -> KnowledgeGraph {
    let pool = item_pool();
    let mut g = KnowledgeGraph::new();
    for p in ["aa", "bb", "cc"] {
        g.upsert_package(p).unwrap();
    }
    for &i in order.iter().chain(dup) {
        let (pkg, item) = pool[i % pool.len()].clone();
        g.attach(&pkg, item).unwrap();
    }
    g.check_integrity().unwrap();
    g.seal_at(1);
    g
}

proptest! {
    #[test]
    fn attachment_order_does_not_matter(perm in Just((0..24usize).collect::<Vec<_>>()).prop_shuffle(), dup in prop::collection::vec(0usize..24, 0..10)) {
        let canonical = build(&(0..24).collect::<Vec<_>>(), &[]);
        prop_assert_eq!(build(&perm, &dup), canonical);
    }
}

#[test]
fn snapshot_round_trip_over_random_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..1000 {
        let g = synth::random_graph(&mut rng, 50);
        g.check_integrity().unwrap();
        let text = snapshot::to_string(&g).unwrap();
        let back = snapshot::from_str(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(snapshot::to_string(&back).unwrap(), text);
        // metadata cardinality: at most one node per (package, version, origin)
        let keys: BTreeSet<_> = g
            .packages()
            .flat_map(|p| g.metadata_of(&p.name).map(|m| (m.package.clone(), m.version.clone(), m.origin)))
            .collect();
        assert_eq!(keys.len(), g.metadata_node_count());
    }
}

#[test]
fn random_truncation_is_always_detected() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = synth::random_graph(&mut rng, 30);
    let text = snapshot::to_string(&g).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    for keep in 0..lines.len() {
        let partial: String = lines[..keep].iter().map(|l| format!("{l}\n")).collect();
        assert!(snapshot::from_str(&partial).is_err(), "prefix of {keep} lines accepted");
    }
}
