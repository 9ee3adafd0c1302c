//! Snapshot persistence for sealed graphs.
//!
//! Layout: a `pkgraph-snapshot/1` header line, then one `kind<TAB>json` row
//! per node or edge (node tables first, then edge tables), then a trailing
//! `end<TAB><row count>` line. Rows are emitted in key order, so the same
//! graph always produces the same bytes.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::graph::{
    GraphError, KnowledgeGraph, MetadataRecord, PackageNode, QualityScore, Taxonomy, TopicKey,
    TopicKind, UsageStat, VulnerabilityRecord,
};

pub const SNAPSHOT_VERSION: &str = "pkgraph-snapshot/1";
const VERSION_PREFIX: &str = "pkgraph-snapshot/";

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("graph must be sealed before saving")]
    NotSealed,
    #[error("cannot read snapshot: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a pkgraph snapshot (missing version header)")]
    MissingHeader,
    #[error("unsupported snapshot version {0:?} (expected {SNAPSHOT_VERSION})")]
    UnsupportedVersion(String),
    #[error("snapshot is truncated: {0}")]
    Truncated(String),
    #[error("malformed row at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("snapshot content is inconsistent: {0}")]
    Integrity(#[from] GraphError),
}

#[derive(Serialize, Deserialize)]
struct MetaRow {
    build_timestamp: Option<i64>,
}

#[derive(Serialize, Deserialize)]
struct TopicEdgeRow {
    package: String,
    kind: TopicKind,
    term: String,
    sources: BTreeSet<String>,
}

#[derive(Serialize, Deserialize)]
struct UsageRow {
    package: String,
    #[serde(flatten)]
    stat: UsageStat,
}

fn push_row<T: Serialize>(out: &mut String, kind: &str, row: &T) {
    out.push_str(kind);
    out.push('\t');
    out.push_str(&serde_json::to_string(row).expect("snapshot rows serialize"));
    out.push('\n');
}

/// Canonical text encoding of a sealed graph.
pub fn to_string(graph: &KnowledgeGraph) -> Result<String, SnapshotError> {
    if !graph.sealed {
        return Err(SnapshotError::NotSealed);
    }
    let mut out = String::new();
    out.push_str(SNAPSHOT_VERSION);
    out.push('\n');
    push_row(&mut out, "meta", &MetaRow { build_timestamp: graph.build_timestamp });
    push_row(&mut out, "taxonomy", &graph.taxonomy);
    for node in graph.packages.values() {
        push_row(&mut out, "package", node);
    }
    for key in &graph.topics {
        push_row(&mut out, "topic", key);
    }
    for records in graph.metadata.values() {
        for m in records.values() {
            push_row(&mut out, "metadata", m);
        }
    }
    for records in graph.vulnerabilities.values() {
        for v in records.values() {
            push_row(&mut out, "vulnerability", v);
        }
    }
    for scores in graph.quality.values() {
        for q in scores.values() {
            push_row(&mut out, "quality", q);
        }
    }
    for (package, stat) in &graph.usage {
        push_row(&mut out, "usage", &UsageRow { package: package.clone(), stat: *stat });
    }
    for (package, topics) in &graph.package_topics {
        for (key, sources) in topics {
            push_row(
                &mut out,
                "edge.topic",
                &TopicEdgeRow {
                    package: package.clone(),
                    kind: key.kind,
                    term: key.term.clone(),
                    sources: sources.clone(),
                },
            );
        }
    }
    let rows = out.lines().count() - 1;
    out.push_str(&format!("end\t{rows}\n"));
    Ok(out)
}

fn parse<'a, T: Deserialize<'a>>(line: usize, json: &'a str) -> Result<T, SnapshotError> {
    serde_json::from_str(json).map_err(|e| SnapshotError::Malformed {
        line,
        reason: e.to_string(),
    })
}

pub fn from_str(text: &str) -> Result<KnowledgeGraph, SnapshotError> {
    let mut lines = text.lines().enumerate();
    let header = match lines.next() {
        Some((_, h)) => h.trim_end(),
        None => return Err(SnapshotError::MissingHeader),
    };
    if header != SNAPSHOT_VERSION {
        return match header.strip_prefix(VERSION_PREFIX) {
            Some(_) => Err(SnapshotError::UnsupportedVersion(header.to_string())),
            None => Err(SnapshotError::MissingHeader),
        };
    }

    let mut graph = KnowledgeGraph::new();
    let mut rows = 0usize;
    let mut seen_end = false;
    for (idx, line) in lines {
        let lineno = idx + 1;
        if seen_end {
            if line.trim().is_empty() {
                continue;
            }
            return Err(SnapshotError::Malformed {
                line: lineno,
                reason: "content after end marker".into(),
            });
        }
        let (kind, json) = line.split_once('\t').ok_or_else(|| SnapshotError::Malformed {
            line: lineno,
            reason: "expected kind<TAB>payload".into(),
        })?;
        match kind {
            "end" => {
                let declared: usize = json.trim().parse().map_err(|_| SnapshotError::Malformed {
                    line: lineno,
                    reason: "bad row count".into(),
                })?;
                if declared != rows {
                    return Err(SnapshotError::Truncated(format!(
                        "end marker declares {declared} rows, found {rows}"
                    )));
                }
                seen_end = true;
                continue;
            }
            "meta" => graph.build_timestamp = parse::<MetaRow>(lineno, json)?.build_timestamp,
            "taxonomy" => graph.taxonomy = parse::<Taxonomy>(lineno, json)?,
            "package" => {
                let node: PackageNode = parse(lineno, json)?;
                graph.packages.insert(node.name.clone(), node);
            }
            "topic" => {
                graph.topics.insert(parse::<TopicKey>(lineno, json)?);
            }
            "metadata" => {
                let m: MetadataRecord = parse(lineno, json)?;
                graph
                    .metadata
                    .entry(m.package.clone())
                    .or_default()
                    .insert((m.version.clone(), m.origin), m);
            }
            "vulnerability" => {
                let v: VulnerabilityRecord = parse(lineno, json)?;
                graph.advisories.insert(v.id.clone());
                graph
                    .vulnerabilities
                    .entry(v.package.clone())
                    .or_default()
                    .insert(v.id.clone(), v);
            }
            "quality" => {
                let q: QualityScore = parse(lineno, json)?;
                graph.quality.entry(q.package.clone()).or_default().insert(q.attribute, q);
            }
            "usage" => {
                let u: UsageRow = parse(lineno, json)?;
                graph.usage.insert(u.package, u.stat);
            }
            "edge.topic" => {
                let e: TopicEdgeRow = parse(lineno, json)?;
                graph
                    .package_topics
                    .entry(e.package)
                    .or_default()
                    .insert(TopicKey { kind: e.kind, term: e.term }, e.sources);
            }
            other => {
                return Err(SnapshotError::Malformed {
                    line: lineno,
                    reason: format!("unknown row kind {other:?}"),
                })
            }
        }
        rows += 1;
    }
    if !seen_end {
        return Err(SnapshotError::Truncated("missing end marker".into()));
    }
    graph.check_integrity()?;
    graph.sealed = true;
    graph.rebuild_index();
    Ok(graph)
}

/// Writes atomically: the snapshot goes to a sibling temp file that is then
/// renamed over `path`.
pub fn save_snapshot(graph: &KnowledgeGraph, path: &Path) -> Result<(), SnapshotError> {
    let text = to_string(graph)?;
    let tmp = path.with_extension("tmp-snapshot");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    tracing::info!(path = %path.display(), packages = graph.package_count(), "snapshot saved");
    Ok(())
}

pub fn load_snapshot(path: &Path) -> Result<KnowledgeGraph, SnapshotError> {
    let bytes = fs::read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| SnapshotError::Malformed {
        line: 0,
        reason: format!("invalid utf-8: {e}"),
    })?;
    from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Origin, Severity, TopicLabel};

    fn trio() -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new();
        for p in ["spacy", "Django", "selenium"] {
            g.upsert_package(p).unwrap();
        }
        g.attach("django", TopicLabel::new(TopicKind::DeveloperDefined, "web framework", "registry:keywords"))
            .unwrap();
        g.attach("spacy", TopicLabel::new(TopicKind::Taxonomy, "natural language processing", "repo:a/b"))
            .unwrap();
        let mut m = MetadataRecord::new("django", "5.0", Origin::Registry);
        m.star_count = 80_000;
        m.last_update = Some(1_700_000_000);
        g.attach("django", m).unwrap();
        g.attach(
            "django",
            VulnerabilityRecord {
                id: "CVE-2024-0001".into(),
                package: "django".into(),
                severity: Severity::High,
                affected_ranges: vec![],
                fixed: false,
            },
        )
        .unwrap();
        g.attach("selenium", UsageStat { script_count: 5, repo_count: 2 }).unwrap();
        g.seal_at(1_700_000_100);
        g
    }

    #[test]
    fn round_trip_is_identity() {
        let g = trio();
        let text = to_string(&g).unwrap();
        let back = from_str(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(to_string(&back).unwrap(), text);
    }

    #[test]
    fn unsealed_graph_is_rejected() {
        let g = KnowledgeGraph::new();
        assert!(matches!(to_string(&g), Err(SnapshotError::NotSealed)));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let text = to_string(&trio()).unwrap();
        let cut: String = text.lines().take(4).map(|l| format!("{l}\n")).collect();
        assert!(matches!(from_str(&cut), Err(SnapshotError::Truncated(_))));
        let half = &text[..text.len() / 2];
        assert!(from_str(half).is_err());
    }

    #[test]
    fn future_version_is_named() {
        let text = to_string(&trio()).unwrap().replacen(SNAPSHOT_VERSION, "pkgraph-snapshot/9", 1);
        let err = from_str(&text).unwrap_err();
        assert!(err.to_string().contains("pkgraph-snapshot/9"), "{err}");
    }

    #[test]
    fn dangling_edges_are_rejected() {
        let text = to_string(&trio()).unwrap();
        let broken: Vec<&str> = text
            .lines()
            .filter(|l| !l.starts_with("package\t{\"name\":\"selenium\""))
            .collect();
        let n = broken.len() - 2;
        let mut body = broken[..broken.len() - 1].join("\n");
        body.push_str(&format!("\nend\t{n}\n"));
        assert!(matches!(from_str(&body), Err(SnapshotError::Integrity(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.snap");
        let g = trio();
        save_snapshot(&g, &path).unwrap();
        assert_eq!(load_snapshot(&path).unwrap(), g);
        assert!(load_snapshot(&dir.path().join("missing")).is_err());
    }
}
