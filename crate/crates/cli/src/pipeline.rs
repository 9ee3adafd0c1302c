//! Batch pipeline behind `ingest`, `scan` and `build-graph`.
//!
//! Staging directory layout:
//!
//! ```text
//! staging.json            terms, repositories and package list
//! packages/<name>.json    registry/code-host metadata, advisories, reviews
//! corpus/<owner>__<repo>/ downloaded Python sources
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use pkgraph_core::annotate::{classify_polarity, map_quality_attributes, BaselineAnnotator, PolarityLabel};
use pkgraph_core::graph::{
    normalize_name, KnowledgeGraph, MetadataRecord, QualityAttribute, QualityScore, Taxonomy, TopicKind, TopicLabel,
    VulnerabilityRecord,
};
use pkgraph_core::imports::{ResolutionClass, Resolver};
use pkgraph_core::quality::aggregate;
use pkgraph_core::scan::{scan_corpus, ScanConfig, ScanReport};
use pkgraph_core::Execution;
use pkgraph_ingest::{run_bounded, Ingest, IngestError, Platform, RegistryLookup, RepoRef, ReviewStatement};
use serde::{Deserialize, Serialize};

use crate::config::IngestSettings;
use crate::error::{failed, CliError};

pub const STAGING_VERSION: &str = "pkgraph-staging/1";
pub const STAGING_FILE: &str = "staging.json";
pub const SCAN_FILE: &str = "scan.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagingManifest {
    pub version: String,
    pub terms: Vec<String>,
    pub repositories: Vec<RepoRef>,
    pub packages: Vec<String>,
}

impl Default for StagingManifest {
    fn default() -> Self {
        StagingManifest {
            version: STAGING_VERSION.into(),
            terms: Vec::new(),
            repositories: Vec::new(),
            packages: Vec::new(),
        }
    }
}

/// Everything fetched for one package.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagedPackage {
    pub name: String,
    /// `None` when the registry has no such package.
    pub registry: Option<MetadataRecord>,
    pub summary: String,
    pub code_host: Option<MetadataRecord>,
    pub vulnerabilities: Vec<VulnerabilityRecord>,
    pub reviews: Vec<ReviewStatement>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Staging {
    pub manifest: StagingManifest,
    pub packages: BTreeMap<String, StagedPackage>,
    pub dir: PathBuf,
}

impl Staging {
    pub fn corpus_dir(&self) -> PathBuf {
        self.dir.join("corpus")
    }

    /// Names the registry knows, used as the import resolver's index.
    pub fn registry_names(&self) -> impl Iterator<Item = &str> {
        self.packages.values().filter(|p| p.registry.is_some()).map(|p| p.name.as_str())
    }

    pub fn load(dir: &Path) -> Result<Staging, CliError> {
        let manifest_path = dir.join(STAGING_FILE);
        if !manifest_path.is_file() {
            return Err(CliError::MissingInput(format!("no staging manifest at {}", manifest_path.display())));
        }
        let manifest: StagingManifest = read_json(&manifest_path)?;
        if manifest.version != STAGING_VERSION {
            return Err(failed(format!(
                "{}: unsupported staging version {:?}",
                manifest_path.display(),
                manifest.version
            )));
        }
        let mut packages = BTreeMap::new();
        for name in &manifest.packages {
            let p: StagedPackage = read_json(&package_file(dir, name))?;
            packages.insert(p.name.clone(), p);
        }
        Ok(Staging {
            manifest,
            packages,
            dir: dir.to_path_buf(),
        })
    }
}

fn package_file(dir: &Path, name: &str) -> PathBuf {
    dir.join("packages").join(format!("{name}.json"))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::MissingInput(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| failed(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(failed)?;
    fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct IngestPlan {
    pub terms: Vec<String>,
    pub packages: Vec<String>,
    pub settings: IngestSettings,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    pub repositories: usize,
    pub source_files: usize,
    pub packages: usize,
    pub not_in_registry: usize,
    pub advisories: usize,
    pub reviews: usize,
    pub warnings: Vec<String>,
}

fn fetch_failure(what: &str, e: IngestError) -> CliError {
    failed(format!("{what}: {e}"))
}

fn stage_package(client: &Ingest, name: &str, platforms: &[Platform]) -> Result<StagedPackage, CliError> {
    let mut warnings = Vec::new();
    let (registry, summary, source) = match client
        .fetch_registry_metadata(name)
        .map_err(|e| fetch_failure(&format!("registry metadata for {name}"), e))?
    {
        RegistryLookup::Found(entry) => (Some(entry.record), entry.summary, entry.source_repository),
        RegistryLookup::NotFound => (None, String::new(), None),
    };
    let code_host = match source {
        Some((owner, repo)) => match client.fetch_repository_metadata(name, &owner, &repo) {
            Ok(m) => Some(m),
            Err(e) => {
                warnings.push(format!("code host metadata for {owner}/{repo}: {e}"));
                None
            }
        },
        None => None,
    };
    let vulnerabilities = client
        .fetch_vulnerabilities(name)
        .map_err(|e| fetch_failure(&format!("advisories for {name}"), e))?;
    let reviews = if platforms.is_empty() {
        Vec::new()
    } else {
        let batch = client
            .collect_reviews(name, platforms)
            .map_err(|e| fetch_failure(&format!("reviews for {name}"), e))?;
        warnings.extend(batch.warnings);
        batch.statements
    };
    Ok(StagedPackage {
        name: name.to_string(),
        registry,
        summary,
        code_host,
        vulnerabilities,
        reviews,
        warnings,
    })
}

/// Fetches everything the plan asks for into `staging`, merging with what
/// an earlier run left there.
pub fn run_ingest(client: &Ingest, plan: &IngestPlan, staging: &Path) -> Result<IngestSummary, CliError> {
    let mut summary = IngestSummary::default();
    let mut manifest: StagingManifest = if staging.join(STAGING_FILE).is_file() {
        read_json(&staging.join(STAGING_FILE))?
    } else {
        StagingManifest::default()
    };

    if !plan.terms.is_empty() {
        let repos = client
            .search_repositories(&plan.terms, plan.settings.per_term)
            .map_err(|e| fetch_failure("repository search", e))?;
        let corpus = staging.join("corpus");
        let fetched = run_bounded(&repos, client.policy.max_parallel, |r| {
            client.fetch_repository_sources(r, plan.settings.max_files, &corpus)
        });
        for (repo, outcome) in repos.iter().zip(fetched) {
            match outcome {
                Ok(n) => summary.source_files += n,
                Err(e) => summary.warnings.push(format!("sources of {}/{}: {e}", repo.owner, repo.name)),
            }
        }
        summary.repositories = repos.len();
        let mut by_key: BTreeMap<(String, String, String), RepoRef> = manifest
            .repositories
            .drain(..)
            .map(|r| ((r.host.clone(), r.owner.clone(), r.name.clone()), r))
            .collect();
        for r in repos {
            by_key.insert((r.host.clone(), r.owner.clone(), r.name.clone()), r);
        }
        manifest.repositories = by_key.into_values().collect();
        let mut terms: BTreeSet<String> = manifest.terms.drain(..).collect();
        terms.extend(plan.terms.iter().map(|t| pkgraph_core::graph::normalize_term(t)).filter(|t| !t.is_empty()));
        manifest.terms = terms.into_iter().collect();
    }

    let mut names = BTreeSet::new();
    for raw in &plan.packages {
        names.insert(normalize_name(raw).map_err(|e| CliError::Invalid(e.to_string()))?);
    }
    let names: Vec<String> = names.into_iter().collect();
    let staged = run_bounded(&names, client.policy.max_parallel, |n| stage_package(client, n, &plan.settings.platforms));
    for p in staged {
        let p = p?;
        summary.packages += 1;
        summary.not_in_registry += usize::from(p.registry.is_none());
        summary.advisories += p.vulnerabilities.len();
        summary.reviews += p.reviews.len();
        summary.warnings.extend(p.warnings.iter().map(|w| format!("{}: {w}", p.name)));
        write_json(&package_file(staging, &p.name), &p)?;
    }
    let mut all: BTreeSet<String> = manifest.packages.drain(..).collect();
    all.extend(names);
    manifest.packages = all.into_iter().collect();
    write_json(&staging.join(STAGING_FILE), &manifest)?;
    Ok(summary)
}

/// Package names worth a registry lookup: every resolved third-party
/// package plus every unresolved top-level module.
pub fn packages_from_scan(report: &ScanReport) -> Vec<String> {
    let mut out: BTreeSet<String> = report
        .package_class
        .iter()
        .filter(|(_, c)| **c == ResolutionClass::Registry)
        .map(|(p, _)| p.clone())
        .collect();
    out.extend(report.unresolved.keys().filter_map(|t| normalize_name(t).ok()));
    out.into_iter().collect()
}

pub fn run_scan<'a>(
    corpus: &Path,
    registry: impl IntoIterator<Item = &'a str>,
    execution: Execution,
    topics: bool,
) -> Result<ScanReport, CliError> {
    if !corpus.is_dir() {
        return Err(CliError::MissingInput(format!("corpus directory {} does not exist", corpus.display())));
    }
    let resolver = Resolver::with_defaults(registry);
    let annotator = BaselineAnnotator::default();
    let mut cfg = ScanConfig::new(&resolver);
    cfg.execution = execution;
    if topics {
        cfg.topic_annotator = Some(&annotator);
    }
    scan_corpus(corpus, &cfg).map_err(failed)
}

pub fn write_scan(report: &ScanReport, out: &Path) -> Result<(), CliError> {
    write_json(&out.join(SCAN_FILE), report)?;
    fs::write(out.join("usage.tsv"), report.usage_tsv()).context("writing usage.tsv")?;
    fs::write(out.join("unresolved.tsv"), report.unresolved_tsv()).context("writing unresolved.tsv")?;
    Ok(())
}

/// Accepts either a scan output directory or the `scan.json` inside it.
pub fn load_scan(path: &Path) -> Result<ScanReport, CliError> {
    let file = if path.is_dir() { path.join(SCAN_FILE) } else { path.to_path_buf() };
    if !file.is_file() {
        return Err(CliError::MissingInput(format!("no scan report at {}", file.display())));
    }
    read_json(&file)
}

/// Reviews turned into per-attribute fuzzy scores. A review mapped to
/// several attributes counts once for each.
pub fn quality_from_reviews(package: &str, reviews: &[ReviewStatement], annotator: &BaselineAnnotator) -> Vec<QualityScore> {
    let mut labelled: Vec<(PolarityLabel, BTreeSet<QualityAttribute>)> = Vec::new();
    let mut urls: Vec<&str> = Vec::new();
    for r in reviews {
        let (Ok(polarity), Ok(attrs)) = (classify_polarity(annotator, &r.text), map_quality_attributes(annotator, &r.text)) else {
            continue;
        };
        labelled.push((polarity, attrs));
        urls.push(&r.url);
    }
    QualityAttribute::ALL
        .into_iter()
        .filter_map(|attr| {
            let mut q = aggregate(package, attr, &labelled).ok()?;
            q.evidence = labelled
                .iter()
                .zip(&urls)
                .filter(|((_, attrs), _)| attrs.contains(&attr))
                .map(|(_, u)| u.to_string())
                .collect();
            Some(q)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub taxonomy: Option<Taxonomy>,
    pub timestamp: i64,
}

fn graph_err(e: impl std::fmt::Display) -> CliError {
    failed(format!("graph construction: {e}"))
}

/// Merges staged acquisitions and a scan report into a sealed graph.
pub fn build_graph(staging: &Staging, scan: Option<&ScanReport>, opts: &BuildOptions) -> Result<KnowledgeGraph, CliError> {
    let base = opts.taxonomy.clone().unwrap_or_default();
    let taxonomy = Taxonomy::from_terms(base.terms().map(str::to_string).chain(staging.manifest.terms.iter().cloned()));
    let mut g = KnowledgeGraph::with_taxonomy(taxonomy);
    let annotator = BaselineAnnotator::default();

    for p in staging.packages.values() {
        let name = g.upsert_package(&p.name).map_err(graph_err)?;
        let name = name.as_str();
        if let Some(m) = &p.registry {
            for kw in &m.keywords {
                g.attach(name, TopicLabel::new(TopicKind::DeveloperDefined, kw, &format!("registry:{name}")))
                    .map_err(graph_err)?;
            }
            g.attach(name, m.clone()).map_err(graph_err)?;
        }
        if let Some(m) = &p.code_host {
            let source = m.project_url.clone().unwrap_or_else(|| format!("code_host:{name}"));
            for kw in &m.keywords {
                g.attach(name, TopicLabel::new(TopicKind::DeveloperDefined, kw, &source)).map_err(graph_err)?;
            }
            g.attach(name, m.clone()).map_err(graph_err)?;
        }
        for v in &p.vulnerabilities {
            g.attach(name, v.clone()).map_err(graph_err)?;
        }
        for q in quality_from_reviews(name, &p.reviews, &annotator) {
            g.attach(name, q).map_err(graph_err)?;
        }
    }

    if let Some(scan) = scan {
        let third_party = |pkg: &str| scan.package_class.get(pkg) == Some(&ResolutionClass::Registry);
        for (pkg, usage) in &scan.usage {
            if !third_party(pkg) {
                continue;
            }
            g.upsert_package(pkg).map_err(graph_err)?;
            g.attach(pkg, *usage).map_err(graph_err)?;
        }
        for (pkg, topics) in &scan.user_topics {
            for term in topics.keys() {
                g.attach(pkg, TopicLabel::new(TopicKind::UserDefined, term, "corpus")).map_err(graph_err)?;
            }
        }
        for repo in &staging.manifest.repositories {
            let Some(used) = scan.repo_packages.get(&repo.corpus_dir()) else {
                continue;
            };
            let url = format!("https://{}/{}/{}", repo.host, repo.owner, repo.name);
            for pkg in used.iter().filter(|p| third_party(p)) {
                for term in &repo.matched_terms {
                    g.attach(pkg, TopicLabel::new(TopicKind::Taxonomy, term, &url)).map_err(graph_err)?;
                }
            }
        }
    }

    g.seal_at(opts.timestamp);
    g.check_integrity().map_err(graph_err)?;
    Ok(g)
}
