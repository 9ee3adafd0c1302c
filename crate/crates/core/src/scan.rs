//! Corpus scanning: per-package script and repository counts, unresolved
//! import report and user-defined topic evidence.
//!
//! A corpus root contains one directory per repository; files directly under
//! the root belong to the pseudo-repository `.`. A package counts once per
//! file no matter how often the file imports it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::annotate::{extract_topics, Annotator};
use crate::exec::Execution;
use crate::graph::UsageStat;
use crate::imports::{extract_with_prose, ResolutionClass, Resolver};

#[derive(Debug, thiserror::Error)]
pub enum ScanError {
    #[error("cannot read corpus root {path}: {source}")]
    Root {
        path: String,
        source: std::io::Error,
    },
}

pub struct ScanConfig<'a> {
    pub resolver: &'a Resolver,
    pub execution: Execution,
    /// When set, comment and docstring prose is turned into topic terms.
    pub topic_annotator: Option<&'a dyn Annotator>,
    pub extensions: Vec<String>,
}

impl<'a> ScanConfig<'a> {
    pub fn new(resolver: &'a Resolver) -> Self {
        ScanConfig {
            resolver,
            execution: Execution::default(),
            topic_annotator: None,
            extensions: vec!["py".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnresolvedEntry {
    pub occurrence_count: u64,
    pub example_file: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanReport {
    pub files_scanned: u64,
    pub skipped: Vec<SkippedFile>,
    pub usage: BTreeMap<String, UsageStat>,
    /// Resolution class of each counted package (registry or stdlib).
    pub package_class: BTreeMap<String, ResolutionClass>,
    pub unresolved: BTreeMap<String, UnresolvedEntry>,
    /// Distinct absolute top-level modules per resolution class.
    pub class_counts: BTreeMap<ResolutionClass, u64>,
    pub distinct_top_levels: u64,
    pub relative_imports: u64,
    pub repo_packages: BTreeMap<String, BTreeSet<String>>,
    /// package -> topic term -> number of files mentioning it
    pub user_topics: BTreeMap<String, BTreeMap<String, u64>>,
}

impl ScanReport {
    pub fn skipped_count(&self) -> usize {
        self.skipped.len()
    }

    /// `package<TAB>class<TAB>script_count<TAB>repo_count`, header first.
    pub fn usage_tsv(&self) -> String {
        let mut out = String::from("package\tclass\tscript_count\trepo_count\n");
        for (pkg, u) in &self.usage {
            let class = self
                .package_class
                .get(pkg)
                .copied()
                .unwrap_or(ResolutionClass::Registry);
            let _ = writeln!(out, "{pkg}\t{class}\t{}\t{}", u.script_count, u.repo_count);
        }
        out
    }

    pub fn unresolved_tsv(&self) -> String {
        let mut out = String::from("top_level\toccurrence_count\texample_file\n");
        for (top, e) in &self.unresolved {
            let _ = writeln!(out, "{top}\t{}\t{}", e.occurrence_count, e.example_file);
        }
        out
    }
}

/// One source file as seen by the scanner. `contents` carries the read
/// error when the file could not be read.
#[derive(Debug, Clone)]
pub struct SourceFile {
    /// Corpus-relative path with `/` separators.
    pub path: String,
    pub contents: Result<Vec<u8>, String>,
}

#[derive(Debug, Default)]
struct FileResult {
    repo: String,
    packages: BTreeMap<String, ResolutionClass>,
    absolute: BTreeMap<String, ResolutionClass>,
    unresolved: BTreeMap<String, u64>,
    relative: u64,
    topics: BTreeSet<String>,
}

enum FileOutcome {
    Scanned(String, FileResult),
    Skipped(SkippedFile),
}

fn repo_of(path: &str) -> String {
    match path.split_once('/') {
        Some((repo, _)) => repo.to_string(),
        None => ".".to_string(),
    }
}

fn analyze(file: &SourceFile, cfg: &ScanConfig<'_>) -> FileOutcome {
    let bytes = match &file.contents {
        Ok(b) => b,
        Err(reason) => {
            return FileOutcome::Skipped(SkippedFile {
                path: file.path.clone(),
                reason: reason.clone(),
            })
        }
    };
    let text = match std::str::from_utf8(bytes) {
        Ok(t) => t,
        Err(e) => {
            return FileOutcome::Skipped(SkippedFile {
                path: file.path.clone(),
                reason: format!("not valid UTF-8 at byte {}", e.valid_up_to()),
            })
        }
    };
    let (records, prose) = extract_with_prose(text);
    let mut result = FileResult {
        repo: repo_of(&file.path),
        ..FileResult::default()
    };
    for rec in &records {
        let res = cfg.resolver.resolve_record(rec);
        match res.class {
            ResolutionClass::Local => result.relative += 1,
            ResolutionClass::Unresolved => {
                result.absolute.insert(rec.top_level.clone(), res.class);
                *result.unresolved.entry(rec.top_level.clone()).or_default() += 1;
            }
            class => {
                result.absolute.insert(rec.top_level.clone(), class);
                if let Some(pkg) = res.package {
                    result.packages.insert(pkg, class);
                }
            }
        }
    }
    if let Some(annotator) = cfg.topic_annotator {
        if result.packages.values().any(|c| *c == ResolutionClass::Registry) {
            for chunk in prose.iter().filter(|p| !p.trim().is_empty()) {
                match extract_topics(annotator, chunk) {
                    Ok(terms) => result.topics.extend(terms.into_iter().map(|t| t.term)),
                    Err(e) => tracing::debug!(file = %file.path, error = %e, "topic extraction failed"),
                }
            }
        }
    }
    FileOutcome::Scanned(file.path.clone(), result)
}

/// Scans in-memory sources. The result does not depend on input order.
pub fn scan_sources(files: &[SourceFile], cfg: &ScanConfig<'_>) -> ScanReport {
    let outcomes = cfg.execution.map(files, |f| analyze(f, cfg));
    merge(outcomes)
}

fn merge(outcomes: Vec<FileOutcome>) -> ScanReport {
    let mut report = ScanReport::default();
    let mut repos_per_pkg: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut absolute: BTreeMap<String, ResolutionClass> = BTreeMap::new();
    for outcome in outcomes {
        let (path, file) = match outcome {
            FileOutcome::Scanned(p, f) => (p, f),
            FileOutcome::Skipped(s) => {
                tracing::warn!(path = %s.path, reason = %s.reason, "skipped file");
                report.skipped.push(s);
                continue;
            }
        };
        report.files_scanned += 1;
        report.relative_imports += file.relative;
        absolute.extend(file.absolute);
        for (top, n) in file.unresolved {
            let entry = report.unresolved.entry(top).or_insert_with(|| UnresolvedEntry {
                occurrence_count: 0,
                example_file: path.clone(),
            });
            entry.occurrence_count += n;
            if path < entry.example_file {
                entry.example_file = path.clone();
            }
        }
        for (pkg, class) in file.packages {
            report.usage.entry(pkg.clone()).or_insert(UsageStat {
                script_count: 0,
                repo_count: 0,
            }).script_count += 1;
            report.package_class.insert(pkg.clone(), class);
            repos_per_pkg.entry(pkg.clone()).or_default().insert(file.repo.clone());
            report
                .repo_packages
                .entry(file.repo.clone())
                .or_default()
                .insert(pkg.clone());
            if class == ResolutionClass::Registry {
                let topics = report.user_topics.entry(pkg).or_default();
                for t in &file.topics {
                    *topics.entry(t.clone()).or_default() += 1;
                }
            }
        }
    }
    report.user_topics.retain(|_, t| !t.is_empty());
    for (pkg, repos) in repos_per_pkg {
        if let Some(u) = report.usage.get_mut(&pkg) {
            u.repo_count = repos.len() as u64;
        }
    }
    report.distinct_top_levels = absolute.len() as u64;
    for class in absolute.into_values() {
        *report.class_counts.entry(class).or_default() += 1;
    }
    report.skipped.sort_by(|a, b| a.path.cmp(&b.path));
    report
}

fn has_extension(path: &Path, exts: &[String]) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| exts.iter().any(|x| x == e))
}

/// Walks `root` and scans every matching file.
pub fn scan_corpus(root: &Path, cfg: &ScanConfig<'_>) -> Result<ScanReport, ScanError> {
    std::fs::read_dir(root).map_err(|source| ScanError::Root {
        path: root.display().to_string(),
        source,
    })?;
    let mut paths = Vec::new();
    let mut walk_errors = Vec::new();
    for entry in WalkDir::new(root).follow_links(false) {
        match entry {
            Ok(e) if e.file_type().is_file() && has_extension(e.path(), &cfg.extensions) => {
                paths.push(e.into_path())
            }
            Ok(_) => {}
            Err(e) => {
                let path = e
                    .path()
                    .map(|p| relative(root, p))
                    .unwrap_or_else(|| "?".into());
                walk_errors.push(SkippedFile {
                    path,
                    reason: e.to_string(),
                });
            }
        }
    }
    paths.sort();
    let outcomes = cfg.execution.map(&paths, |p| {
        let file = SourceFile {
            path: relative(root, p),
            contents: std::fs::read(p).map_err(|e| e.to_string()),
        };
        analyze(&file, cfg)
    });
    let mut report = merge(outcomes);
    if !walk_errors.is_empty() {
        report.skipped.extend(walk_errors);
        report.skipped.sort_by(|a, b| a.path.cmp(&b.path));
    }
    Ok(report)
}

fn relative(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn src(path: &str, text: &str) -> SourceFile {
        SourceFile {
            path: path.into(),
            contents: Ok(text.as_bytes().to_vec()),
        }
    }

    fn resolver() -> Resolver {
        Resolver::with_defaults(["numpy", "pandas", "requests"])
    }

    #[test]
    fn counts_files_once_per_package() {
        let r = resolver();
        let cfg = ScanConfig::new(&r);
        let files = vec![
            src("a/one.py", "import numpy\nimport numpy as np\nfrom numpy import array\n"),
            src("a/two.py", "import numpy\nimport pandas\n"),
            src("b/three.py", "import numpy, os\n"),
            src("b/four.py", "import requests\n"),
            src("five.py", "import json\n"),
        ];
        let rep = scan_sources(&files, &cfg);
        assert_eq!(rep.files_scanned, 5);
        assert_eq!(rep.usage["numpy"], UsageStat { script_count: 3, repo_count: 2 });
        assert_eq!(rep.usage["pandas"].script_count, 1);
        assert_eq!(rep.package_class["os"], ResolutionClass::Stdlib);
        assert_eq!(rep.repo_packages["."], ["json".to_string()].into());
    }

    #[test]
    fn unresolved_report_and_conservation() {
        let r = resolver();
        let cfg = ScanConfig::new(&r);
        let files = vec![
            src("r/x.py", "import mystery\nimport mystery.sub\nfrom . import sibling\n"),
            src("r/a.py", "import mystery\nimport numpy\nimport os\n"),
        ];
        let rep = scan_sources(&files, &cfg);
        let m = &rep.unresolved["mystery"];
        assert_eq!(m.occurrence_count, 3);
        assert_eq!(m.example_file, "r/a.py");
        assert_eq!(rep.relative_imports, 1);
        let total: u64 = rep.class_counts.values().sum();
        assert_eq!(total, rep.distinct_top_levels);
        assert_eq!(rep.distinct_top_levels, 3);
        assert!(rep.unresolved_tsv().starts_with("top_level\toccurrence_count\texample_file\n"));
        assert!(rep.unresolved_tsv().contains("mystery\t3\tr/a.py\n"));
    }

    #[test]
    fn unreadable_and_undecodable_are_skipped() {
        let r = resolver();
        let cfg = ScanConfig::new(&r);
        let files = vec![
            SourceFile {
                path: "bad.py".into(),
                contents: Ok(vec![0xff, 0xfe, b'\n']),
            },
            SourceFile {
                path: "gone.py".into(),
                contents: Err("permission denied".into()),
            },
            src("ok.py", "import numpy"),
        ];
        let rep = scan_sources(&files, &cfg);
        assert_eq!(rep.skipped_count(), 2);
        assert_eq!(rep.files_scanned, 1);
    }

    #[test]
    fn empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        let r = resolver();
        let rep = scan_corpus(dir.path(), &ScanConfig::new(&r)).unwrap();
        assert!(rep.usage.is_empty());
        assert_eq!(rep.skipped_count(), 0);
    }

    #[test]
    fn missing_root_is_an_error() {
        let r = resolver();
        let res = scan_corpus(Path::new("/definitely/not/here"), &ScanConfig::new(&r));
        assert!(matches!(res, Err(ScanError::Root { .. })));
    }

    #[test]
    fn user_topics_from_prose() {
        let r = resolver();
        let base = crate::annotate::BaselineAnnotator::default();
        let mut cfg = ScanConfig::new(&r);
        cfg.topic_annotator = Some(&base);
        let files = vec![
            src("a/x.py", "# helpers for web scraping\nimport requests\n"),
            src("b/y.py", "\"\"\"Tools for web scraping.\"\"\"\nimport requests\nimport os\n"),
        ];
        let rep = scan_sources(&files, &cfg);
        assert_eq!(rep.user_topics["requests"]["web scraping"], 2);
        assert!(!rep.user_topics.contains_key("os"));
    }
}
