//! Repository search, repository metadata and source download from the code host.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Component, Path};

use pkgraph_core::graph::{normalize_term, MetadataRecord, Origin};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{parse_error, parse_json, parse_timestamp, url_with, Ingest, IngestError, Request};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoRef {
    pub host: String,
    pub owner: String,
    pub name: String,
    /// Query terms that returned this repository, in query order.
    pub matched_terms: Vec<String>,
    pub stars: u64,
    pub forks: u64,
    /// Not reported by the search API; 0 unless filled in separately.
    pub contributors: u64,
    pub last_push: Option<i64>,
    pub default_branch: String,
}

impl RepoRef {
    /// Directory name used for this repository inside a scan corpus.
    pub fn corpus_dir(&self) -> String {
        format!("{}__{}", self.owner, self.name)
    }
}

fn u64_field(v: &Value, key: &str) -> u64 {
    v.get(key).and_then(Value::as_u64).unwrap_or(0)
}

fn str_field<'a>(v: &'a Value, key: &str) -> Option<&'a str> {
    v.get(key).and_then(Value::as_str)
}

impl Ingest {
    fn codehost_get(&self, path: &str, params: &[(&str, &str)]) -> Request {
        Request::get(url_with(&self.endpoints.codehost_api, path, params)).header("accept", "application/vnd.github+json")
    }

    /// Python repositories matching each term, merged by (host, owner, name).
    pub fn search_repositories(&self, terms: &[String], per_term: usize) -> Result<Vec<RepoRef>, IngestError> {
        let terms: Vec<String> = {
            let mut seen = BTreeSet::new();
            terms
                .iter()
                .map(|t| normalize_term(t))
                .filter(|t| !t.is_empty() && seen.insert(t.clone()))
                .collect()
        };
        if terms.is_empty() {
            return Err(IngestError::InvalidQuery("at least one search term is required".into()));
        }
        let per_page = per_term.clamp(1, 100).to_string();
        let mut merged: BTreeMap<(String, String, String), RepoRef> = BTreeMap::new();
        for term in &terms {
            let q = format!("\"{term}\" language:python");
            let req = self.codehost_get(
                "/search/repositories",
                &[("q", &q), ("sort", "stars"), ("order", "desc"), ("per_page", &per_page)],
            );
            let resp = self.send_ok(&req)?;
            let json = parse_json("repository search", &req, &resp)?;
            let items = json
                .get("items")
                .and_then(Value::as_array)
                .ok_or_else(|| parse_error("repository search", &req, &resp, "missing items array".into()))?;
            for item in items {
                let owner = item.get("owner").and_then(|o| str_field(o, "login"));
                let (Some(owner), Some(name)) = (owner, str_field(item, "name")) else {
                    return Err(parse_error("repository search", &req, &resp, "item without owner/name".into()));
                };
                let host = str_field(item, "html_url")
                    .and_then(|u| url::Url::parse(u).ok())
                    .and_then(|u| u.host_str().map(str::to_string))
                    .unwrap_or_else(|| req.host());
                let key = (host.clone(), owner.to_string(), name.to_string());
                let entry = merged.entry(key).or_insert_with(|| RepoRef {
                    host,
                    owner: owner.to_string(),
                    name: name.to_string(),
                    matched_terms: Vec::new(),
                    stars: u64_field(item, "stargazers_count"),
                    forks: u64_field(item, "forks_count"),
                    contributors: 0,
                    last_push: str_field(item, "pushed_at").and_then(parse_timestamp),
                    default_branch: str_field(item, "default_branch").unwrap_or("main").to_string(),
                });
                if !entry.matched_terms.contains(term) {
                    entry.matched_terms.push(term.clone());
                }
            }
        }
        tracing::info!(terms = terms.len(), repos = merged.len(), "repository search done");
        Ok(merged.into_values().collect())
    }

    /// Code-host metadata for a package's own source repository.
    pub fn fetch_repository_metadata(&self, package: &str, owner: &str, name: &str) -> Result<MetadataRecord, IngestError> {
        let req = self.codehost_get(&format!("/repos/{owner}/{name}"), &[]);
        let resp = self.send_ok(&req)?;
        let repo = parse_json("repository metadata", &req, &resp)?;
        if !repo.is_object() {
            return Err(parse_error("repository metadata", &req, &resp, "expected an object".into()));
        }
        let creq = self.codehost_get(&format!("/repos/{owner}/{name}/contributors"), &[("per_page", "100")]);
        let contributors = match self.send(&creq) {
            Ok(r) if r.is_success() => parse_json("contributors", &creq, &r)?.as_array().map_or(0, |a| a.len() as u64),
            Ok(_) => 0,
            Err(e @ IngestError::ReplayMiss { .. }) => {
                tracing::debug!(error = %e, "contributors not recorded");
                0
            }
            Err(e) => return Err(e),
        };
        let mut m = MetadataRecord::new(package, "head", Origin::CodeHost);
        m.star_count = u64_field(&repo, "stargazers_count");
        m.fork_count = u64_field(&repo, "forks_count");
        m.contributor_count = contributors;
        m.maintainer_count = u64::from(repo.get("owner").is_some());
        m.last_update = str_field(&repo, "pushed_at").and_then(parse_timestamp);
        m.keywords = repo
            .get("topics")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_str).map(|t| normalize_term(&t.replace('-', " "))).collect())
            .unwrap_or_default();
        m.project_url = str_field(&repo, "html_url").map(str::to_string);
        Ok(m)
    }

    /// Downloads up to `max_files` Python files of `repo` into
    /// `out_dir/<owner>__<name>/`. Returns the number of files written.
    pub fn fetch_repository_sources(&self, repo: &RepoRef, max_files: usize, out_dir: &Path) -> Result<usize, IngestError> {
        let req = self.codehost_get(
            &format!("/repos/{}/{}/git/trees/{}", repo.owner, repo.name, repo.default_branch),
            &[("recursive", "1")],
        );
        let resp = self.send_ok(&req)?;
        let json = parse_json("repository tree", &req, &resp)?;
        let tree = json
            .get("tree")
            .and_then(Value::as_array)
            .ok_or_else(|| parse_error("repository tree", &req, &resp, "missing tree array".into()))?;
        let mut paths: Vec<&str> = tree
            .iter()
            .filter(|e| str_field(e, "type") == Some("blob"))
            .filter_map(|e| str_field(e, "path"))
            .filter(|p| p.ends_with(".py") && is_safe_relative(p))
            .collect();
        paths.sort();
        paths.truncate(max_files);
        let root = out_dir.join(repo.corpus_dir());
        for path in &paths {
            let raw = Request::get(format!(
                "{}/{}/{}/{}/{}",
                self.endpoints.codehost_raw.trim_end_matches('/'),
                repo.owner,
                repo.name,
                repo.default_branch,
                path
            ));
            let body = self.send_ok(&raw)?.body;
            let dest = root.join(path);
            if let Some(parent) = dest.parent() {
                fs::create_dir_all(parent).map_err(|e| IngestError::Io(format!("{}: {e}", parent.display())))?;
            }
            fs::write(&dest, body).map_err(|e| IngestError::Io(format!("{}: {e}", dest.display())))?;
        }
        Ok(paths.len())
    }
}

fn is_safe_relative(p: &str) -> bool {
    Path::new(p).components().all(|c| matches!(c, Component::Normal(_)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Endpoints, FetchPolicy, StaticTransport};
    use std::sync::Arc;

    fn search_url(term: &str) -> String {
        url_with(
            "https://api.github.com",
            "/search/repositories",
            &[("q", &format!("\"{term}\" language:python")), ("sort", "stars"), ("order", "desc"), ("per_page", "30")],
        )
    }

    fn item(owner: &str, name: &str) -> String {
        format!(
            r#"{{"name":"{name}","owner":{{"login":"{owner}"}},"html_url":"https://github.com/{owner}/{name}","stargazers_count":10,"forks_count":2,"pushed_at":"2024-01-01T00:00:00Z","default_branch":"main"}}"#
        )
    }

    fn client(t: StaticTransport) -> Ingest {
        Ingest::new(Arc::new(t), Endpoints::default(), FetchPolicy::default()).unwrap()
    }

    fn get(url: String) -> Request {
        Request::get(url).header("accept", "application/vnd.github+json")
    }

    #[test]
    fn search_dedups_across_terms() {
        let t = StaticTransport::default()
            .with(&get(search_url("machine learning")), 200, &format!(r#"{{"items":[{},{},{}]}}"#, item("a", "x"), item("b", "y"), item("c", "z")))
            .with(&get(search_url("testing")), 200, &format!(r#"{{"items":[{}]}}"#, item("a", "x")));
        let repos = client(t)
            .search_repositories(&["machine learning".into(), "Testing".into()], 30)
            .unwrap();
        assert_eq!(repos.len(), 3);
        assert_eq!(repos[0].matched_terms, ["machine learning", "testing"]);
        assert_eq!(repos[0].last_push, Some(1_704_067_200));
        assert_eq!(repos[1].matched_terms, ["machine learning"]);
    }

    #[test]
    fn search_requires_terms() {
        let c = client(StaticTransport::default());
        assert!(matches!(c.search_repositories(&[], 10), Err(IngestError::InvalidQuery(_))));
        assert!(matches!(c.search_repositories(&["  ".into()], 10), Err(IngestError::InvalidQuery(_))));
    }

    #[test]
    fn malformed_search_is_parse_error() {
        let t = StaticTransport::default().with(&get(search_url("x")), 200, "{\"items\": [");
        assert!(matches!(client(t).search_repositories(&["x".into()], 30), Err(IngestError::Parse { .. })));
    }

    #[test]
    fn unsafe_paths_are_skipped() {
        assert!(is_safe_relative("pkg/mod.py"));
        assert!(!is_safe_relative("../evil.py"));
        assert!(!is_safe_relative("/etc/passwd.py"));
    }
}
