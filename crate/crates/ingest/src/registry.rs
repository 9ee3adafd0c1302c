//! Package registry metadata (PyPI JSON API).

use pkgraph_core::graph::{normalize_name, normalize_term, MetadataRecord, Origin};
use serde_json::Value;

use crate::{parse_error, parse_json, parse_timestamp, Ingest, IngestError, Request};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistryEntry {
    pub record: MetadataRecord,
    pub summary: String,
    /// `(owner, name)` of a code-host source repository, when linked.
    pub source_repository: Option<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegistryLookup {
    Found(Box<RegistryEntry>),
    NotFound,
}

impl RegistryLookup {
    pub fn found(&self) -> Option<&RegistryEntry> {
        match self {
            RegistryLookup::Found(e) => Some(e),
            RegistryLookup::NotFound => None,
        }
    }
}

/// Comma-separated when a comma is present, otherwise whitespace-separated.
pub fn split_keywords(raw: &str) -> Vec<String> {
    let parts: Vec<&str> = if raw.contains(',') {
        raw.split(',').collect()
    } else {
        raw.split_whitespace().collect()
    };
    let mut out: Vec<String> = Vec::new();
    for p in parts {
        let t = normalize_term(p);
        if !t.is_empty() && !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

fn github_repo(url: &str) -> Option<(String, String)> {
    let u = url::Url::parse(url).ok()?;
    if u.host_str()? != "github.com" {
        return None;
    }
    let mut segs = u.path_segments()?.filter(|s| !s.is_empty());
    let owner = segs.next()?.to_string();
    let name = segs.next()?.trim_end_matches(".git").to_string();
    Some((owner, name))
}

impl Ingest {
    pub fn fetch_registry_metadata(&self, package: &str) -> Result<RegistryLookup, IngestError> {
        let name = normalize_name(package).map_err(|e| IngestError::InvalidQuery(e.to_string()))?;
        let req = Request::get(format!("{}/{name}/json", self.endpoints.registry.trim_end_matches('/')));
        let resp = self.send(&req)?;
        if resp.status == 404 {
            return Ok(RegistryLookup::NotFound);
        }
        if !resp.is_success() {
            return Err(IngestError::Status { url: req.url.clone(), status: resp.status });
        }
        let json = parse_json("registry metadata", &req, &resp)?;
        let bad = |detail: &str| parse_error("registry metadata", &req, &resp, detail.to_string());
        let info = json.get("info").filter(|i| i.is_object()).ok_or_else(|| bad("missing info object"))?;
        let version = info.get("version").and_then(Value::as_str).ok_or_else(|| bad("missing info.version"))?;
        let s = |key: &str| info.get(key).and_then(Value::as_str).unwrap_or("").trim().to_string();

        let mut record = MetadataRecord::new(&name, version, Origin::Registry);
        record.requires_runtime = s("requires_python");
        record.keywords = split_keywords(&s("keywords"));
        let people: std::collections::BTreeSet<String> =
            [s("author"), s("maintainer")].into_iter().filter(|p| !p.is_empty()).collect();
        record.maintainer_count = people.len() as u64;
        let releases = json.get("releases").and_then(Value::as_object);
        record.release_count = releases.map_or(0, |r| r.len() as u64);
        let uploads = json
            .get("urls")
            .and_then(Value::as_array)
            .into_iter()
            .flatten()
            .chain(releases.and_then(|r| r.get(version)).and_then(Value::as_array).into_iter().flatten());
        record.last_update = uploads
            .filter_map(|f| f.get("upload_time_iso_8601").and_then(Value::as_str))
            .filter_map(parse_timestamp)
            .max();
        record.download_count = info
            .get("downloads")
            .and_then(|d| d.get("last_month"))
            .and_then(Value::as_i64)
            .map_or(0, |d| d.max(0) as u64);

        let mut urls: Vec<String> = Vec::new();
        if let Some(map) = info.get("project_urls").and_then(Value::as_object) {
            for preferred in ["Source", "Source Code", "Repository", "Code", "Homepage"] {
                if let Some(u) = map.get(preferred).and_then(Value::as_str) {
                    urls.push(u.to_string());
                }
            }
            urls.extend(map.values().filter_map(Value::as_str).map(str::to_string));
        }
        urls.push(s("home_page"));
        record.project_url = urls.iter().find(|u| !u.is_empty()).cloned();
        let source_repository = urls.iter().find_map(|u| github_repo(u));

        Ok(RegistryLookup::Found(Box::new(RegistryEntry {
            record,
            summary: s("summary"),
            source_repository,
        })))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Endpoints, FetchPolicy, StaticTransport};
    use std::sync::Arc;

    const DJANGO: &str = r#"{"info":{"name":"Django","version":"5.0","requires_python":">=3.10","keywords":"web, framework","author":"Django Software Foundation","maintainer":"","summary":"A high-level Python web framework","project_urls":{"Source":"https://github.com/django/django"},"downloads":{"last_month":-1}},"releases":{"4.2":[],"5.0":[{"upload_time_iso_8601":"2023-12-04T13:12:41.502020Z"}]},"urls":[{"upload_time_iso_8601":"2023-12-04T13:12:41.502020Z"}]}"#;

    fn client() -> Ingest {
        let t = StaticTransport::default()
            .with(&Request::get("https://pypi.org/pypi/django/json"), 200, DJANGO)
            .with(&Request::get("https://pypi.org/pypi/definitely-not-a-package-xyz/json"), 404, "{\"message\":\"Not Found\"}")
            .with(&Request::get("https://pypi.org/pypi/broken/json"), 200, &DJANGO[..40]);
        Ingest::new(Arc::new(t), Endpoints::default(), FetchPolicy::default()).unwrap()
    }

    #[test]
    fn parses_registry_entry() {
        let e = client().fetch_registry_metadata("Django").unwrap();
        let e = e.found().unwrap();
        assert_eq!(e.record.version, "5.0");
        assert!(e.record.keywords.contains(&"web".to_string()));
        assert_eq!(e.record.origin, Origin::Registry);
        assert_eq!(e.record.release_count, 2);
        assert_eq!(e.record.maintainer_count, 1);
        assert_eq!(e.record.download_count, 0);
        assert_eq!(e.record.last_update, Some(1_701_695_561));
        assert_eq!(e.source_repository, Some(("django".into(), "django".into())));
    }

    #[test]
    fn missing_package_is_a_value() {
        assert_eq!(client().fetch_registry_metadata("definitely-not-a-package-xyz").unwrap(), RegistryLookup::NotFound);
    }

    #[test]
    fn truncated_payload_is_parse_error() {
        match client().fetch_registry_metadata("broken").unwrap_err() {
            IngestError::Parse { request_key, .. } => {
                assert_eq!(request_key, Request::get("https://pypi.org/pypi/broken/json").key())
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn keyword_splitting() {
        assert_eq!(split_keywords("web, Web Framework ,,"), ["web", "web framework"]);
        assert_eq!(split_keywords("nlp  spacy nlp"), ["nlp", "spacy"]);
    }
}
