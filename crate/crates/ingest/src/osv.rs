//! Advisory lookup against the OSV query API.

use std::collections::BTreeMap;

use pkgraph_core::graph::{normalize_name, Severity, VersionRange, VulnerabilityRecord};
use serde_json::{json, Value};

use crate::{parse_error, parse_json, Ingest, IngestError, Request};

const MAX_PAGES: usize = 50;

fn severity_of(vuln: &Value) -> Severity {
    let labelled = vuln
        .get("database_specific")
        .and_then(|d| d.get("severity"))
        .and_then(Value::as_str)
        .map(Severity::parse_loose);
    if let Some(s) = labelled.filter(|s| *s != Severity::Unknown) {
        return s;
    }
    // numeric scores only; CVSS vectors are left unclassified
    let numeric = vuln
        .get("severity")
        .and_then(Value::as_array)
        .into_iter()
        .flatten()
        .filter_map(|s| s.get("score").and_then(Value::as_str))
        .filter_map(|s| s.parse::<f64>().ok())
        .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))));
    match numeric {
        Some(x) if x >= 9.0 => Severity::Critical,
        Some(x) if x >= 7.0 => Severity::High,
        Some(x) if x >= 4.0 => Severity::Medium,
        Some(x) if x > 0.0 => Severity::Low,
        _ => Severity::Unknown,
    }
}

/// ECOSYSTEM/SEMVER ranges of the affected entries for `package`.
fn ranges_of(vuln: &Value, package: &str) -> Vec<VersionRange> {
    let mut out = Vec::new();
    for affected in vuln.get("affected").and_then(Value::as_array).into_iter().flatten() {
        let name = affected
            .get("package")
            .and_then(|p| p.get("name"))
            .and_then(Value::as_str)
            .and_then(|n| normalize_name(n).ok());
        if name.as_deref() != Some(package) {
            continue;
        }
        for range in affected.get("ranges").and_then(Value::as_array).into_iter().flatten() {
            if range.get("type").and_then(Value::as_str) == Some("GIT") {
                continue;
            }
            let mut open: Option<String> = None;
            let mut started = false;
            for event in range.get("events").and_then(Value::as_array).into_iter().flatten() {
                if let Some(v) = event.get("introduced").and_then(Value::as_str) {
                    if started {
                        out.push(VersionRange { introduced: open.take(), fixed: None });
                    }
                    open = Some(v.to_string());
                    started = true;
                } else if let Some(v) = event.get("fixed").and_then(Value::as_str) {
                    out.push(VersionRange { introduced: open.take(), fixed: Some(v.to_string()) });
                    started = false;
                }
            }
            if started {
                out.push(VersionRange { introduced: open, fixed: None });
            }
        }
    }
    out.retain(VersionRange::is_well_formed);
    out
}

impl Ingest {
    /// One record per advisory id; a record is `fixed` when every affected
    /// range has a fixing release.
    pub fn fetch_vulnerabilities(&self, package: &str) -> Result<Vec<VulnerabilityRecord>, IngestError> {
        let name = normalize_name(package).map_err(|e| IngestError::InvalidQuery(e.to_string()))?;
        let url = format!("{}/query", self.endpoints.osv.trim_end_matches('/'));
        let mut by_id: BTreeMap<String, VulnerabilityRecord> = BTreeMap::new();
        let mut token: Option<String> = None;
        for _ in 0..MAX_PAGES {
            let mut body = json!({"package": {"name": name, "ecosystem": "PyPI"}});
            if let Some(t) = &token {
                body["page_token"] = json!(t);
            }
            let req = Request::post_json(url.clone(), &body);
            let resp = self.send_ok(&req)?;
            let page = parse_json("advisory query", &req, &resp)?;
            if !page.is_object() {
                return Err(parse_error("advisory query", &req, &resp, "expected an object".into()));
            }
            for vuln in page.get("vulns").and_then(Value::as_array).into_iter().flatten() {
                let Some(id) = vuln.get("id").and_then(Value::as_str).filter(|s| !s.trim().is_empty()) else {
                    return Err(parse_error("advisory query", &req, &resp, "advisory without id".into()));
                };
                let affected_ranges = ranges_of(vuln, &name);
                let fixed = !affected_ranges.is_empty() && affected_ranges.iter().all(|r| r.fixed.is_some());
                by_id.entry(id.trim().to_string()).or_insert(VulnerabilityRecord {
                    id: id.trim().to_string(),
                    package: name.clone(),
                    severity: severity_of(vuln),
                    affected_ranges,
                    fixed,
                });
            }
            token = page.get("next_page_token").and_then(Value::as_str).map(str::to_string);
            if token.is_none() {
                break;
            }
        }
        Ok(by_id.into_values().collect())
    }
}
