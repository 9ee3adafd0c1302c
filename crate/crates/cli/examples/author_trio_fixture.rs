//! Regenerates the offline replay bundle for the three-package scenario.
//!
//! Runs the real two-pass ingest (search, scan, then package lookups)
//! against canned upstream responses and records every exchange:
//!
//!     cargo run -p pkgraph --example author_trio_fixture -- crates/cli/fixtures/trio/replay
//!
//! Review platforms other than the Q&A forum are deliberately left out so
//! replay exercises the partial-coverage warnings.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use pkgraph::config::IngestSettings;
use pkgraph::pipeline::{self, IngestPlan};
use pkgraph_core::Execution;
use pkgraph_ingest::{Endpoints, FetchPolicy, Ingest, RecordingTransport, Request, Response, Transport, TransportError};
use serde_json::json;

const RECORDED_AT: i64 = 1_717_200_000;

const FILES: &[(&str, &str)] = &[
    ("shop/views.py", "from django.http import HttpResponse\nfrom django.shortcuts import render\n\n\ndef index(request):\n    return render(request, \"index.html\")\n"),
    ("shop/models.py", "from django.db import models\n\n\nclass Product(models.Model):\n    name = models.CharField(max_length=80)\n"),
    ("shop/urls.py", "from django.urls import path\n\nfrom . import views\n\nurlpatterns = [path(\"\", views.index)]\n"),
    ("shop/search.py", "import spacy\nfrom django.db.models import Q\n\nnlp = spacy.load(\"en_core_web_sm\")\n"),
    ("shop/nlp.py", "import json\n\nimport spacy\n\n\ndef lemmas(text):\n    return [t.lemma_ for t in spacy.blank(\"en\")(text)]\n"),
    ("tests/test_ui.py", "# browser checks for the web framework\nfrom selenium import webdriver\n\n\ndef test_home():\n    driver = webdriver.Firefox()\n    driver.quit()\n"),
];

fn registry(name: &str, keywords: &str, summary: &str, source: Option<&str>) -> serde_json::Value {
    let mut urls = serde_json::Map::new();
    if let Some(s) = source {
        urls.insert("Source".into(), json!(s));
    }
    json!({
        "info": {
            "name": name,
            "version": match name { "Django" => "5.0.6", "spacy" => "3.7.4", _ => "4.21.0" },
            "requires_python": ">=3.8",
            "keywords": keywords,
            "author": format!("{name} maintainers"),
            "maintainer": "",
            "summary": summary,
            "project_urls": urls,
            "home_page": "",
        },
        "releases": {},
        "urls": [{"upload_time_iso_8601": "2024-05-07T14:00:00.000000Z"}],
    })
}

fn qa(items: &[(&str, &str)]) -> serde_json::Value {
    let items: Vec<_> = items
        .iter()
        .map(|(title, link)| json!({"title": title, "body": "", "link": link}))
        .collect();
    json!({ "items": items })
}

/// Canned upstream: answers by URL, refuses everything else.
struct Upstream {
    routes: Vec<(String, u16, String)>,
}

impl Upstream {
    fn new() -> Self {
        let e = Endpoints::default();
        let mut routes: Vec<(String, u16, String)> = Vec::new();
        let mut add = |needle: String, status: u16, body: serde_json::Value| routes.push((needle, status, body.to_string()));

        add(
            format!("{}/search/repositories?q=%22web+framework%22", e.codehost_api),
            200,
            json!({"items": [{
                "name": "shop", "owner": {"login": "acme"}, "html_url": "https://github.com/acme/shop",
                "stargazers_count": 42, "forks_count": 7, "pushed_at": "2024-05-30T09:00:00Z", "default_branch": "main"
            }]}),
        );
        let tree: Vec<_> = FILES.iter().map(|(p, _)| json!({"path": p, "type": "blob"})).chain([json!({"path": "README.md", "type": "blob"})]).collect();
        add(format!("{}/repos/acme/shop/git/trees/main", e.codehost_api), 200, json!({ "tree": tree }));

        add(
            format!("{}/django/json", e.registry),
            200,
            registry("Django", "web framework, orm", "A high-level Python web framework", Some("https://github.com/django/django")),
        );
        add(
            format!("{}/selenium/json", e.registry),
            200,
            registry("selenium", "testing, browser automation", "Official Python bindings for Selenium WebDriver", None),
        );
        add(
            format!("{}/spacy/json", e.registry),
            200,
            registry("spacy", "nlp, natural language processing", "Industrial-strength Natural Language Processing", None),
        );
        add(
            format!("{}/repos/django/django/contributors", e.codehost_api),
            200,
            json!([{"login": "a"}, {"login": "b"}, {"login": "c"}]),
        );
        add(
            format!("{}/repos/django/django", e.codehost_api),
            200,
            json!({
                "name": "django", "owner": {"login": "django"}, "html_url": "https://github.com/django/django",
                "stargazers_count": 78000, "forks_count": 31000, "pushed_at": "2024-05-31T18:00:00Z",
                "topics": ["python", "web"]
            }),
        );

        add(
            format!("{}/search/advanced?q=django&", e.qa_forum),
            200,
            qa(&[
                ("views are fast", "https://stackoverflow.com/q/9001"),
                ("admin is stable", "https://stackoverflow.com/q/9002"),
                ("ORM gets slow on joins", "https://stackoverflow.com/q/9003"),
                ("ORM gets slow on joins", "https://stackoverflow.com/q/9003"),
            ]),
        );
        add(
            format!("{}/search/advanced?q=spacy&", e.qa_forum),
            200,
            qa(&[("spaCy crashes on long documents", "https://stackoverflow.com/q/9101")]),
        );
        add(format!("{}/search/advanced?q=selenium&", e.qa_forum), 200, qa(&[]));
        Upstream { routes }
    }
}

impl Transport for Upstream {
    fn execute(&self, request: &Request) -> Result<Response, TransportError> {
        let found = if request.method == "POST" {
            // advisory database: one open advisory for django, none elsewhere
            let body = request.body.as_deref().unwrap_or("");
            let vulns = if body.contains("\"name\":\"django\"") {
                json!({"vulns": [{
                    "id": "CVE-2024-99001",
                    "database_specific": {"severity": "HIGH"},
                    "affected": [{"package": {"name": "django", "ecosystem": "PyPI"},
                                  "ranges": [{"type": "ECOSYSTEM", "events": [{"introduced": "0"}]}]}]
                }]})
            } else {
                json!({})
            };
            Some((200, vulns.to_string()))
        } else if let Some(path) = request.url.strip_prefix(&format!("{}/acme/shop/main/", Endpoints::default().codehost_raw)) {
            FILES.iter().find(|(p, _)| *p == path).map(|(_, body)| (200, body.to_string()))
        } else {
            self.routes
                .iter()
                .find(|(needle, _, _)| request.url.starts_with(needle.as_str()))
                .map(|(_, status, body)| (*status, body.clone()))
        };
        match found {
            Some((status, body)) => Ok(Response {
                status,
                headers: BTreeMap::from([("content-type".to_string(), "application/json".to_string())]),
                body,
                recorded_at: Some(RECORDED_AT),
            }),
            None => Err(TransportError::Network {
                host: request.host(),
                attempts: 1,
                message: "not part of the scenario".into(),
            }),
        }
    }
}

fn main() -> anyhow::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "crates/cli/fixtures/trio/replay".into()));
    if out.exists() {
        std::fs::remove_dir_all(&out)?;
    }
    let recorder = RecordingTransport::new(Upstream::new(), &out)?;
    let policy = FetchPolicy { max_retries: 1, backoff_base: 1, ..FetchPolicy::default() };
    let client = Ingest::new(Arc::new(recorder), Endpoints::default(), policy)?;

    let tmp = tempfile::tempdir()?;
    let staging = tmp.path().to_path_buf();
    let settings = IngestSettings::default();
    let first = IngestPlan { terms: vec!["web framework".into()], packages: vec![], settings: settings.clone() };
    pipeline::run_ingest(&client, &first, &staging)?;
    let staged = pipeline::Staging::load(&staging)?;
    let scan = pipeline::run_scan(&staged.corpus_dir(), staged.registry_names(), Execution::Sequential, false)?;
    let second = IngestPlan { terms: vec![], packages: pipeline::packages_from_scan(&scan), settings };
    let summary = pipeline::run_ingest(&client, &second, &staging)?;
    println!("recorded into {}: {} packages, {} warnings", out.display(), summary.packages, summary.warnings.len());
    Ok(())
}
