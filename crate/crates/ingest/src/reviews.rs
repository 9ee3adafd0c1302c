//! Community review collection. Each platform is served by a
//! [`PlatformAdapter`] looked up in an [`AdapterRegistry`], so new sources
//! plug in without touching the collector.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use pkgraph_core::graph::normalize_name;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::pacing::run_bounded;
use crate::transport::now_unix;
use crate::{parse_json, url_with, Endpoints, Ingest, IngestError, Request};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Platform {
    QaForum,
    CodeHost,
    Aggregator,
    LinkForum,
    Blog,
}

impl Platform {
    pub const ALL: [Platform; 5] = [
        Platform::QaForum,
        Platform::CodeHost,
        Platform::Aggregator,
        Platform::LinkForum,
        Platform::Blog,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Platform::QaForum => "qa_forum",
            Platform::CodeHost => "code_host",
            Platform::Aggregator => "aggregator",
            Platform::LinkForum => "link_forum",
            Platform::Blog => "blog",
        }
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Platform {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Platform::ALL
            .into_iter()
            .find(|p| p.as_str() == s.trim())
            .ok_or_else(|| format!("unknown platform {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ReviewStatement {
    pub package: String,
    pub platform: Platform,
    pub text: String,
    pub url: String,
    pub fetched_at: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewBatch {
    pub statements: Vec<ReviewStatement>,
    pub warnings: Vec<String>,
}

/// A raw (text, url) pair pulled out of a platform payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawReview {
    pub text: String,
    pub url: String,
}

pub trait PlatformAdapter: Send + Sync {
    fn platform(&self) -> Platform;
    fn request(&self, package: &str, endpoints: &Endpoints) -> Request;
    fn parse(&self, payload: &Value) -> Result<Vec<RawReview>, String>;
}

#[derive(Default)]
pub struct AdapterRegistry {
    adapters: BTreeMap<Platform, Box<dyn PlatformAdapter>>,
}

impl AdapterRegistry {
    pub fn with_defaults() -> Self {
        let mut r = AdapterRegistry::default();
        r.register(Box::new(QaForum));
        r.register(Box::new(CodeHostIssues));
        r.register(Box::new(Aggregator));
        r.register(Box::new(LinkForum));
        r.register(Box::new(Blog));
        r
    }

    /// Replaces any adapter already registered for the same platform.
    pub fn register(&mut self, adapter: Box<dyn PlatformAdapter>) {
        self.adapters.insert(adapter.platform(), adapter);
    }

    pub fn get(&self, platform: Platform) -> Option<&dyn PlatformAdapter> {
        self.adapters.get(&platform).map(|b| b.as_ref())
    }
}

/// Drops markup and decodes the handful of entities forum APIs emit.
pub fn strip_markup(html: &str) -> String {
    let mut out = String::with_capacity(html.len());
    let mut in_tag = false;
    for c in html.chars() {
        match c {
            '<' => {
                in_tag = true;
                out.push(' ');
            }
            '>' if in_tag => in_tag = false,
            _ if !in_tag => out.push(c),
            _ => {}
        }
    }
    let decoded = out
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&#x27;", "'")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&amp;", "&");
    decoded.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn s<'a>(v: &'a Value, key: &str) -> &'a str {
    v.get(key).and_then(Value::as_str).unwrap_or("")
}

fn joined(parts: &[&str]) -> String {
    strip_markup(&parts.iter().filter(|p| !p.trim().is_empty()).copied().collect::<Vec<_>>().join(". "))
}

fn array<'a>(payload: &'a Value, path: &[&str]) -> Result<&'a Vec<Value>, String> {
    let mut cur = payload;
    for key in path {
        cur = cur.get(key).ok_or_else(|| format!("missing field {key}"))?;
    }
    cur.as_array().ok_or_else(|| format!("{} is not an array", path.join(".")))
}

struct QaForum;

impl PlatformAdapter for QaForum {
    fn platform(&self) -> Platform {
        Platform::QaForum
    }
    fn request(&self, package: &str, e: &Endpoints) -> Request {
        Request::get(url_with(
            &e.qa_forum,
            "/search/advanced",
            &[("q", package), ("tagged", "python"), ("site", "stackoverflow"), ("filter", "withbody"), ("order", "desc"), ("sort", "relevance")],
        ))
    }
    fn parse(&self, payload: &Value) -> Result<Vec<RawReview>, String> {
        Ok(array(payload, &["items"])?
            .iter()
            .map(|i| RawReview { text: joined(&[s(i, "title"), s(i, "body")]), url: s(i, "link").to_string() })
            .collect())
    }
}

struct CodeHostIssues;

impl PlatformAdapter for CodeHostIssues {
    fn platform(&self) -> Platform {
        Platform::CodeHost
    }
    fn request(&self, package: &str, e: &Endpoints) -> Request {
        Request::get(url_with(
            &e.codehost_api,
            "/search/issues",
            &[("q", &format!("\"{package}\" in:title,body type:issue")), ("per_page", "50")],
        ))
        .header("accept", "application/vnd.github+json")
    }
    fn parse(&self, payload: &Value) -> Result<Vec<RawReview>, String> {
        Ok(array(payload, &["items"])?
            .iter()
            .map(|i| RawReview { text: joined(&[s(i, "title"), s(i, "body")]), url: s(i, "html_url").to_string() })
            .collect())
    }
}

struct Aggregator;

impl PlatformAdapter for Aggregator {
    fn platform(&self) -> Platform {
        Platform::Aggregator
    }
    fn request(&self, package: &str, e: &Endpoints) -> Request {
        Request::get(url_with(&e.aggregator, "/search", &[("query", package), ("tags", "comment"), ("hitsPerPage", "50")]))
    }
    fn parse(&self, payload: &Value) -> Result<Vec<RawReview>, String> {
        Ok(array(payload, &["hits"])?
            .iter()
            .map(|h| {
                let url = match s(h, "objectID") {
                    "" => String::new(),
                    id => format!("https://news.ycombinator.com/item?id={id}"),
                };
                RawReview { text: joined(&[s(h, "comment_text")]), url }
            })
            .collect())
    }
}

struct LinkForum;

impl PlatformAdapter for LinkForum {
    fn platform(&self) -> Platform {
        Platform::LinkForum
    }
    fn request(&self, package: &str, e: &Endpoints) -> Request {
        Request::get(url_with(&e.link_forum, "/r/Python/search.json", &[("q", package), ("restrict_sr", "1"), ("limit", "50")]))
    }
    fn parse(&self, payload: &Value) -> Result<Vec<RawReview>, String> {
        Ok(array(payload, &["data", "children"])?
            .iter()
            .map(|c| {
                let d = c.get("data").unwrap_or(&Value::Null);
                let link = s(d, "permalink");
                let url = if link.starts_with('/') { format!("https://www.reddit.com{link}") } else { link.to_string() };
                RawReview { text: joined(&[s(d, "title"), s(d, "selftext")]), url }
            })
            .collect())
    }
}

struct Blog;

impl PlatformAdapter for Blog {
    fn platform(&self) -> Platform {
        Platform::Blog
    }
    fn request(&self, package: &str, e: &Endpoints) -> Request {
        let tag: String = package.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        Request::get(url_with(&e.blog, "/articles", &[("tag", &tag), ("per_page", "30")]))
    }
    fn parse(&self, payload: &Value) -> Result<Vec<RawReview>, String> {
        Ok(payload
            .as_array()
            .ok_or("expected an array of articles")?
            .iter()
            .map(|a| RawReview { text: joined(&[s(a, "title"), s(a, "description")]), url: s(a, "url").to_string() })
            .collect())
    }
}

fn text_hash(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

impl Ingest {
    /// Reviews mentioning `package` from each requested platform. A failing
    /// platform becomes a warning; the others still contribute.
    pub fn collect_reviews(&self, package: &str, platforms: &[Platform]) -> Result<ReviewBatch, IngestError> {
        if platforms.is_empty() {
            return Err(IngestError::InvalidQuery("at least one platform is required".into()));
        }
        let package = normalize_name(package).map_err(|e| IngestError::InvalidQuery(e.to_string()))?;
        let platforms: Vec<Platform> = platforms.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();

        let outcomes = run_bounded(&platforms, self.policy.max_parallel, |&p| self.collect_one(&package, p));

        let mut batch = ReviewBatch::default();
        let mut seen = BTreeSet::new();
        for (platform, outcome) in platforms.iter().zip(outcomes) {
            match outcome {
                Ok(statements) => {
                    for st in statements {
                        if seen.insert((st.platform, st.url.clone(), text_hash(&st.text))) {
                            batch.statements.push(st);
                        }
                    }
                }
                Err(e) => {
                    tracing::warn!(%platform, %package, error = %e, "review platform failed");
                    batch.warnings.push(format!("{platform}: {e}"));
                }
            }
        }
        batch
            .statements
            .sort_by(|a, b| (a.platform, &a.url, &a.text).cmp(&(b.platform, &b.url, &b.text)));
        Ok(batch)
    }

    fn collect_one(&self, package: &str, platform: Platform) -> Result<Vec<ReviewStatement>, IngestError> {
        let adapter = self
            .adapters
            .get(platform)
            .ok_or_else(|| IngestError::InvalidQuery(format!("no adapter registered for {platform}")))?;
        let req = adapter.request(package, &self.endpoints);
        let resp = self.send_ok(&req)?;
        let json = parse_json(&format!("{platform} reviews"), &req, &resp)?;
        let raw = adapter
            .parse(&json)
            .map_err(|detail| crate::parse_error(&format!("{platform} reviews"), &req, &resp, detail))?;
        let fetched_at = resp.recorded_at.unwrap_or_else(now_unix);
        Ok(raw
            .into_iter()
            .filter(|r| !r.text.trim().is_empty() && url::Url::parse(&r.url).is_ok())
            .map(|r| ReviewStatement {
                package: package.to_string(),
                platform,
                text: r.text,
                url: r.url,
                fetched_at,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{FetchPolicy, StaticTransport};
    use std::sync::Arc;

    fn request(p: Platform, pkg: &str) -> Request {
        AdapterRegistry::with_defaults().get(p).unwrap().request(pkg, &Endpoints::default())
    }

    const QA: &str = r#"{"items":[
        {"title":"Is Django fast?","body":"<p>Django is &quot;fast&quot; enough</p>","link":"https://stackoverflow.com/q/1"},
        {"title":"Django ORM slow","body":"","link":"https://stackoverflow.com/q/2"},
        {"title":"Is Django fast?","body":"<p>Django is &quot;fast&quot; enough</p>","link":"https://stackoverflow.com/q/1"},
        {"title":"Django admin","body":"great tool","link":"https://stackoverflow.com/q/3"}
    ]}"#;

    fn client() -> Ingest {
        let t = StaticTransport::default()
            .with(&request(Platform::QaForum, "django"), 200, QA)
            .with(&request(Platform::Blog, "django"), 200, r#"[{"title":"Django tips","description":"","url":"https://dev.to/x/django"}]"#);
        Ingest::new(Arc::new(t), Endpoints::default(), FetchPolicy::default()).unwrap()
    }

    #[test]
    fn four_threads_one_duplicate() {
        let b = client().collect_reviews("django", &[Platform::QaForum]).unwrap();
        assert_eq!(b.statements.len(), 3);
        assert!(b.warnings.is_empty());
        assert_eq!(b.statements[0].text, "Is Django fast?. Django is \"fast\" enough");
        let urls: Vec<_> = b.statements.iter().map(|s| s.url.as_str()).collect();
        assert_eq!(urls, ["https://stackoverflow.com/q/1", "https://stackoverflow.com/q/2", "https://stackoverflow.com/q/3"]);
    }

    #[test]
    fn unavailable_platform_warns() {
        let b = client()
            .collect_reviews("django", &[Platform::Blog, Platform::QaForum, Platform::Aggregator])
            .unwrap();
        assert_eq!(b.statements.len(), 4);
        assert_eq!(b.warnings.len(), 1);
        assert!(b.warnings[0].starts_with("aggregator"));
        assert_eq!(b.statements.last().unwrap().platform, Platform::Blog);
    }

    #[test]
    fn empty_platforms_rejected() {
        assert!(matches!(client().collect_reviews("django", &[]), Err(IngestError::InvalidQuery(_))));
    }

    #[test]
    fn platform_names_round_trip() {
        for p in Platform::ALL {
            assert_eq!(p.as_str().parse::<Platform>().unwrap(), p);
            assert_eq!(serde_json::to_value(p).unwrap(), Value::String(p.as_str().into()));
        }
    }

    #[test]
    fn markup_is_stripped() {
        assert_eq!(strip_markup("<p>a &amp; b</p>\n<code>x</code>"), "a & b x");
    }
}
