use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Headers that differ between otherwise identical exchanges. They are left
/// out of request keys and never written to fixtures.
const VOLATILE_HEADERS: &[&str] = &[
    "age",
    "authorization",
    "cf-cache-status",
    "cf-ray",
    "cookie",
    "date",
    "etag",
    "expires",
    "last-modified",
    "nel",
    "report-to",
    "server-timing",
    "set-cookie",
    "user-agent",
    "via",
    "x-cache",
    "x-cache-hits",
    "x-github-request-id",
    "x-request-id",
    "x-served-by",
    "x-timer",
];

pub fn is_volatile_header(name: &str) -> bool {
    let name = name.to_ascii_lowercase();
    VOLATILE_HEADERS.contains(&name.as_str()) || name.starts_with("x-ratelimit-") || name.starts_with("x-amz-")
}

/// Lowercase names, volatile entries dropped.
pub fn canonical_headers(headers: &BTreeMap<String, String>) -> BTreeMap<String, String> {
    headers
        .iter()
        .filter(|(k, _)| !is_volatile_header(k))
        .map(|(k, v)| (k.to_ascii_lowercase(), v.trim().to_string()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub method: String,
    pub url: String,
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
}

impl Request {
    pub fn get(url: impl Into<String>) -> Self {
        Request {
            method: "GET".into(),
            url: url.into(),
            headers: BTreeMap::new(),
            body: None,
        }
    }

    pub fn post_json(url: impl Into<String>, body: &serde_json::Value) -> Self {
        let mut r = Request {
            method: "POST".into(),
            url: url.into(),
            headers: BTreeMap::new(),
            body: Some(body.to_string()),
        };
        r.headers.insert("content-type".into(), "application/json".into());
        r
    }

    pub fn header(mut self, name: &str, value: impl Into<String>) -> Self {
        self.headers.insert(name.to_ascii_lowercase(), value.into());
        self
    }

    pub fn host(&self) -> String {
        url::Url::parse(&self.url)
            .ok()
            .and_then(|u| u.host_str().map(str::to_string))
            .unwrap_or_else(|| "unknown-host".into())
    }

    /// The request with volatile headers removed, as stored in fixtures.
    pub fn canonical(&self) -> Request {
        Request {
            method: self.method.to_ascii_uppercase(),
            url: self.url.clone(),
            headers: canonical_headers(&self.headers),
            body: self.body.clone(),
        }
    }

    /// Stable identifier used to name fixture files.
    pub fn key(&self) -> String {
        let c = self.canonical();
        let mut h = Sha256::new();
        h.update(c.method.as_bytes());
        h.update(b"\n");
        h.update(c.url.as_bytes());
        h.update(b"\n");
        for (k, v) in &c.headers {
            h.update(k.as_bytes());
            h.update(b":");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.update(b"\n");
        if let Some(body) = &c.body {
            h.update(body.as_bytes());
        }
        let digest = h.finalize();
        digest[..12].iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Display for Request {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.method, self.url)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub status: u16,
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
    pub body: String,
    /// When the exchange happened (UTC seconds). Replayed responses carry
    /// the recording time so downstream timestamps stay reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recorded_at: Option<i64>,
}

impl Response {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    /// Worth retrying: throttling and server-side failures.
    pub fn is_transient(&self) -> bool {
        self.status == 429 || self.status >= 500
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("network error talking to {host} after {attempts} attempt(s): {message}")]
    Network { host: String, attempts: u32, message: String },
    #[error("request not present in fixture bundle: {request}")]
    ReplayMiss { request: String },
    #[error("fixture bundle error: {0}")]
    Fixture(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub trait Transport: Send + Sync {
    fn execute(&self, request: &Request) -> Result<Response, TransportError>;
}

impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    fn execute(&self, request: &Request) -> Result<Response, TransportError> {
        (**self).execute(request)
    }
}

pub fn now_unix() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0)
}
