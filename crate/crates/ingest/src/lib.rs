//! Acquisition clients for the code host, the package registry, the OSV
//! advisory service and community review platforms. Every client talks
//! through a [`Transport`], so the same code runs live, records fixture
//! bundles, or replays them offline.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

pub mod codehost;
pub mod fixture;
pub mod live;
pub mod osv;
pub mod pacing;
pub mod registry;
pub mod reviews;
pub mod transport;

pub use codehost::RepoRef;
pub use fixture::{record_session, RecordingTransport, ReplayTransport, StaticTransport, FIXTURE_VERSION};
pub use live::LiveTransport;
pub use pacing::{run_bounded, Clock, FetchPolicy, ManualClock, PacedTransport, SystemClock};
pub use registry::{RegistryEntry, RegistryLookup};
pub use reviews::{Platform, ReviewBatch, ReviewStatement};
pub use transport::{Request, Response, Transport, TransportError};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum IngestError {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("fetch from {host} failed after {attempts} attempt(s): {message}")]
    Fetch { host: String, attempts: u32, message: String },
    #[error("request not present in fixture bundle: {request}")]
    ReplayMiss { request: String },
    #[error("{url} answered HTTP {status}")]
    Status { url: String, status: u16 },
    /// `payload` names the fixture key of the offending response and quotes
    /// its first bytes.
    #[error("cannot parse {what} (request {request_key}): {detail}; payload starts {payload:?}")]
    Parse {
        what: String,
        request_key: String,
        detail: String,
        payload: String,
    },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("fixture error: {0}")]
    Fixture(String),
    #[error("invalid fetch policy: {0}")]
    InvalidPolicy(String),
}

impl From<TransportError> for IngestError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::Network { host, attempts, message } => IngestError::Fetch { host, attempts, message },
            TransportError::ReplayMiss { request } => IngestError::ReplayMiss { request },
            TransportError::Fixture(m) => IngestError::Fixture(m),
            TransportError::Io(m) => IngestError::Io(m),
        }
    }
}

/// Base URLs of every upstream service.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoints {
    pub codehost_api: String,
    pub codehost_raw: String,
    pub registry: String,
    pub osv: String,
    pub qa_forum: String,
    pub link_forum: String,
    pub aggregator: String,
    pub blog: String,
    pub codehost_token: Option<String>,
}

impl Default for Endpoints {
    fn default() -> Self {
        Endpoints {
            codehost_api: "https://api.github.com".into(),
            codehost_raw: "https://raw.githubusercontent.com".into(),
            registry: "https://pypi.org/pypi".into(),
            osv: "https://api.osv.dev/v1".into(),
            qa_forum: "https://api.stackexchange.com/2.3".into(),
            link_forum: "https://www.reddit.com".into(),
            aggregator: "https://hn.algolia.com/api/v1".into(),
            blog: "https://dev.to/api".into(),
            codehost_token: None,
        }
    }
}

impl Endpoints {
    /// Defaults overridden by `PKGRAPH_*` environment variables.
    pub fn from_env() -> Self {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Self {
        let d = Endpoints::default();
        let pick = |key: &str, default: String| {
            get(key)
                .filter(|v| !v.trim().is_empty())
                .map(|v| v.trim().trim_end_matches('/').to_string())
                .unwrap_or(default)
        };
        Endpoints {
            codehost_api: pick("PKGRAPH_CODEHOST_URL", d.codehost_api),
            codehost_raw: pick("PKGRAPH_CODEHOST_RAW_URL", d.codehost_raw),
            registry: pick("PKGRAPH_REGISTRY_URL", d.registry),
            osv: pick("PKGRAPH_OSV_URL", d.osv),
            qa_forum: pick("PKGRAPH_QA_FORUM_URL", d.qa_forum),
            link_forum: pick("PKGRAPH_LINK_FORUM_URL", d.link_forum),
            aggregator: pick("PKGRAPH_AGGREGATOR_URL", d.aggregator),
            blog: pick("PKGRAPH_BLOG_URL", d.blog),
            codehost_token: get("PKGRAPH_CODEHOST_TOKEN").filter(|t| !t.trim().is_empty()),
        }
    }
}

/// Entry point for every acquisition operation.
#[derive(Clone)]
pub struct Ingest {
    transport: Arc<dyn Transport>,
    pub endpoints: Endpoints,
    pub policy: FetchPolicy,
    adapters: Arc<reviews::AdapterRegistry>,
}

impl Ingest {
    pub fn new(transport: Arc<dyn Transport>, endpoints: Endpoints, policy: FetchPolicy) -> Result<Self, IngestError> {
        policy.validate().map_err(IngestError::InvalidPolicy)?;
        Ok(Ingest {
            transport,
            endpoints,
            policy,
            adapters: Arc::new(reviews::AdapterRegistry::with_defaults()),
        })
    }

    /// Offline client over a fixture bundle.
    pub fn replay(dir: impl AsRef<Path>, endpoints: Endpoints, policy: FetchPolicy) -> Result<Self, IngestError> {
        let t = ReplayTransport::open(dir)?;
        Self::new(Arc::new(t), endpoints, policy)
    }

    fn live_transport(endpoints: &Endpoints, policy: FetchPolicy) -> PacedTransport<LiveTransport> {
        let mut live = LiveTransport::new(Duration::from_secs(30));
        if let Some(token) = &endpoints.codehost_token {
            let host = url::Url::parse(&endpoints.codehost_api)
                .ok()
                .and_then(|u| u.host_str().map(str::to_string))
                .unwrap_or_default();
            live = live.with_token(&host, token);
        }
        PacedTransport::new(live, policy, Arc::new(SystemClock::default()))
    }

    pub fn live(endpoints: Endpoints, policy: FetchPolicy) -> Result<Self, IngestError> {
        let t = Self::live_transport(&endpoints, policy);
        Self::new(Arc::new(t), endpoints, policy)
    }

    /// Live client that also writes every exchange into `dir`.
    pub fn recording(endpoints: Endpoints, policy: FetchPolicy, dir: impl AsRef<Path>) -> Result<Self, IngestError> {
        let t = record_session(Self::live_transport(&endpoints, policy), dir)?;
        Self::new(Arc::new(t), endpoints, policy)
    }

    pub fn with_adapters(mut self, adapters: reviews::AdapterRegistry) -> Self {
        self.adapters = Arc::new(adapters);
        self
    }

    pub fn transport(&self) -> &Arc<dyn Transport> {
        &self.transport
    }

    pub(crate) fn send(&self, request: &Request) -> Result<Response, IngestError> {
        Ok(self.transport.execute(request)?)
    }

    /// Sends and requires a 2xx status.
    pub(crate) fn send_ok(&self, request: &Request) -> Result<Response, IngestError> {
        let resp = self.send(request)?;
        if !resp.is_success() {
            return Err(IngestError::Status {
                url: request.url.clone(),
                status: resp.status,
            });
        }
        Ok(resp)
    }
}

pub(crate) fn parse_json(what: &str, request: &Request, resp: &Response) -> Result<serde_json::Value, IngestError> {
    serde_json::from_str(&resp.body).map_err(|e| parse_error(what, request, resp, e.to_string()))
}

pub(crate) fn parse_error(what: &str, request: &Request, resp: &Response, detail: String) -> IngestError {
    IngestError::Parse {
        what: what.to_string(),
        request_key: request.key(),
        detail,
        payload: resp.body.chars().take(120).collect(),
    }
}

pub(crate) fn url_with(base: &str, path: &str, params: &[(&str, &str)]) -> String {
    let mut u = url::Url::parse(&format!("{}{}", base.trim_end_matches('/'), path)).expect("endpoint urls are valid");
    if !params.is_empty() {
        let mut q = u.query_pairs_mut();
        for (k, v) in params {
            q.append_pair(k, v);
        }
    }
    u.to_string()
}

/// RFC 3339 timestamp to UTC seconds.
pub(crate) fn parse_timestamp(raw: &str) -> Option<i64> {
    use time::format_description::well_known::Rfc3339;
    time::OffsetDateTime::parse(raw, &Rfc3339)
        .or_else(|_| time::OffsetDateTime::parse(&format!("{raw}Z"), &Rfc3339))
        .ok()
        .map(|t| t.unix_timestamp())
}
