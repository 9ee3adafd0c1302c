use std::collections::BTreeMap;
use std::time::Duration;

use crate::transport::{now_unix, Request, Response, Transport, TransportError};

/// Plain HTTPS transport. Non-2xx statuses come back as responses, not errors.
pub struct LiveTransport {
    agent: ureq::Agent,
    token: Option<(String, String)>,
}

impl LiveTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .user_agent(concat!("pkgraph/", env!("CARGO_PKG_VERSION")))
            .build();
        LiveTransport {
            agent: ureq::Agent::new_with_config(config),
            token: None,
        }
    }

    /// Sends `Authorization: Bearer <token>` to `host` only.
    pub fn with_token(mut self, host: &str, token: &str) -> Self {
        self.token = Some((host.to_string(), token.to_string()));
        self
    }
}

impl Transport for LiveTransport {
    fn execute(&self, request: &Request) -> Result<Response, TransportError> {
        let host = request.host();
        let net = |message: String| TransportError::Network {
            host: host.clone(),
            attempts: 1,
            message,
        };
        let mut builder = ureq::http::Request::builder()
            .method(request.method.as_str())
            .uri(request.url.as_str());
        for (k, v) in &request.headers {
            builder = builder.header(k.as_str(), v.as_str());
        }
        if let Some((h, token)) = &self.token {
            if *h == host {
                builder = builder.header("authorization", format!("Bearer {token}"));
            }
        }
        let body = request.body.clone().unwrap_or_default().into_bytes();
        let http_request = builder.body(body).map_err(|e| net(e.to_string()))?;
        let response = self.agent.run(http_request).map_err(|e| net(e.to_string()))?;
        let status = response.status().as_u16();
        let headers: BTreeMap<String, String> = response
            .headers()
            .iter()
            .filter_map(|(k, v)| Some((k.as_str().to_ascii_lowercase(), v.to_str().ok()?.to_string())))
            .collect();
        let body = response.into_body().read_to_string().map_err(|e| net(e.to_string()))?;
        tracing::debug!(%host, status, url = %request.url, "live request");
        Ok(Response {
            status,
            headers,
            body,
            recorded_at: Some(now_unix()),
        })
    }
}
