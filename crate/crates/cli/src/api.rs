//! JSON service under `/api/v1`. Requests run against whichever snapshot is
//! current when they start; a reload swaps the whole engine at once.

use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pkgraph_core::infer::RankingConfig;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use crate::engine::{CompareRequest, Engine, RecommendRequest, ServiceError};

pub type Clock = Arc<dyn Fn() -> i64 + Send + Sync>;

fn system_clock() -> Clock {
    Arc::new(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs() as i64)
    })
}

pub struct AppState {
    engine: RwLock<Option<Arc<Engine>>>,
    clock: Clock,
}

impl AppState {
    pub fn empty() -> Arc<AppState> {
        Arc::new(AppState {
            engine: RwLock::new(None),
            clock: system_clock(),
        })
    }

    pub fn with_engine(engine: Engine) -> Arc<AppState> {
        let s = AppState::empty();
        s.swap(engine);
        s
    }

    /// Same as [`AppState::with_engine`] with a fixed clock, for tests.
    pub fn with_clock(engine: Engine, clock: Clock) -> Arc<AppState> {
        Arc::new(AppState {
            engine: RwLock::new(Some(Arc::new(engine))),
            clock,
        })
    }

    pub fn swap(&self, engine: Engine) {
        *self.engine.write().expect("engine lock") = Some(Arc::new(engine));
    }

    pub fn current(&self) -> Option<Arc<Engine>> {
        self.engine.read().expect("engine lock").clone()
    }
}

pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: json!({"error": code, "message": message.into()}),
        }
    }

    fn unavailable() -> Self {
        ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "snapshot_not_loaded", "the graph snapshot is still loading")
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let message = e.to_string();
        match e {
            ServiceError::BadRequest(_) => ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", message),
            ServiceError::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_package", message),
            ServiceError::EmptyIntent => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "empty_intent", message),
            ServiceError::EmptyResult { query_echo, diagnostics } => ApiError {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                body: json!({
                    "error": "empty_result",
                    "message": message,
                    "diagnostics": diagnostics,
                    "query_echo": query_echo,
                }),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn engine(state: &AppState) -> Result<Arc<Engine>, ApiError> {
    state.current().ok_or_else(ApiError::unavailable)
}

/// Strict JSON body parsing; unknown fields and type errors become 400.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", e.to_string()))
}

async fn recommend_handler(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<impl Serialize> {
    let engine = engine(&state)?;
    let req: RecommendRequest = parse_body(&body)?;
    let now = (state.clock)();
    Ok(Json(engine.recommend(&req, now)?))
}

async fn package_handler(State(state): State<Arc<AppState>>, Path(name): Path<String>) -> ApiResult<impl Serialize> {
    Ok(Json(engine(&state)?.package(&name)?))
}

async fn compare_handler(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<impl Serialize> {
    let engine = engine(&state)?;
    let req: CompareRequest = parse_body(&body)?;
    Ok(Json(engine.compare(&req)?))
}

async fn usage_handler(State(state): State<Arc<AppState>>) -> ApiResult<impl Serialize> {
    Ok(Json(engine(&state)?.usage_report()))
}

async fn health_handler(State(state): State<Arc<AppState>>) -> ApiResult<impl Serialize> {
    Ok(Json(engine(&state)?.health()))
}

async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/v1/recommend", post(recommend_handler))
        .route("/api/v1/packages/{name}", get(package_handler))
        .route("/api/v1/compare", post(compare_handler))
        .route("/api/v1/analytics/usage", get(usage_handler))
        .route("/api/v1/health", get(health_handler))
        .fallback(fallback)
        .with_state(state)
}

fn load_engine(path: &std::path::Path, ranking: RankingConfig) -> anyhow::Result<Engine> {
    let graph = pkgraph_core::load_snapshot(path)?;
    Engine::new(graph, ranking).map_err(anyhow::Error::msg)
}

/// Binds `port`, loads the snapshot in the background and serves until
/// interrupted. On unix, SIGHUP reloads the snapshot.
pub async fn serve(snapshot: PathBuf, ranking: RankingConfig, port: u16) -> anyhow::Result<()> {
    let state = AppState::empty();
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    tracing::info!(port, snapshot = %snapshot.display(), "listening");

    let loader = {
        let state = state.clone();
        let snapshot = snapshot.clone();
        tokio::task::spawn_blocking(move || -> anyhow::Result<()> {
            let engine = load_engine(&snapshot, ranking)?;
            tracing::info!(packages = engine.graph().package_count(), "snapshot loaded");
            state.swap(engine);
            Ok(())
        })
    };

    #[cfg(unix)]
    {
        let state = state.clone();
        let snapshot = snapshot.clone();
        tokio::spawn(async move {
            let Ok(mut hup) = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::hangup()) else {
                return;
            };
            while hup.recv().await.is_some() {
                let path = snapshot.clone();
                match tokio::task::spawn_blocking(move || load_engine(&path, ranking)).await {
                    Ok(Ok(engine)) => {
                        state.swap(engine);
                        tracing::info!("snapshot reloaded");
                    }
                    Ok(Err(e)) => tracing::error!(error = %e, "reload failed; keeping the current snapshot"),
                    Err(e) => tracing::error!(error = %e, "reload task failed"),
                }
            }
        });
    }

    let server = tokio::spawn(async move {
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
                tracing::info!("shutting down");
            })
            .await
    });
    // a snapshot that cannot be loaded is fatal rather than a permanent 503
    loader.await?.map_err(|e| e.context(format!("loading {}", snapshot.display())))?;
    server.await??;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn service_errors_map_to_statuses() {
        let cases = [
            (ServiceError::BadRequest("k".into()), StatusCode::BAD_REQUEST, "invalid_request"),
            (ServiceError::NotFound("x".into()), StatusCode::NOT_FOUND, "unknown_package"),
            (ServiceError::EmptyIntent, StatusCode::UNPROCESSABLE_ENTITY, "empty_intent"),
        ];
        for (e, status, code) in cases {
            let api = ApiError::from(e);
            assert_eq!(api.status, status);
            assert_eq!(api.body["error"], code);
        }
        assert_eq!(ApiError::unavailable().status, StatusCode::SERVICE_UNAVAILABLE);
    }

    #[test]
    fn strict_bodies() {
        let bad = parse_body::<CompareRequest>(&Bytes::from_static(br#"{"names":[],"x":1}"#)).err().unwrap();
        assert_eq!(bad.status, StatusCode::BAD_REQUEST);
        assert!(parse_body::<CompareRequest>(&Bytes::from_static(b"not json")).is_err());
    }
}
