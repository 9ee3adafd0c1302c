mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use pkgraph::api::{router, AppState};
use pkgraph::engine::Engine;
use serde_json::{json, Value};
use tower::ServiceExt;

fn state() -> Arc<AppState> {
    let engine = Engine::new(common::build_trio().graph, Default::default()).unwrap();
    AppState::with_clock(engine, Arc::new(|| 1_800_000_000))
}

async fn call(state: &Arc<AppState>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    assert_eq!(resp.headers()["content-type"], "application/json");
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

fn assert_schema(name: &str, instance: &Value) {
    let path = common::schema_dir().join(format!("{name}.json"));
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}\n{instance:#}");
}

#[tokio::test]
async fn recommend_ranks_django_first() {
    let s = state();
    let (status, body) = call(&s, "POST", "/api/v1/recommend", Some(json!({"story": "web framework", "k": 3}))).await;
    assert_eq!(status, StatusCode::OK);
    let v = json(&body);
    assert_schema("recommend_response", &v);
    assert_eq!(v["recommendations"][0]["package"], "django");
    assert_eq!(v["recommendations"].as_array().unwrap().len(), 3);
    assert_eq!(v["served_at"], 1_800_000_000);
}

#[tokio::test]
async fn every_endpoint_matches_its_schema() {
    let s = state();
    let (st, b) = call(&s, "GET", "/api/v1/packages/Django", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_schema("package_detail", &json(&b));

    let (st, b) = call(&s, "POST", "/api/v1/compare", Some(json!({"names": ["spacy", "django"]}))).await;
    assert_eq!(st, StatusCode::OK);
    let m = json(&b);
    assert_schema("compare_matrix", &m);
    assert_eq!(m["rows"].as_array().unwrap().len(), 8);

    let (st, b) = call(&s, "GET", "/api/v1/analytics/usage", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_schema("distribution_report", &json(&b));

    let (st, b) = call(&s, "GET", "/api/v1/health", None).await;
    assert_eq!(st, StatusCode::OK);
    let h = json(&b);
    assert_schema("health", &h);
    assert_eq!(h["graph_build_timestamp"], common::BUILD_TS);
}

#[tokio::test]
async fn request_schemas_accept_what_the_service_accepts() {
    for body in [
        json!({"story": "web framework"}),
        json!({"story": "web framework", "k": 5, "filters": {"exclude_vulnerable": true, "required_attributes": ["security"]}}),
        json!({"story": "x", "coefficients": {"alpha": 1.0, "beta": 0.0, "gamma": 0.0, "delta": 0.0}}),
    ] {
        assert_schema("recommend_request", &body);
        let _: pkgraph::engine::RecommendRequest = serde_json::from_value(body).unwrap();
    }
    assert_schema("compare_request", &json!({"names": ["django"]}));
}

#[tokio::test]
async fn error_statuses() {
    let s = state();
    let (st, b) = call(&s, "POST", "/api/v1/recommend", Some(json!({"story": "web framework", "colour": "red"}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_schema("error", &json(&b));

    let (st, _) = call(&s, "POST", "/api/v1/compare", Some(json!({"names": ["django"], "extra": 1}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);

    let (st, _) = call(&s, "POST", "/api/v1/recommend", Some(json!({"story": "web framework", "k": 0}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);

    let (st, b) = call(&s, "GET", "/api/v1/packages/nope", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_eq!(json(&b)["error"], "unknown_package");

    let (st, b) = call(&s, "POST", "/api/v1/recommend", Some(json!({"story": "   "}))).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(json(&b)["error"], "empty_intent");

    let (st, b) = call(&s, "POST", "/api/v1/recommend", Some(json!({"story": "web framework", "filters": {"min_quality": 0.99}}))).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    let v = json(&b);
    assert_schema("error", &v);
    assert_eq!(v["diagnostics"]["removed_min_quality"], 3);
}

#[tokio::test]
async fn unavailable_until_loaded() {
    let s = AppState::empty();
    for (m, uri) in [("GET", "/api/v1/health"), ("POST", "/api/v1/recommend")] {
        let (st, b) = call(&s, m, uri, Some(json!({"story": "web framework"}))).await;
        assert_eq!(st, StatusCode::SERVICE_UNAVAILABLE);
        assert_schema("error", &json(&b));
    }
    s.swap(Engine::new(common::build_trio().graph, Default::default()).unwrap());
    let (st, _) = call(&s, "GET", "/api/v1/health", None).await;
    assert_eq!(st, StatusCode::OK);
}

#[tokio::test]
async fn identical_requests_give_identical_bytes() {
    let a = state();
    let b = state();
    let req = json!({"story": "web framework testing", "k": 3});
    let (_, first) = call(&a, "POST", "/api/v1/recommend", Some(req.clone())).await;
    let (_, second) = call(&b, "POST", "/api/v1/recommend", Some(req)).await;
    assert_eq!(first, second);

    // with a live clock only served_at may differ
    let live = AppState::with_engine(Engine::new(common::build_trio().graph, Default::default()).unwrap());
    let (_, third) = call(&live, "POST", "/api/v1/recommend", Some(json!({"story": "web framework testing", "k": 3}))).await;
    let strip = |bytes: &[u8]| {
        let mut v = json(bytes);
        v.as_object_mut().unwrap().remove("served_at");
        v
    };
    assert_eq!(strip(&first), strip(&third));
}

#[tokio::test]
async fn cli_and_http_agree() {
    let trio = common::build_trio();
    let snap = trio.dir.path().join("g.snap");
    pkgraph_core::save_snapshot(&trio.graph, &snap).unwrap();
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_pkgraph"))
        .env("PKGRAPH_LOG", "off")
        .env_remove("PKGRAPH_CONFIG")
        .args(["recommend", "--story", "web framework", "--k", "3", "--exclude-vulnerable", "--format", "json", "--graph"])
        .arg(&snap)
        .output()
        .unwrap();
    assert!(out.status.success());
    let cli = json(&out.stdout);

    let engine = Engine::new(pkgraph_core::load_snapshot(&snap).unwrap(), Default::default()).unwrap();
    let s = AppState::with_clock(engine, Arc::new(|| 0));
    let req = json!({"story": "web framework", "k": 3, "filters": {"exclude_vulnerable": true}});
    let (_, body) = call(&s, "POST", "/api/v1/recommend", Some(req)).await;
    let http = json(&body);
    assert_eq!(cli["recommendations"], http["recommendations"]);
    assert_eq!(cli["query_echo"], http["query_echo"]);
}

#[tokio::test]
async fn unknown_routes_are_json_404() {
    let (st, b) = call(&state(), "GET", "/api/v2/health", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_schema("error", &json(&b));
}
