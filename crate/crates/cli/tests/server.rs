use std::path::Path;
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

use bedmake::harness::{
    collect_demonstrations, load_demonstrations, save_demonstrations, save_episodes, CollectMode, ExperimentConfig,
    Stream,
};
use bedmake_cli::server::{router, AppState};

fn app(out: &Path, rollouts: Option<&Path>) -> Router {
    let cfg = ExperimentConfig {
        output_dir: out.to_path_buf(),
        ..ExperimentConfig::default()
    };
    router(AppState::new(cfg, rollouts.map(Path::to_path_buf)).unwrap(), None)
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

async fn call_json(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

#[tokio::test]
async fn click_is_stored_exactly_and_session_advances() {
    let out = tempfile::tempdir().unwrap();
    let app = app(out.path(), None);
    let (st, v) = call_json(&app, Method::GET, "/api/session", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!((v["side"].as_str(), v["phase"].as_str(), v["attempt"].as_u64()), (Some("A"), Some("awaiting_grasp"), Some(1)));

    let (st, png) = call(&app, Method::GET, v["image_url"].as_str().unwrap(), None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(&png[1..4], b"PNG");

    let (st, g) = call_json(&app, Method::POST, "/api/grasp", Some(json!({"u": 100, "v": 50}))).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(g["session"]["phase"], "awaiting_label");
    let (st, _) = call(&app, Method::GET, g["post_image_url"].as_str().unwrap(), None).await;
    assert_eq!(st, StatusCode::OK);

    let (st, v) = call_json(&app, Method::POST, "/api/label", Some(json!({"success": true}))).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!((v["side"].as_str(), v["attempt"].as_u64(), v["phase"].as_str()), (Some("B"), Some(1), Some("awaiting_grasp")));

    let (_, demos) = call_json(&app, Method::GET, "/api/demos", None).await;
    assert_eq!(demos.as_array().unwrap().len(), 1);
    assert_eq!(demos[0]["grasp_label"], json!({"u": 100.0, "v": 50.0}));
    assert_eq!(demos[0]["executed_pixel"], json!({"u": 100.0, "v": 50.0}));
    assert_eq!(demos[0]["transition_label"], 1);

    // labels are persisted as they arrive
    let saved = load_demonstrations(out.path()).unwrap();
    assert_eq!(saved.len(), 1);
    assert_eq!((saved[0].demo.grasp_label.u, saved[0].demo.grasp_label.v), (100.0, 50.0));

    let (st, left) = call_json(&app, Method::DELETE, "/api/demos/0", None).await;
    assert_eq!(st, StatusCode::OK);
    assert!(left.as_array().unwrap().is_empty());
    assert!(load_demonstrations(out.path()).unwrap().is_empty());
}

#[tokio::test]
async fn errors_are_4xx_json() {
    let out = tempfile::tempdir().unwrap();
    let app = app(out.path(), None);
    let cases: Vec<(Method, &str, Option<Value>, StatusCode)> = vec![
        (Method::POST, "/api/label", Some(json!({"success": true})), StatusCode::CONFLICT),
        (Method::POST, "/api/grasp", Some(json!({"u": -3, "v": 50})), StatusCode::UNPROCESSABLE_ENTITY),
        (Method::POST, "/api/grasp", Some(json!({"x": 1})), StatusCode::UNPROCESSABLE_ENTITY),
        (Method::DELETE, "/api/demos/4", None, StatusCode::NOT_FOUND),
        (Method::GET, "/api/image/nope.png", None, StatusCode::NOT_FOUND),
        (Method::GET, "/api/rollout/nope", None, StatusCode::NOT_FOUND),
        (Method::GET, "/api/nothing", None, StatusCode::NOT_FOUND),
        (Method::POST, "/api/next", None, StatusCode::CONFLICT),
    ];
    for (m, uri, body, want) in cases {
        let (st, v) = call_json(&app, m.clone(), uri, body).await;
        assert_eq!(st, want, "{m} {uri}");
        assert!(v["error"].as_str().is_some_and(|e| !e.is_empty()), "{m} {uri}: {v}");
    }
    let req = Request::builder()
        .method(Method::POST)
        .uri("/api/grasp")
        .header("content-type", "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    let v: Value = serde_json::from_slice(&to_bytes(resp.into_body(), usize::MAX).await.unwrap()).unwrap();
    assert!(v["error"].is_string());

    // a rejected double label leaves the session untouched
    call_json(&app, Method::POST, "/api/grasp", Some(json!({"u": 10, "v": 10}))).await;
    call_json(&app, Method::POST, "/api/label", Some(json!({"success": false}))).await;
    let (st, _) = call_json(&app, Method::POST, "/api/label", Some(json!({"success": false}))).await;
    assert_eq!(st, StatusCode::CONFLICT);
    let (_, v) = call_json(&app, Method::GET, "/api/session", None).await;
    assert_eq!((v["attempt"].as_u64(), v["phase"].as_str()), (Some(2), Some("awaiting_grasp")));
}

#[tokio::test]
async fn rollout_overlays_match_the_log() {
    let rollouts = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::default();
    let c = collect_demonstrations(CollectMode::Bc, 2, None, &cfg, Stream::Collect).unwrap();
    save_demonstrations(rollouts.path(), &c.records).unwrap();
    save_episodes(rollouts.path(), c.episodes.iter().map(|l| (l, None)), false).unwrap();

    let out = tempfile::tempdir().unwrap();
    let app = app(out.path(), Some(rollouts.path()));
    let log = &c.episodes[0];
    let (st, v) = call_json(&app, Method::GET, &format!("/api/rollout/{}", log.id), None).await;
    assert_eq!(st, StatusCode::OK);
    let overlays = v["overlays"].as_array().unwrap();
    assert_eq!(overlays.len(), log.attempt_count());
    for (o, (side, a)) in overlays.iter().zip(log.attempts()) {
        assert_eq!(o["pixel"]["u"].as_f64().unwrap(), a.pixel.u);
        assert_eq!(o["pixel"]["v"].as_f64().unwrap(), a.pixel.v);
        assert_eq!(o["side"].as_str().unwrap(), side.to_string());
    }
    assert_eq!(v["episode"]["id"].as_str().unwrap(), log.id);
    let (st, png) = call(&app, Method::GET, overlays[0]["image_url"].as_str().unwrap(), None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(&png[1..4], b"PNG");
    let (st, _) = call_json(&app, Method::GET, "/api/image/..%2Fdemos.png", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn static_files_are_served_beside_the_api() {
    let site = tempfile::tempdir().unwrap();
    std::fs::write(site.path().join("index.html"), "<h1>ui</h1>").unwrap();
    let out = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        output_dir: out.path().to_path_buf(),
        ..ExperimentConfig::default()
    };
    let app = router(Arc::clone(&AppState::new(cfg, None).unwrap()), Some(site.path()));
    let (st, body) = call(&app, Method::GET, "/index.html", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(body, b"<h1>ui</h1>");
    let (st, _) = call_json(&app, Method::GET, "/api/session", None).await;
    assert_eq!(st, StatusCode::OK);
}
