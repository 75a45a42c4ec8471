use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

use qevo::api::router;
use qevo_core::corpus::{build_index, Document, Label};
use qevo_core::orchestrator::{Engine, Mode, RunConfig, RunOutcome};
use qevo_core::provider::SimulatedProvider;

const RELEVANT: &[&str] = &["crash on main road", "wreck near the bridge", "crash blocks road", "wreck on the bridge"];
const IRRELEVANT: &[&str] = &["movie about a crash", "new movie tonight", "sunny on main road", "bridge concert tonight"];

fn docs(prefix: &str, copies: usize, labeled: bool) -> Vec<Document> {
    let mut out = Vec::new();
    for i in 0..copies {
        for (texts, label) in [(RELEVANT, Label::Relevant), (IRRELEVANT, Label::Irrelevant)] {
            for (j, t) in texts.iter().enumerate() {
                let d = Document::new(format!("{prefix}{i}-{}-{j}", label == Label::Relevant), *t);
                out.push(if labeled { d.with_label(label) } else { d });
            }
        }
    }
    out
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or(Body::empty(), |b| Body::from(b.to_string()))).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn wait_for(app: &Router, what: impl Fn(&Value) -> bool) -> Value {
    let deadline = Instant::now() + Duration::from_secs(20);
    loop {
        let (code, body) = call(app, "GET", "/status", None).await;
        if code == StatusCode::OK && what(&body) {
            return body;
        }
        assert!(Instant::now() < deadline, "timed out; last status {body}");
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn control_api_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new("unused", dir.path());
    cfg.mode = Mode::Interactive;
    cfg.ga.population_size = 30;
    cfg.ga.fetch_every = 1;
    cfg.budget = 1;
    let index = build_index(docs("d", 5, true)).unwrap();
    let provider = SimulatedProvider::new(docs("h", 3, false)).unwrap();
    let mut engine = Engine::build(cfg, index, vec![], Some(Box::new(provider))).unwrap();
    let app = router(engine.controller());
    let worker = std::thread::spawn(move || engine.run().unwrap());

    wait_for(&app, |_| true).await;
    let (code, body) = call(&app, "POST", "/pause", None).await;
    assert_eq!((code, body["status"].as_str()), (StatusCode::OK, Some("paused")));
    let status = wait_for(&app, |_| true).await;
    assert_eq!(status["status"], "paused");
    let paused_at = status["generation"].as_u64().unwrap();

    let (code, _) = call(&app, "POST", "/inject", Some(json!({ "queries": ["(crash OR wreck) AND (NOT movie)"] }))).await;
    assert_eq!(code, StatusCode::ACCEPTED);
    let (code, body) = call(&app, "POST", "/inject", Some(json!({ "queries": ["crash", "(crash AND"] }))).await;
    assert_eq!(code, StatusCode::BAD_REQUEST);
    assert_eq!(body["index"], 1);
    assert!(body["offset"].is_u64(), "{body}");
    let (code, _) = call(&app, "POST", "/inject", Some(json!({ "queries": ["zeppelin"] }))).await;
    assert_eq!(code, StatusCode::BAD_REQUEST);
    let (code, _) = call(&app, "POST", "/inject", Some(json!({ "queries": [] }))).await;
    assert_eq!(code, StatusCode::BAD_REQUEST);

    let (code, top) = call(&app, "GET", "/population?top=3", None).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(top.as_array().unwrap().len(), 3);
    assert!(top[0]["query"]["text"].is_string());

    let (code, _) = call(&app, "POST", "/resume", None).await;
    assert_eq!(code, StatusCode::OK);
    wait_for(&app, |s| s["generation"].as_u64().unwrap() >= paused_at + 2).await;
    let (code, _) = call(&app, "POST", "/pause", None).await;
    assert_eq!(code, StatusCode::OK);
    let (_, everyone) = call(&app, "GET", "/population?top=1000", None).await;
    assert!(everyone.as_array().unwrap().iter().any(|p| p["injected"] == true), "{everyone}");

    let (_, status) = call(&app, "GET", "/status", None).await;
    let (_, history) = call(&app, "GET", "/history", None).await;
    assert_eq!(history.as_array().unwrap().len() as u64, status["generation"].as_u64().unwrap());

    // the generation-1 fetch queued hidden documents for labeling
    let (code, pending) = call(&app, "GET", "/labels/pending", None).await;
    assert_eq!(code, StatusCode::OK);
    let id = pending[0]["id"].as_str().expect("pending labels").to_string();
    assert!(pending[0]["text"].is_string());
    let before = status["labeled_relevant"].as_u64().unwrap();
    let (code, _) = call(&app, "POST", "/labels", Some(json!({ "id": id, "label": "relevant" }))).await;
    assert_eq!(code, StatusCode::ACCEPTED);
    wait_for(&app, |s| s["labeled_relevant"].as_u64().unwrap() == before + 1).await;
    let (code, _) = call(&app, "POST", "/labels", Some(json!({ "id": id, "label": "relevant" }))).await;
    assert_eq!(code, StatusCode::NOT_FOUND);
    let (code, _) = call(&app, "POST", "/labels", Some(json!({ "id": "nope", "label": "irrelevant" }))).await;
    assert_eq!(code, StatusCode::NOT_FOUND);
    let (code, _) = call(&app, "POST", "/labels", Some(json!({ "id": id, "label": "unlabeled" }))).await;
    assert_eq!(code, StatusCode::BAD_REQUEST);

    let (code, body) = call(&app, "POST", "/stop", None).await;
    assert_eq!((code, body["status"].as_str()), (StatusCode::OK, Some("stopped")));
    let (code, _) = call(&app, "POST", "/inject", Some(json!({ "queries": ["crash"] }))).await;
    assert_eq!(code, StatusCode::CONFLICT);
    let (code, _) = call(&app, "POST", "/resume", None).await;
    assert_eq!(code, StatusCode::CONFLICT);
    assert_eq!(tokio::task::spawn_blocking(move || worker.join().unwrap()).await.unwrap(), RunOutcome::Stopped);
}

#[tokio::test]
async fn status_before_the_run_starts_and_bad_bodies() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new("unused", dir.path());
    cfg.mode = Mode::Interactive;
    cfg.ga.population_size = 10;
    let mut engine = Engine::build(cfg, build_index(docs("d", 2, true)).unwrap(), vec![], None).unwrap();
    let app = router(engine.controller());
    // nothing evaluated yet
    let (code, status) = call(&app, "GET", "/status", None).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(status["generation"], 0);
    assert_eq!(status["best_loss"], Value::Null);
    let (code, _) = call(&app, "POST", "/inject", Some(json!({ "query": "crash" }))).await;
    assert!(code.is_client_error());
    let (code, _) = call(&app, "GET", "/population?top=two", None).await;
    assert_eq!(code, StatusCode::BAD_REQUEST);
    drop(engine);
}
