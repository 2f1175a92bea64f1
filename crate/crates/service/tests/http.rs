use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Instant;

use reqwest::{Client, StatusCode};
use serde_json::{json, Value};
use tmk_core::{load_bundle_dir, serialize_model};
use tmk_service::{Server, ServiceConfig};
use tokio::sync::oneshot;

fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(rel)
}

fn bundle(rel: &str) -> Value {
    let t = serialize_model(&load_bundle_dir(&fixture(rel)).unwrap());
    json!({ "task": t.task, "method": t.method, "knowledge": t.knowledge })
}

struct Running {
    base: String,
    stop: Option<oneshot::Sender<()>>,
    handle: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl Running {
    async fn start(dir: &Path) -> Self {
        let config = ServiceConfig {
            store_dir: dir.to_path_buf(),
            cors_origin: Some("http://localhost:5173".into()),
        };
        let server = Server::bind(SocketAddr::from(([127, 0, 0, 1], 0)), &config)
            .await
            .unwrap();
        let base = format!("http://{}", server.local_addr().unwrap());
        let (tx, rx) = oneshot::channel();
        let handle = tokio::spawn(server.run_until(async {
            let _ = rx.await;
        }));
        Self {
            base,
            stop: Some(tx),
            handle,
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn stop(mut self) {
        self.stop.take().unwrap().send(()).unwrap();
        self.handle.await.unwrap().unwrap();
    }
}

async fn send(req: reqwest::RequestBuilder) -> (StatusCode, Value) {
    let resp = req.send().await.unwrap();
    let status = resp.status();
    let body = resp.json().await.unwrap_or(Value::Null);
    (status, body)
}

#[tokio::test]
async fn round_trip_flow() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let svc = Running::start(dir.path()).await;
    let http = Client::new();

    let (status, body) = send(http.post(svc.url("/models")).json(&bundle("sortlist"))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    assert_eq!(body["skillName"], "sortlist");
    let token = body["versionToken"].as_str().unwrap().to_string();

    let (status, got) = send(http.get(svc.url("/models/sortlist"))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(got["validation"]["valid"], true);
    assert_eq!(got["validation"]["errorCount"], 0);
    let echoed = tmk_core::bundle::from_documents(serde_json::from_value(got["bundle"].clone()).unwrap()).unwrap();
    assert_eq!(echoed, load_bundle_dir(&fixture("sortlist")).unwrap());

    let (status, session) = send(
        http.post(svc.url("/sessions/sortlist/start"))
            .json(&json!({"manualBaselineHours": 7.0})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{session}");

    // a substantive guard replaced by "true" lowers guard logic
    let mut bundle = got["bundle"].clone();
    let guard = "/method/0/organizer/transitions/0/dataCondition";
    let old = bundle.pointer(guard).unwrap().clone();
    *bundle.pointer_mut(guard).unwrap() = json!("true");
    let (status, put) = send(
        http.put(svc.url("/models/sortlist/working"))
            .json(&json!({"versionToken": token, "bundle": bundle})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{put}");
    assert!(
        put["analysisDelta"]["guardLogic"]["delta"].as_f64().unwrap() < 0.0,
        "{put}"
    );
    assert_eq!(put["validation"]["valid"], true);
    let token2 = put["versionToken"].as_str().unwrap().to_string();
    assert_ne!(token, token2);

    let (status, _) = send(
        http.post(svc.url("/sessions/sortlist/event"))
            .json(&json!({"fieldPath": guard, "before": old, "after": "true"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);

    let (status, report) = send(http.post(svc.url("/models/sortlist/validate"))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["valid"], true);

    let transcript = std::fs::read_to_string(fixture("sortlist/transcript.txt")).unwrap();
    let (status, analysis) = send(
        http.post(svc.url("/models/sortlist/analyze"))
            .json(&json!({"version": "raw", "transcript": transcript})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(analysis["guardLogic"], 1.0);
    assert_eq!(analysis["alignmentScore"], 1.0);

    let (status, diff) = send(
        http.post(svc.url("/models/sortlist/diff"))
            .json(&json!({"fromVersion": "raw", "toVersion": "working"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(diff["entries"].as_array().unwrap().len(), 1);
    assert_eq!(diff["entries"][0]["kind"], "modified");

    let (status, ended) = send(
        http.post(svc.url("/sessions/sortlist/end"))
            .json(&json!({"loggedHours": 1.9})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{ended}");
    assert!((ended["reduction"].as_f64().unwrap() - 0.7286).abs() <= 1e-4);

    let (status, rep) = send(http.get(svc.url("/reports/sortlist"))).await;
    assert_eq!(status, StatusCode::OK);
    assert!(rep["markdown"]
        .as_str()
        .unwrap()
        .contains("| sortlist | 7.0000 | 1.9000 | 0.7286 |"));

    svc.stop().await;
    assert!(started.elapsed().as_secs_f64() < 10.0);
}

#[tokio::test]
async fn stale_token_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    let svc = Running::start(dir.path()).await;
    let http = Client::new();
    let (_, body) = send(http.post(svc.url("/models")).json(&bundle("gcd"))).await;
    let token = body["versionToken"].as_str().unwrap().to_string();

    let put = |desc: &str| {
        let mut b = bundle("gcd");
        let mut task: Value = serde_json::from_str(b["task"].as_str().unwrap()).unwrap();
        task["description"] = json!(desc);
        b["task"] = task;
        http.put(svc.url("/models/gcd/working"))
            .json(&json!({"versionToken": token, "bundle": b}))
            .send()
    };
    let (a, b) = tokio::join!(put("first"), put("second"));
    let mut codes = [a.unwrap().status(), b.unwrap().status()];
    codes.sort();
    assert_eq!(codes, [StatusCode::OK, StatusCode::CONFLICT]);

    let (status, err) = send(
        http.put(svc.url("/models/gcd/working"))
            .json(&json!({"versionToken": token, "bundle": bundle("gcd")})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "VERSION_CONFLICT");
    svc.stop().await;
}

#[tokio::test]
async fn invalid_writes_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let svc = Running::start(dir.path()).await;
    let http = Client::new();
    let (_, body) = send(http.post(svc.url("/models")).json(&bundle("sortlist"))).await;
    let token = body["versionToken"].as_str().unwrap().to_string();

    // removing the Fail state is rejected with a report and leaves the store untouched
    let patch = json!([{"kind": "removed", "fieldPath": "/method/@IterativeInsertion/organizer/states/@II_Fail"}]);
    let (status, err) = send(
        http.put(svc.url("/models/sortlist/working"))
            .json(&json!({"versionToken": token, "patch": patch})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{err}");
    assert_eq!(err["code"], "VALIDATION_FAILED");
    assert_eq!(err["report"]["valid"], false);
    let (_, got) = send(http.get(svc.url("/models/sortlist"))).await;
    assert_eq!(got["versionToken"], token.as_str());

    let (status, put) = send(
        http.put(svc.url("/models/sortlist/working"))
            .json(&json!({"versionToken": token, "patch": patch, "allowInvalid": true})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{put}");
    assert_eq!(put["validation"]["valid"], false);
    let (_, report) = send(http.post(svc.url("/models/sortlist/validate"))).await;
    assert_eq!(report["valid"], false);

    let (status, err) = send(http.get(svc.url("/models/nope"))).await;
    assert_eq!(
        (status, err["code"].as_str()),
        (StatusCode::NOT_FOUND, Some("UNKNOWN_SKILL"))
    );
    let (status, err) = send(http.get(svc.url("/models/sortlist?version=refined"))).await;
    assert_eq!(
        (status, err["code"].as_str()),
        (StatusCode::NOT_FOUND, Some("UNKNOWN_VERSION"))
    );
    let (status, err) = send(http.post(svc.url("/models")).body("{not json")).await;
    assert_eq!(
        (status, err["code"].as_str()),
        (StatusCode::BAD_REQUEST, Some("INVALID_PAYLOAD"))
    );
    let (status, err) = send(
        http.post(svc.url("/models"))
            .json(&json!({"task": "{", "method": "[]", "knowledge": "{}"})),
    )
    .await;
    assert_eq!(
        (status, err["code"].as_str()),
        (StatusCode::BAD_REQUEST, Some("MALFORMED_DOCUMENT"))
    );
    assert_eq!(err["path"], "/task");
    let (status, err) = send(http.post(svc.url("/sessions/sortlist/end"))).await;
    assert_eq!(
        (status, err["code"].as_str()),
        (StatusCode::CONFLICT, Some("NO_OPEN_SESSION"))
    );
    svc.stop().await;
}

#[tokio::test]
async fn trace_compare_and_listing() {
    let dir = tempfile::tempdir().unwrap();
    let svc = Running::start(dir.path()).await;
    let http = Client::new();
    send(http.post(svc.url("/models")).json(&bundle("raw/sortlist"))).await;
    let mut refined = bundle("sortlist");
    refined["label"] = json!("refined");
    send(http.post(svc.url("/models")).json(&refined)).await;

    let (status, cmp) = send(
        http.post(svc.url("/compare"))
            .json(&json!({"skillA": "sortlist", "versionA": "refined", "skillB": "sortlist", "versionB": "refined"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    for c in ["task", "method", "knowledge"] {
        for m in ["overall", "perField", "dictSymmetric"] {
            assert!((cmp[c][m].as_f64().unwrap() - 1.0).abs() < 1e-9, "{c}.{m}");
        }
    }

    let (status, t) = send(
        http.post(svc.url("/models/sortlist/trace"))
            .json(&json!({"method": "IterativeInsertion", "env": {"predicates": {}}})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{t}");
    assert!(t["outcome"].is_string());
    let (status, err) = send(
        http.post(svc.url("/models/sortlist/trace"))
            .json(&json!({"method": "Nope"})),
    )
    .await;
    assert_eq!(
        (status, err["code"].as_str()),
        (StatusCode::NOT_FOUND, Some("UNKNOWN_METHOD"))
    );

    let (_, list) = send(http.get(svc.url("/models"))).await;
    assert_eq!(list["models"][0]["versionCount"], 2);
    let (_, api) = send(http.get(svc.url("/api"))).await;
    assert!(api["endpoints"]
        .as_array()
        .unwrap()
        .iter()
        .any(|e| e["path"] == "/models/{skill}/working"));

    let resp = http
        .get(svc.url("/api"))
        .header("Origin", "http://localhost:5173")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "http://localhost:5173");
    svc.stop().await;
}

#[tokio::test]
async fn store_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let http = Client::new();
    let svc = Running::start(dir.path()).await;
    send(http.post(svc.url("/models")).json(&bundle("bfs"))).await;
    send(http.post(svc.url("/sessions/bfs/start"))).await;
    let (_, before) = send(http.get(svc.url("/models/bfs"))).await;
    svc.stop().await;

    let svc = Running::start(dir.path()).await;
    let (status, after) = send(http.get(svc.url("/models/bfs"))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(before, after);
    let (_, sessions) = send(http.get(svc.url("/sessions/bfs"))).await;
    assert_eq!(sessions["sessions"].as_array().unwrap().len(), 1);
    let (status, _) = send(http.post(svc.url("/sessions/bfs/start"))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    svc.stop().await;
}
