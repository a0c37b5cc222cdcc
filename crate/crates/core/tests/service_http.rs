//! Session service over a real socket.

mod common;

use std::path::PathBuf;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use raise::controller::{LoopConfig, Resources};
use raise::llm::{BackendError, CompletionRequest, LanguageModel, ScriptedBackend};
use raise::prompt::{FrameworkKind, Mode};
use raise::service::http::{router, TOKEN_HEADER};
use raise::service::{CreateSession, SessionService, SessionStatus};
use raise::Error;
use serde_json::{json, Value};

const YEAR_QUESTION: &str = "{\"houseCode\": \"1021111\", \"houseName\": \"Huarun 24 City Mansion, good lighting and view, quiet\"} What year was the house constructed?";

fn service(dir: &std::path::Path, backend: Arc<dyn LanguageModel>) -> Arc<SessionService> {
    let defaults = LoopConfig::new(FrameworkKind::Raise, Mode::Prompting);
    Arc::new(
        SessionService::open(Arc::new(Resources::canonical()), backend, defaults, dir).unwrap(),
    )
}

fn demo_backend() -> Arc<dyn LanguageModel> {
    Arc::new(ScriptedBackend::load(&common::fixture("scripts/demo.jsonl")).unwrap())
}

/// Serves on an ephemeral port from a background runtime; returns the base URL.
fn spawn(service: Arc<SessionService>, token: Option<&str>, static_dir: Option<PathBuf>) -> String {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let app = router(service, token.map(str::to_string), static_dir);
    thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    base
}

struct Client {
    base: String,
    token: Option<String>,
    agent: ureq::Agent,
}

impl Client {
    fn new(base: &str, token: Option<&str>) -> Self {
        Self {
            base: base.to_string(),
            token: token.map(str::to_string),
            agent: ureq::Agent::config_builder()
                .http_status_as_error(false)
                .build()
                .into(),
        }
    }

    fn get(&self, path: &str) -> (u16, String) {
        let mut req = self.agent.get(format!("{}{path}", self.base));
        if let Some(t) = &self.token {
            req = req.header(TOKEN_HEADER, t);
        }
        let mut resp = req.call().unwrap();
        (
            resp.status().as_u16(),
            resp.body_mut().read_to_string().unwrap(),
        )
    }

    fn post(&self, path: &str, body: Option<Value>) -> (u16, Value) {
        let mut req = self.agent.post(format!("{}{path}", self.base));
        if let Some(t) = &self.token {
            req = req.header(TOKEN_HEADER, t);
        }
        let mut resp = match body {
            Some(b) => req.send_json(b).unwrap(),
            None => req.send_empty().unwrap(),
        };
        let status = resp.status().as_u16();
        (status, resp.body_mut().read_json().unwrap_or(Value::Null))
    }

    fn get_json(&self, path: &str) -> (u16, Value) {
        let (status, text) = self.get(path);
        (status, serde_json::from_str(&text).unwrap_or(Value::Null))
    }
}

#[test]
fn session_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let c = Client::new(
        &spawn(service(dir.path(), demo_backend()), None, None),
        None,
    );

    assert_eq!(c.get_json("/healthz"), (200, json!({"status": "ok"})));
    let (status, created) = c.post(
        "/sessions",
        Some(json!({"framework": "raise", "mode": "prompting"})),
    );
    assert_eq!(status, 201);
    let id = created["session_id"].as_str().unwrap().to_string();
    assert_eq!(created["framework"], "raise");

    let (status, reply) = c.post(
        &format!("/sessions/{id}/messages"),
        Some(json!({"text": YEAR_QUESTION})),
    );
    assert_eq!(status, 200);
    assert!(reply["response"]
        .as_str()
        .unwrap()
        .contains("built in 2020"));
    let kinds: Vec<&str> = reply["trace"]["steps"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["step_kind"].as_str().unwrap())
        .collect();
    assert_eq!(
        kinds,
        ["thought", "action", "observation", "thought", "finish"]
    );

    let (status, state) = c.get_json(&format!("/sessions/{id}/state"));
    assert_eq!(status, 200);
    assert_eq!(state["turns"].as_array().unwrap().len(), 1);
    assert_eq!(
        state["turns"][0]["scratchpad"],
        reply["trace"]["scratchpad"]
    );
    assert!(state["memory"].is_object());

    let (_, listed) = c.get_json("/sessions?status=active");
    assert_eq!(listed[0]["session_id"], id.as_str());
    assert_eq!(c.post(&format!("/sessions/{id}/close"), None).0, 200);
    assert_eq!(c.post(&format!("/sessions/{id}/close"), None).0, 409);
    let (status, err) = c.post(
        &format!("/sessions/{id}/messages"),
        Some(json!({"text": "hi"})),
    );
    assert_eq!(status, 409);
    assert_eq!(err["error"], "conflict");
    assert_eq!(c.get_json("/sessions?status=active").1, json!([]));
    assert_eq!(
        c.get_json("/sessions?status=closed").1[0]["status"],
        "closed"
    );
}

#[test]
fn errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let c = Client::new(
        &spawn(service(dir.path(), demo_backend()), None, None),
        None,
    );

    let (status, err) = c.get_json("/sessions/nope/state");
    assert_eq!((status, err["error"].as_str()), (404, Some("not_found")));
    assert_eq!(
        c.post("/sessions/nope/messages", Some(json!({"text": "hi"})))
            .0,
        404
    );
    assert_eq!(
        c.post("/sessions", Some(json!({"framework": "gpt"}))).0,
        400
    );
    assert_eq!(c.post("/sessions", Some(json!({"colour": "red"}))).0, 400);
    assert_eq!(c.post("/sessions", Some(json!({"max_loops": 0}))).0, 400);
    assert_eq!(c.get_json("/sessions?status=sleeping").0, 400);

    // An empty body takes the service defaults.
    let (status, created) = c.post("/sessions", None);
    assert_eq!(status, 201);
    assert_eq!(created["framework"], "raise");
    let id = created["session_id"].as_str().unwrap();
    assert_eq!(
        c.post(
            &format!("/sessions/{id}/messages"),
            Some(json!({"text": "  "}))
        )
        .0,
        400
    );
    assert_eq!(
        c.post(
            &format!("/sessions/{id}/messages"),
            Some(json!({"body": "hi"}))
        )
        .0,
        400
    );
}

#[test]
fn token_guards_api_routes_only() {
    let dir = tempfile::tempdir().unwrap();
    let base = spawn(service(dir.path(), demo_backend()), Some("s3cret"), None);
    let anonymous = Client::new(&base, None);
    assert_eq!(anonymous.get("/healthz").0, 200);
    assert_eq!(anonymous.get("/sessions").0, 401);
    assert_eq!(anonymous.post("/sessions", None).0, 401);
    assert_eq!(Client::new(&base, Some("wrong")).get("/sessions").0, 401);
    assert_eq!(Client::new(&base, Some("s3cret")).get("/sessions").0, 200);

    let agent: ureq::Agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into();
    let resp = agent
        .get(format!("{base}/sessions"))
        .header("Authorization", "Bearer s3cret")
        .call()
        .unwrap();
    assert_eq!(resp.status().as_u16(), 200);
}

#[test]
fn serves_console_assets() {
    let dir = tempfile::tempdir().unwrap();
    let assets = tempfile::tempdir().unwrap();
    std::fs::write(assets.path().join("index.html"), "<html>console</html>").unwrap();
    std::fs::write(assets.path().join("app.js"), "console.log(1)").unwrap();
    let base = spawn(
        service(dir.path(), demo_backend()),
        Some("t"),
        Some(assets.path().to_path_buf()),
    );
    let c = Client::new(&base, None);
    assert_eq!(c.get("/"), (200, "<html>console</html>".to_string()));
    assert_eq!(c.get("/app.js"), (200, "console.log(1)".to_string()));
    assert_eq!(c.get("/missing.css").0, 404);
    assert_eq!(c.get("/sessions").0, 401);
}

#[test]
fn restart_replays_state_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let c = Client::new(
        &spawn(service(dir.path(), demo_backend()), None, None),
        None,
    );
    let id = c
        .post("/sessions", Some(json!({"framework": "react_scratchpad"})))
        .1["session_id"]
        .as_str()
        .unwrap()
        .to_string();
    for text in [YEAR_QUESTION, "How large is it?"] {
        assert_eq!(
            c.post(
                &format!("/sessions/{id}/messages"),
                Some(json!({"text": text}))
            )
            .0,
            200
        );
    }
    let before = c.get(&format!("/sessions/{id}/state"));

    let again = Client::new(
        &spawn(service(dir.path(), demo_backend()), None, None),
        None,
    );
    assert_eq!(again.get(&format!("/sessions/{id}/state")), before);
    let (_, listed) = again.get_json("/sessions");
    assert_eq!(listed[0]["turns"], 2);
}

/// Holds every call long enough for a second request to collide with it.
struct SlowModel(Arc<dyn LanguageModel>);

impl LanguageModel for SlowModel {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        thread::sleep(Duration::from_millis(300));
        self.0.complete(request)
    }

    fn fork(&self) -> Arc<dyn LanguageModel> {
        Arc::new(SlowModel(self.0.fork()))
    }

    fn name(&self) -> &str {
        "slow"
    }
}

#[test]
fn one_turn_in_flight_per_session() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path(), Arc::new(SlowModel(demo_backend())));
    let a = svc
        .create_session(&CreateSession::new(FrameworkKind::Raise, Mode::Prompting))
        .unwrap();
    let b = svc
        .create_session(&CreateSession::new(FrameworkKind::ReAct, Mode::Prompting))
        .unwrap();

    let first = {
        let (svc, id) = (svc.clone(), a.session_id.clone());
        thread::spawn(move || svc.post_message(&id, "hello"))
    };
    thread::sleep(Duration::from_millis(100));
    assert!(matches!(
        svc.post_message(&a.session_id, "again"),
        Err(Error::Conflict(_))
    ));
    assert!(matches!(
        svc.close_session(&a.session_id),
        Err(Error::Conflict(_))
    ));
    // Other sessions are not blocked.
    assert!(svc.post_message(&b.session_id, "hello").is_ok());
    assert!(first.join().unwrap().is_ok());
    assert!(svc.post_message(&a.session_id, "again").is_ok());
    assert_eq!(svc.get_state(&a.session_id).unwrap().turns.len(), 2);
    assert_eq!(svc.list_sessions(Some(SessionStatus::Closed)).len(), 0);
}
