//! Serves the session API on an ephemeral port, talks to it once over HTTP
//! and shuts down.

use std::path::Path;
use std::sync::Arc;

use raise::controller::{LoopConfig, Resources};
use raise::llm::ScriptedBackend;
use raise::prompt::{FrameworkKind, Mode};
use raise::service::{http, SessionService};
use serde_json::{json, Value};

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let data = std::env::temp_dir().join(format!("raise-example-{}", std::process::id()));
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/scripts/demo.jsonl");
    let service = Arc::new(SessionService::open(
        Arc::new(Resources::canonical()),
        Arc::new(ScriptedBackend::load(&script)?),
        LoopConfig::new(FrameworkKind::Raise, Mode::Prompting),
        &data,
    )?);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let base = format!("http://{}", listener.local_addr()?);
    let app = http::router(service, None, None);
    let server = tokio::spawn(async move { axum::serve(listener, app).await });

    let reply = tokio::task::spawn_blocking(move || -> anyhow::Result<Value> {
        let created: Value = ureq::post(format!("{base}/sessions"))
            .send_json(json!({"framework": "raise"}))?
            .body_mut()
            .read_json()?;
        let id = created["session_id"].as_str().unwrap_or_default().to_string();
        let question = r#"{"houseCode": "1021111", "houseName": "Huarun 24 City Mansion, good lighting and view, quiet"} What year was the house constructed?"#;
        let reply = ureq::post(format!("{base}/sessions/{id}/messages"))
            .send_json(json!({"text": question}))?
            .body_mut()
            .read_json()?;
        Ok(reply)
    })
    .await??;
    println!("agent: {}", reply["response"]);
    for step in reply["trace"]["steps"].as_array().into_iter().flatten() {
        println!(
            "  {:<12} {}",
            step["step_kind"].as_str().unwrap_or(""),
            step["text"].as_str().unwrap_or("")
        );
    }
    server.abort();
    let _ = std::fs::remove_dir_all(&data);
    Ok(())
}
