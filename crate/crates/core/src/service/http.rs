//! HTTP routes over [`SessionService`].
//!
//! JSON in, JSON out. Errors come back as `{"error": code, "message": ...}`
//! with 400, 401, 404, 409 or 500. When a token is configured every route
//! except `/healthz` and static assets needs an `x-raise-token` header (or
//! `Authorization: Bearer`).

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use super::{CreateSession, SessionService};
use crate::error::Error;

pub const TOKEN_HEADER: &str = "x-raise-token";

#[derive(Clone)]
struct AppState {
    service: Arc<SessionService>,
    token: Option<Arc<str>>,
}

pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = match &self.0 {
            Error::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            Error::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            e if e.is_validation() => (StatusCode::BAD_REQUEST, "validation_error"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal_error"),
        };
        if status.is_server_error() {
            tracing::error!(error = %self.0, "request failed");
        }
        (
            status,
            Json(json!({"error": code, "message": self.0.to_string()})),
        )
            .into_response()
    }
}

fn parse_body<T: DeserializeOwned + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body)
        .map_err(|e| ApiError(Error::Validation(format!("request body: {e}"))))
}

/// Runs blocking service work off the async workers.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, Error> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(Error::Validation(format!("request aborted: {e}"))))?
        .map_err(ApiError)
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

async fn create(State(s): State<AppState>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let req: CreateSession = parse_body(&body)?;
    let summary = blocking(move || s.service.create_session(&req)).await?;
    Ok((StatusCode::CREATED, Json(summary)))
}

#[derive(Deserialize)]
struct ListQuery {
    status: Option<String>,
}

async fn list(
    State(s): State<AppState>,
    Query(q): Query<ListQuery>,
) -> Result<impl IntoResponse, ApiError> {
    let status = q.status.as_deref().map(str::parse).transpose()?;
    Ok(Json(s.service.list_sessions(status)))
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageBody {
    text: String,
}

async fn message(
    State(s): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let req: MessageBody = parse_body(&body)?;
    let reply = blocking(move || s.service.post_message(&id, &req.text)).await?;
    Ok(Json(reply))
}

async fn get_state(
    State(s): State<AppState>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(s.service.get_state(&id)?))
}

async fn close(
    State(s): State<AppState>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    let summary = blocking(move || s.service.close_session(&id)).await?;
    Ok(Json(summary))
}

fn token_ok(headers: &HeaderMap, want: &str) -> bool {
    let header = headers.get(TOKEN_HEADER).and_then(|v| v.to_str().ok());
    let bearer = headers
        .get(axum::http::header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    header == Some(want) || bearer == Some(want)
}

async fn require_token(State(s): State<AppState>, req: Request, next: Next) -> Response {
    match &s.token {
        Some(t) if !token_ok(req.headers(), t) => (
            StatusCode::UNAUTHORIZED,
            Json(json!({"error": "unauthorized", "message": "missing or wrong token"})),
        )
            .into_response(),
        _ => next.run(req).await,
    }
}

/// Builds the router. `static_dir`, when set, is served for every path the
/// API does not claim.
pub fn router(
    service: Arc<SessionService>,
    token: Option<String>,
    static_dir: Option<PathBuf>,
) -> Router {
    let state = AppState {
        service,
        token: token.filter(|t| !t.is_empty()).map(Arc::from),
    };
    let api = Router::new()
        .route("/sessions", post(create).get(list))
        .route("/sessions/{id}/messages", post(message))
        .route("/sessions/{id}/state", get(get_state))
        .route("/sessions/{id}/close", post(close))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    let app = Router::new().route("/healthz", get(healthz)).merge(api);
    let app = match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    };
    app.with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(
    service: Arc<SessionService>,
    addr: std::net::SocketAddr,
    token: Option<String>,
    static_dir: Option<PathBuf>,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "session service listening");
    axum::serve(listener, router(service, token, static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
