//! HTTP + WebSocket front end over a [`SessionRegistry`].
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | POST | `/sessions` | [`CreateSession`] | 201 [`SessionCreated`] |
//! | GET | `/sessions/{id}` | | [`SessionView`] |
//! | PATCH | `/sessions/{id}/canceller` | [`CodeUpdate`] | [`CancellerAck`] |
//! | POST | `/sessions/{id}/tune` | | [`CancellerAck`] |
//! | POST | `/sessions/{id}/digital-sic` | | `ExperimentReport` |
//! | DELETE | `/sessions/{id}` | | 204 |
//! | GET | `/sessions/{id}/stream` | WebSocket upgrade | JSON [`Frame`](super::Frame) text messages |
//!
//! Errors reply `{"error": "..."}` with 404 for unknown sessions, 422 for
//! invalid input and 500 otherwise.

use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use super::session::{CancellerAck, CodeUpdate, SessionRegistry, SessionView, StreamSettings};
use crate::canceller::CancellerCode;
use crate::error::Error;
use crate::experiment::{ExperimentConfig, ExperimentReport};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CreateSession {
    /// Named preset; ignored when `config` is given. Defaults to `tone`.
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub config: Option<ExperimentConfig>,
    #[serde(default)]
    pub stream: Option<StreamSettings>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionCreated {
    pub id: u64,
    pub code: CancellerCode,
    pub rf_sic_db: f64,
    pub stream_path: String,
}

pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self.0 {
            Error::UnknownSession(_) => StatusCode::NOT_FOUND,
            Error::Domain(_) | Error::Config(_) | Error::Json(_) | Error::Parse(_) | Error::Shape(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(serde_json::json!({ "error": self.0.to_string() }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;
type Shared = Arc<SessionRegistry>;

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> crate::Result<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(Error::Config(format!("worker failed: {e}"))))?
        .map_err(ApiError)
}

async fn create(
    State(reg): State<Shared>,
    body: Option<Json<CreateSession>>,
) -> ApiResult<(StatusCode, Json<SessionCreated>)> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let cfg = match (req.config, req.preset) {
        (Some(c), _) => c,
        (None, Some(p)) => ExperimentConfig::preset(&p)?,
        (None, None) => ExperimentConfig::tone(),
    };
    let stream = req.stream.unwrap_or_default();
    let (id, ack) = blocking(move || reg.create(cfg, stream)).await?;
    let created =
        SessionCreated { id, code: ack.code, rf_sic_db: ack.rf_sic_db, stream_path: format!("/sessions/{id}/stream") };
    Ok((StatusCode::CREATED, Json(created)))
}

async fn view(State(reg): State<Shared>, Path(id): Path<u64>) -> ApiResult<Json<SessionView>> {
    Ok(Json(reg.view(id)?))
}

async fn set_canceller(
    State(reg): State<Shared>,
    Path(id): Path<u64>,
    Json(update): Json<CodeUpdate>,
) -> ApiResult<Json<CancellerAck>> {
    Ok(Json(blocking(move || reg.set_canceller(id, &update)).await?))
}

async fn tune(State(reg): State<Shared>, Path(id): Path<u64>) -> ApiResult<Json<CancellerAck>> {
    Ok(Json(blocking(move || reg.tune(id)).await?))
}

async fn digital_sic(State(reg): State<Shared>, Path(id): Path<u64>) -> ApiResult<Json<ExperimentReport>> {
    Ok(Json(blocking(move || reg.run_digital_sic(id)).await?))
}

async fn close(State(reg): State<Shared>, Path(id): Path<u64>) -> ApiResult<StatusCode> {
    reg.close(id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn stream(State(reg): State<Shared>, Path(id): Path<u64>, ws: WebSocketUpgrade) -> ApiResult<Response> {
    let settings = reg.with(id, |s| Ok(s.stream_settings()))?;
    Ok(ws.on_upgrade(move |socket| pump_frames(socket, reg, id, settings)))
}

/// Sends one frame per tick until the client leaves or the session closes.
async fn pump_frames(mut socket: WebSocket, reg: Shared, id: u64, settings: StreamSettings) {
    let mut ticker = tokio::time::interval(Duration::from_secs_f64(1.0 / settings.frame_rate_hz));
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        tokio::select! {
            _ = ticker.tick() => {
                let r = reg.clone();
                let frame = match tokio::task::spawn_blocking(move || r.next_frame(id)).await {
                    Ok(Ok(f)) => f,
                    _ => break,
                };
                let text = match serde_json::to_string(&frame) {
                    Ok(t) => t,
                    Err(_) => break,
                };
                if socket.send(Message::Text(text.into())).await.is_err() {
                    return;
                }
            }
            msg = socket.recv() => match msg {
                None | Some(Err(_)) | Some(Ok(Message::Close(_))) => return,
                Some(Ok(_)) => {}
            },
        }
    }
    let _ = socket.send(Message::Close(None)).await;
}

pub fn router(registry: Shared) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(view).delete(close))
        .route("/sessions/{id}/canceller", patch(set_canceller))
        .route("/sessions/{id}/tune", post(tune))
        .route("/sessions/{id}/digital-sic", post(digital_sic))
        .route("/sessions/{id}/stream", get(stream))
        .with_state(registry)
}

/// Serves the API on `listener` until the process ends.
pub async fn serve(listener: TcpListener, registry: Shared) -> std::io::Result<()> {
    axum::serve(listener, router(registry)).await
}
