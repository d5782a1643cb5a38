//! HTTP/JSON API and the `/ws` WebSocket bridge.

use axum::extract::rejection::JsonRejection;
use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use holo_core::analytics::{self, build_report, render_text, LexiconProvider};
use holo_core::api::{
    CommandAck, Health, KappaRequest, ProjectRequest, ReportRequest, ReportResponse, TwoSampleRequest,
};
use holo_core::geometry::{project_point, ScreenGeometry, Viewer};
use holo_core::protocol::{self, Body, ErrorPayload, Snapshot, PROTOCOL_VERSION};
use holo_core::session::Input;
use serde::Serialize;
use serde_json::{json, Value};
use tokio::sync::{mpsc, watch};

use crate::conn::{self, Connection, Outbox, Outgoing, MAX_LINE};
use crate::hub::{HubClosed, HubHandle};

/// Largest accepted request body; report requests carry audio.
pub const MAX_BODY: usize = 64 << 20;

#[derive(Clone)]
pub(crate) struct AppState {
    pub hub: HubHandle,
    pub screen: ScreenGeometry,
    pub shutdown: watch::Receiver<bool>,
}

pub(crate) fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/ws", get(ws_upgrade))
        .route("/api/snapshot", get(snapshot))
        .route("/api/command", post(command))
        .route("/api/pose", post(pose))
        .route("/api/geometry/project", post(project))
        .route("/api/analytics/mann_whitney", post(mann_whitney))
        .route("/api/analytics/t_test", post(t_test))
        .route("/api/analytics/kappa", post(kappa))
        .route("/api/analytics/report", post(report))
        .layer(DefaultBodyLimit::max(MAX_BODY))
        .with_state(state)
}

/// Error response carrying an [`ErrorPayload`] body.
pub(crate) struct ApiError {
    status: StatusCode,
    body: ErrorPayload,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>, path: Option<String>) -> ApiError {
        ApiError { status, body: ErrorPayload { code: code.into(), message: message.into(), path } }
    }

    fn unprocessable(code: &str, message: impl ToString) -> ApiError {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, message.to_string(), None)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> ApiError {
        ApiError::new(e.status(), "bad_request", e.body_text(), None)
    }
}

impl From<HubClosed> for ApiError {
    fn from(e: HubClosed) -> ApiError {
        ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "shutting_down", e.to_string(), None)
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn health(State(st): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        protocol_version: PROTOCOL_VERSION,
        frame_id: st.hub.latest().map_or(0, |s| s.frame_id),
        clients: st.hub.clients(),
    })
}

async fn snapshot(State(st): State<AppState>) -> ApiResult<Snapshot> {
    match st.hub.latest() {
        Some(s) => Ok(Json((*s).clone())),
        None => Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no_snapshot", "no frame has been produced yet", None)),
    }
}

/// Validates a bare payload as a message of type `ty`, so HTTP and line
/// clients get identical schema errors.
fn payload_body(ty: &str, payload: Value) -> Result<Body, ApiError> {
    protocol::decode_value(json!({ "payload": payload, "seq": 0, "type": ty }))
        .map(|m| m.body)
        .map_err(|e| match conn::protocol_error_body(&e) {
            Body::Error(p) => ApiError { status: StatusCode::UNPROCESSABLE_ENTITY, body: p },
            _ => unreachable!(),
        })
}

async fn command(State(st): State<AppState>, body: Result<Json<Value>, JsonRejection>) -> ApiResult<CommandAck> {
    let Json(payload) = body?;
    let Body::Command(c) = payload_body("command", payload)? else { unreachable!() };
    Ok(Json(st.hub.command(c).await?))
}

#[derive(Serialize)]
struct Accepted {
    accepted: bool,
}

async fn pose(
    State(st): State<AppState>,
    body: Result<Json<Value>, JsonRejection>,
) -> Result<(StatusCode, Json<Accepted>), ApiError> {
    let Json(payload) = body?;
    let Body::PoseUpdate(p) = payload_body("pose_update", payload)? else { unreachable!() };
    st.hub.submit(Input::Pose(p)).await?;
    Ok((StatusCode::ACCEPTED, Json(Accepted { accepted: true })))
}

async fn project(
    State(st): State<AppState>,
    body: Result<Json<ProjectRequest>, JsonRejection>,
) -> ApiResult<holo_core::geometry::ScreenPoint> {
    let Json(req) = body?;
    let viewer = Viewer::at(req.eye).map_err(|e| ApiError::unprocessable("invalid_viewer", e))?;
    project_point(&viewer, req.point, &st.screen)
        .map(Json)
        .map_err(|e| ApiError::unprocessable("degenerate_projection", e))
}

fn stats_error(e: analytics::StatsError) -> ApiError {
    ApiError::unprocessable("stats_error", e)
}

async fn mann_whitney(body: Result<Json<TwoSampleRequest>, JsonRejection>) -> ApiResult<analytics::StatResult> {
    let Json(req) = body?;
    analytics::mann_whitney_u_with(&req.a, &req.b, req.method).map(Json).map_err(stats_error)
}

async fn t_test(body: Result<Json<TwoSampleRequest>, JsonRejection>) -> ApiResult<analytics::StatResult> {
    let Json(req) = body?;
    analytics::t_test(&req.a, &req.b, req.variant).map(Json).map_err(stats_error)
}

async fn kappa(body: Result<Json<KappaRequest>, JsonRejection>) -> ApiResult<analytics::StatResult> {
    let Json(req) = body?;
    analytics::cohen_kappa(&req.confusion).map(Json).map_err(stats_error)
}

async fn report(body: Result<Json<ReportRequest>, JsonRejection>) -> ApiResult<ReportResponse> {
    let Json(req) = body?;
    let a = req.group_a.into_dataset().map_err(|e| ApiError::unprocessable("invalid_audio", format!("group_a: {e}")))?;
    let b = req.group_b.into_dataset().map_err(|e| ApiError::unprocessable("invalid_audio", format!("group_b: {e}")))?;
    let opts = req.options;
    let built = tokio::task::spawn_blocking(move || build_report(&a, &b, &opts, &LexiconProvider::default()))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string(), None))?;
    let report = built.map_err(|e| ApiError::unprocessable("report_error", e))?;
    let text = render_text(&report);
    Ok(Json(ReportResponse { report, text }))
}

async fn ws_upgrade(State(st): State<AppState>, ws: WebSocketUpgrade) -> Response {
    ws.max_message_size(MAX_LINE + 2).on_upgrade(move |socket| ws_session(socket, st))
}

async fn ws_session(socket: WebSocket, st: AppState) {
    let _guard = st.hub.client_guard();
    let (mut sink, mut stream) = socket.split();
    let (reply_tx, mut reply_rx) = mpsc::channel(64);
    let mut feed = st.hub.subscribe();

    let mut writer_shutdown = st.shutdown.clone();
    let writer = tokio::spawn(async move {
        let mut outbox = Outbox::new();
        while let Outgoing::Line(line) =
            conn::next_outgoing(&mut outbox, &mut reply_rx, &mut feed, &mut writer_shutdown).await
        {
            if sink.send(WsMessage::Text(line.into())).await.is_err() {
                break;
            }
        }
        let _ = sink.send(WsMessage::Close(None)).await;
    });

    let mut conn = Connection::new(st.hub.clone());
    let mut shutdown = st.shutdown.clone();
    loop {
        let next = tokio::select! {
            _ = shutdown.changed() => break,
            m = stream.next() => m,
        };
        let data: Vec<u8> = match next {
            Some(Ok(WsMessage::Text(t))) => t.as_str().as_bytes().to_vec(),
            Some(Ok(WsMessage::Binary(b))) => b.to_vec(),
            Some(Ok(WsMessage::Close(_))) | None | Some(Err(_)) => break,
            Some(Ok(_)) => continue,
        };
        let Ok(outcome) = conn.handle_line(&data).await else { break };
        for body in outcome.replies {
            let _ = reply_tx.send(body).await;
        }
        if outcome.close {
            break;
        }
    }
    drop(reply_tx);
    let _ = writer.await;
}
