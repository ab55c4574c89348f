//! HTTP routes.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use spev_core::subjective::{median_vv, subjective_visibility, GROUND_TRUTH_HEADER, REQUIRED_REPETITIONS};

use crate::api::{Annotation, AnnotationRequest, AnnotationResponse, CreateSessionRequest, Session, SessionView};
use crate::catalog::Catalog;
use crate::error::AnnotError;
use crate::store::{export_ground_truth, Event, Store};

pub struct AppState {
    pub catalog: Catalog,
    pub store: Store,
}

type Shared = State<Arc<AppState>>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/annotations", post(submit_annotation))
        .route("/frames/{camera}/{index}", get(get_frame))
        .route("/export/{camera}", get(export))
        .with_state(state)
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, AnnotError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| AnnotError::InvalidRequest(e.body_text()))
}

fn now() -> String {
    time::OffsetDateTime::now_utc()
        .format(&time::format_description::well_known::Rfc3339)
        .expect("UTC time formats")
}

async fn create_session(
    State(app): Shared,
    payload: Result<Json<CreateSessionRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionView>), AnnotError> {
    let req = body(payload)?;
    let camera = app.catalog.camera(&req.camera_id)?;
    if req.frames.is_empty() {
        return Err(AnnotError::EmptyFrameSelection);
    }
    if req.subject_id.trim().is_empty() {
        return Err(AnnotError::InvalidRequest("subject_id must be non-empty".into()));
    }
    let mut frames = Vec::with_capacity(req.frames.len());
    for f in req.frames {
        if !camera.frames.contains_key(&f) {
            return Err(AnnotError::UnknownFrame {
                scope: format!("camera {}", req.camera_id),
                frame_index: f,
            });
        }
        if !frames.contains(&f) {
            frames.push(f);
        }
    }
    let session = Session {
        session_id: uuid::Uuid::new_v4().to_string(),
        camera_id: req.camera_id,
        subject_id: req.subject_id,
        frames,
        required_repetitions: REQUIRED_REPETITIONS,
        created_at: now(),
    };
    let id = session.session_id.clone();
    let state = app.store.append(Event::SessionCreated(session))?;
    Ok((StatusCode::CREATED, Json(state.session(&id)?.view())))
}

async fn get_session(State(app): Shared, Path(id): Path<String>) -> Result<Json<SessionView>, AnnotError> {
    Ok(Json(app.store.snapshot().session(&id)?.view()))
}

async fn submit_annotation(
    State(app): Shared,
    Path(id): Path<String>,
    payload: Result<Json<AnnotationRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<AnnotationResponse>), AnnotError> {
    let req = body(payload)?;
    let snapshot = app.store.snapshot();
    let session = &snapshot.session(&id)?.session;
    let camera = app.catalog.camera(&session.camera_id)?;
    let v_h = camera.geometry.v_h();
    if !req.v_v.is_finite() || req.v_v <= v_h {
        return Err(AnnotError::BelowHorizon { v_v: req.v_v, v_h });
    }
    let record = Annotation {
        session_id: id.clone(),
        camera_id: session.camera_id.clone(),
        frame_index: req.frame_index,
        subject_id: session.subject_id.clone(),
        repetition: req.repetition,
        v_v: req.v_v,
        created_at: now(),
    };
    let state = app.store.append(Event::Annotation(record.clone()))?;
    let st = state.session(&id)?;
    let records = st.frame_records(req.frame_index);
    let median = median_vv(&records).map_err(|e| AnnotError::Storage(e.to_string()))?;
    let vis =
        subjective_visibility(median, &camera.geometry).map_err(|_| AnnotError::BelowHorizon { v_v: median, v_h })?;
    Ok((
        StatusCode::CREATED,
        Json(AnnotationResponse {
            record,
            n_repetitions: records.len(),
            median_v_v: median,
            vis: vis.into(),
            session_status: st.status(),
        }),
    ))
}

#[derive(Debug, Deserialize)]
struct FrameQuery {
    /// `horizon` draws the horizon row.
    overlay: Option<String>,
}

async fn get_frame(
    State(app): Shared,
    Path((camera, index)): Path<(String, u64)>,
    Query(q): Query<FrameQuery>,
) -> Result<Response, AnnotError> {
    let horizon = match q.overlay.as_deref() {
        None | Some("none") => false,
        Some("horizon") => true,
        Some(other) => return Err(AnnotError::InvalidRequest(format!("unknown overlay {other:?}"))),
    };
    let app2 = app.clone();
    let png = tokio::task::spawn_blocking(move || app2.catalog.frame_png(&camera, index, horizon))
        .await
        .map_err(|e| AnnotError::Storage(e.to_string()))??;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn export(State(app): Shared, Path(camera_id): Path<String>) -> Result<Response, AnnotError> {
    let camera = app.catalog.camera(&camera_id)?;
    let rows = export_ground_truth(&app.store.snapshot(), &camera_id, camera)?;
    let mut csv = String::from(GROUND_TRUTH_HEADER);
    csv.push('\n');
    for r in rows {
        csv.push_str(&r.to_csv_line());
        csv.push('\n');
    }
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response())
}

/// Service settings, normally from `ANNOT_PORT` and `ANNOT_DATA_DIR`.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub port: u16,
    pub data_dir: PathBuf,
}

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_DATA_DIR: &str = "annot-data";

impl ServiceConfig {
    pub fn from_env() -> Result<Self, AnnotError> {
        let port = match std::env::var("ANNOT_PORT") {
            Ok(s) => s
                .parse()
                .map_err(|e| AnnotError::InvalidRequest(format!("ANNOT_PORT={s:?}: {e}")))?,
            Err(_) => DEFAULT_PORT,
        };
        let data_dir = std::env::var_os("ANNOT_DATA_DIR")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR));
        Ok(Self { port, data_dir })
    }
}

/// Opens the store, binds and serves until Ctrl-C.
pub async fn serve(catalog: Catalog, config: &ServiceConfig) -> Result<(), AnnotError> {
    let store = Store::open(&config.data_dir)?;
    let app = Arc::new(AppState { catalog, store });
    let addr = SocketAddr::from(([0, 0, 0, 0], config.port));
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| AnnotError::Storage(format!("bind {addr}: {e}")))?;
    eprintln!(
        "annotation service listening on {}",
        listener.local_addr().map_err(|e| AnnotError::Storage(e.to_string()))?
    );
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| AnnotError::Storage(e.to_string()))
}
