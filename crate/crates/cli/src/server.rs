//! HTTP API for the labelling UI. One session per server; mutations take
//! the write lock so they are applied one at a time, reads share it.

use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use bedmake::geometry::Pixel;
use bedmake::harness::{
    image_path, load_episodes, save_demonstrations, DemoRecord, EpisodeLog, ExperimentConfig, HarnessError,
    LabelSession, SessionError, SessionView,
};
use bedmake::render::encode_png;
use bedmake::sim::Side;

pub struct AppState {
    session: RwLock<LabelSession>,
    rollouts: Option<PathBuf>,
    /// Where labelled demonstrations are written after every change.
    out: PathBuf,
}

impl AppState {
    pub fn new(cfg: ExperimentConfig, rollouts: Option<PathBuf>) -> Result<Arc<Self>, HarnessError> {
        let out = cfg.output_dir.clone();
        let id = format!("session-{}", cfg.seed);
        Ok(Arc::new(Self {
            session: RwLock::new(LabelSession::new(cfg, &id)?),
            rollouts,
            out,
        }))
    }

    fn persist(&self, session: &LabelSession) -> Result<(), ApiError> {
        save_demonstrations(&self.out, session.records()).map_err(ApiError::internal)
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: &self.message })).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match &e {
            SessionError::WrongPhase { .. } => StatusCode::CONFLICT,
            SessionError::OutOfImage { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            SessionError::NoSuchDemo(_) | SessionError::NoSuchImage(_) => StatusCode::NOT_FOUND,
            SessionError::Harness(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::new(e.status(), e.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone, Copy, Deserialize)]
pub struct GraspBody {
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
pub struct LabelBody {
    pub success: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraspResponse {
    pub post_image_url: String,
    pub session: SessionView,
}

/// One labelled attempt as the UI lists it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoSummary {
    pub index: usize,
    pub episode: String,
    pub attempt: usize,
    pub side: Side,
    pub grasp_label: Pixel,
    pub executed_pixel: Pixel,
    pub transition_label: u8,
    pub pre_image_url: String,
    pub post_image_url: String,
}

fn image_url(id: &str) -> String {
    format!("/api/image/{id}.png")
}

fn summarize(records: &[DemoRecord]) -> Vec<DemoSummary> {
    records
        .iter()
        .enumerate()
        .map(|(index, r)| DemoSummary {
            index,
            episode: r.episode.clone(),
            attempt: r.attempt,
            side: r.demo.side,
            grasp_label: r.demo.grasp_label,
            executed_pixel: r.demo.executed_pixel,
            transition_label: r.demo.transition_label,
            pre_image_url: image_url(&r.pre_id),
            post_image_url: image_url(&r.post_id),
        })
        .collect()
}

/// A crosshair the inspector draws on `image_url`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    pub side: Side,
    pub attempt: usize,
    pub image_id: String,
    pub image_url: String,
    pub post_image_url: String,
    /// The policy's chosen pixel, exactly as logged.
    pub pixel: Pixel,
    pub executed_pixel: Pixel,
    pub oracle_pixel: Option<Pixel>,
    pub style: String,
    pub max_force: Option<f64>,
    pub release_step: Option<usize>,
    pub transition: bool,
    pub forced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutView {
    pub episode: EpisodeLog,
    pub overlays: Vec<Overlay>,
}

fn overlays(log: &EpisodeLog) -> Vec<Overlay> {
    log.attempts()
        .map(|(side, a)| Overlay {
            side,
            attempt: a.attempt,
            image_id: a.pre_obs.clone(),
            image_url: image_url(&a.pre_obs),
            post_image_url: image_url(&a.post_obs),
            pixel: a.pixel,
            executed_pixel: a.executed_pixel,
            oracle_pixel: a.oracle_pixel,
            style: "predicted".into(),
            max_force: a
                .stretch
                .as_ref()
                .map(|s| s.steps.iter().map(|st| st.force).fold(0.0, f64::max)),
            release_step: a.stretch.as_ref().and_then(|s| s.release_step),
            transition: a.decision.as_label() == 1,
            forced: a.forced,
        })
        .collect()
}

async fn get_session(State(s): State<Arc<AppState>>) -> Json<SessionView> {
    Json(s.session.read().expect("session lock").view())
}

async fn get_image(State(s): State<Arc<AppState>>, UrlPath(file): UrlPath<String>) -> ApiResult<Response> {
    let Some(id) = file.strip_suffix(".png") else {
        return Err(ApiError::new(StatusCode::NOT_FOUND, format!("unknown image {file}")));
    };
    let bytes = {
        let session = s.session.read().expect("session lock");
        session.image(id).ok().map(|obs| encode_png(&obs))
    };
    let bytes = match bytes {
        Some(b) => b.map_err(ApiError::internal)?,
        None => {
            // rollout images live on disk
            let path = s
                .rollouts
                .as_ref()
                .filter(|_| is_plain_id(id))
                .map(|dir| image_path(dir, id))
                .filter(|p| p.is_file())
                .ok_or_else(|| ApiError::from(SessionError::NoSuchImage(id.to_string())))?;
            std::fs::read(path).map_err(ApiError::internal)?
        }
    };
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

/// Ids are generated names; anything that could climb out of the
/// rollout directory is refused.
fn is_plain_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

async fn post_grasp(
    State(s): State<Arc<AppState>>,
    body: Result<Json<GraspBody>, JsonRejection>,
) -> ApiResult<Json<GraspResponse>> {
    let Json(b) = body?;
    let mut session = s.session.write().expect("session lock");
    let post = session.grasp(Pixel::new(b.u, b.v))?;
    Ok(Json(GraspResponse {
        post_image_url: image_url(&post),
        session: session.view(),
    }))
}

async fn post_label(
    State(s): State<Arc<AppState>>,
    body: Result<Json<LabelBody>, JsonRejection>,
) -> ApiResult<Json<SessionView>> {
    let Json(b) = body?;
    let mut session = s.session.write().expect("session lock");
    let view = session.label(b.success)?;
    s.persist(&session)?;
    Ok(Json(view))
}

async fn post_next(State(s): State<Arc<AppState>>) -> ApiResult<Json<SessionView>> {
    let mut session = s.session.write().expect("session lock");
    Ok(Json(session.next_episode()?))
}

async fn get_demos(State(s): State<Arc<AppState>>) -> Json<Vec<DemoSummary>> {
    Json(summarize(s.session.read().expect("session lock").records()))
}

async fn delete_demo(
    State(s): State<Arc<AppState>>,
    UrlPath(index): UrlPath<usize>,
) -> ApiResult<Json<Vec<DemoSummary>>> {
    let mut session = s.session.write().expect("session lock");
    session.delete_demo(index)?;
    s.persist(&session)?;
    Ok(Json(summarize(session.records())))
}

async fn get_rollout(State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<RolloutView>> {
    let not_found = || ApiError::new(StatusCode::NOT_FOUND, format!("unknown episode {id}"));
    let dir = s.rollouts.as_ref().ok_or_else(not_found)?;
    let logs = load_episodes(dir).map_err(|e| match e {
        HarnessError::Io(_) => not_found(),
        other => ApiError::internal(other),
    })?;
    let log = logs.into_iter().find(|l| l.id == id).ok_or_else(not_found)?;
    Ok(Json(RolloutView {
        overlays: overlays(&log),
        episode: log,
    }))
}

async fn api_not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "no such endpoint")
}

/// The API under `/api`, with `static_dir` (if any) served at `/`.
pub fn router(state: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/session", get(get_session))
        .route("/image/{file}", get(get_image))
        .route("/grasp", post(post_grasp))
        .route("/label", post(post_label))
        .route("/next", post(post_next))
        .route("/demos", get(get_demos))
        .route("/demos/{index}", delete(delete_demo))
        .route("/rollout/{id}", get(get_rollout))
        .fallback(api_not_found)
        .with_state(state);
    let app = Router::new().nest("/api", api);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.fallback(api_not_found),
    }
}
