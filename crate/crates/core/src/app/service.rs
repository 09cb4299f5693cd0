use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{AnimationSequence, Animator, NOMINAL_FPS};
use crate::dataset::load_corpus;
use crate::emotion::{EmotionSchedule, EMOTIONS};
use crate::error::{Error, Result};
use crate::face_model::write_obj;
use crate::trainer::{evaluate, split_ids, EvalOptions, EvalReport, SplitName};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServeConfig {
    pub checkpoint: PathBuf,
    pub host: String,
    pub port: u16,
    /// Corpus used by `/evaluate` when the request names none.
    pub corpus: Option<PathBuf>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            checkpoint: PathBuf::from("model.efc"),
            host: "127.0.0.1".into(),
            port: 8080,
            corpus: None,
        }
    }
}

pub struct AppState {
    pub animator: Animator,
    pub corpus: Option<PathBuf>,
}

/// Base64 WAV bytes, or `{"path": ...}` naming a file on the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AudioInput {
    Base64(String),
    Path { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnimateRequest {
    pub audio: AudioInput,
    #[serde(default)]
    pub schedule: EmotionSchedule,
    #[serde(default)]
    pub identity: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateRequest {
    pub corpus: Option<PathBuf>,
    pub split: SplitName,
    pub options: EvalOptions,
}

struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

fn root_cause(e: &Error) -> &Error {
    match e {
        Error::Stage { source, .. } => root_cause(source),
        other => other,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let message = self.0.to_string();
        let (status, extra) = match root_cause(&self.0) {
            Error::UnknownCategory { valid, .. } => (StatusCode::UNPROCESSABLE_ENTITY, json!({ "valid_labels": valid })),
            Error::InvalidInput(_)
            | Error::Dimension { .. }
            | Error::Domain(_)
            | Error::UnsupportedFormat(_) => (StatusCode::UNPROCESSABLE_ENTITY, Value::Null),
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                (StatusCode::NOT_FOUND, Value::Null)
            }
            Error::Json(_) | Error::Config(_) => (StatusCode::BAD_REQUEST, Value::Null),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, Value::Null),
        };
        let mut body = json!({ "error": message });
        if let Value::Object(fields) = extra {
            body.as_object_mut().expect("object literal").extend(fields);
        }
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(Error::InvalidInput(format!("worker failed: {e}"))))?
        .map_err(ApiError)
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({ "status": "ok", "checkpoint": state.animator.checkpoint_hash() }))
}

async fn model(State(state): State<Arc<AppState>>) -> Json<Value> {
    let b = state.animator.bundle();
    let face = &b.face;
    Json(json!({
        "checkpoint": state.animator.checkpoint_hash(),
        "labels": EMOTIONS,
        "n_params": face.n_params(),
        "n_expression": face.n_expression(),
        "n_pose": face.n_pose(),
        "n_shape": face.n_shape(),
        "n_vertices": face.n_vertices(),
        "n_faces": face.faces().len(),
        "expression_modes": face.expression_names(),
        "fps": NOMINAL_FPS,
        "settings": b.settings,
        "info": b.info,
    }))
}

async fn animate(
    State(state): State<Arc<AppState>>,
    Json(req): Json<AnimateRequest>,
) -> ApiResult<Json<AnimationSequence>> {
    let seq = blocking(move || {
        let a = &state.animator;
        match &req.audio {
            AudioInput::Base64(text) => {
                let bytes = base64::engine::general_purpose::STANDARD
                    .decode(text.trim())
                    .map_err(|e| Error::InvalidInput(format!("audio is not valid base64: {e}")))?;
                a.animate_wav(&bytes, &req.schedule, req.identity.as_deref())
            }
            AudioInput::Path { path } => a.animate_file(path, &req.schedule, req.identity.as_deref()),
        }
    })
    .await?;
    Ok(Json(seq))
}

async fn template(State(state): State<Arc<AppState>>) -> impl IntoResponse {
    let face = &state.animator.bundle().face;
    (
        [(header::CONTENT_TYPE, "text/plain; charset=utf-8")],
        write_obj(face.template().view(), face.faces()),
    )
}

async fn evaluate_route(
    State(state): State<Arc<AppState>>,
    body: Option<Json<EvaluateRequest>>,
) -> ApiResult<Json<EvalReport>> {
    let req = body.map(|Json(r)| r).unwrap_or_default();
    let report = blocking(move || {
        let root = req
            .corpus
            .or_else(|| state.corpus.clone())
            .ok_or_else(|| Error::InvalidInput("no corpus given and the service has no default".into()))?;
        let corpus = load_corpus(&root)?;
        let bundle = state.animator.bundle();
        let ids = split_ids(bundle, &corpus, req.split)?;
        evaluate(bundle, &corpus, &ids, &req.options)
    })
    .await?;
    Ok(Json(report))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/model", get(model))
        .route("/animate", post(animate))
        .route("/mesh/template", get(template))
        .route("/evaluate", post(evaluate_route))
        .with_state(state)
}

/// Bind, report the bound address, then serve until the task is cancelled.
pub async fn serve(config: &ServeConfig, on_ready: impl FnOnce(SocketAddr, &str)) -> Result<()> {
    let animator = Animator::load(&config.checkpoint)?;
    let state = Arc::new(AppState {
        animator,
        corpus: config.corpus.clone(),
    });
    let addr = format!("{}:{}", config.host, config.port);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|e| Error::io(PathBuf::from(&addr), e))?;
    let bound = listener.local_addr().map_err(|e| Error::io(PathBuf::from(&addr), e))?;
    on_ready(bound, state.animator.checkpoint_hash());
    axum::serve(listener, router(state))
        .await
        .map_err(|e| Error::io(PathBuf::from(&addr), e))
}
