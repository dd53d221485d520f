//! HTTP labeling service over a single [`Session`].
//!
//! Mutations (query issue, label submission, retraining) run one at a time
//! behind an async mutex, on the blocking pool. After each mutation the
//! metrics snapshot is republished on a watch channel, so `GET /api/metrics`
//! and `GET /api/health` never wait for a running retrain. Concurrent retrain
//! requests queue in arrival order; a response reports whether it waited.

mod error;
mod session;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use stl_api::{
    ErrorBody, Health, LabelAck, LabelSubmission, Metrics, QueryKind, QueryResponse, RetrainRequest, RetrainResponse,
    TrajectoryPayload,
};
use tokio::sync::{watch, Mutex};
use tower_http::services::ServeDir;
use tower_http::trace::TraceLayer;

pub use error::ServiceError;
pub use session::{trajectory_from_dir, RetrainOutcome, Session, SessionOptions};

#[derive(Clone)]
pub struct AppState {
    session: Arc<Mutex<Session>>,
    dir: PathBuf,
    revision: Arc<AtomicU64>,
    metrics: watch::Receiver<Metrics>,
    publish: Arc<watch::Sender<Metrics>>,
    retrains: Arc<AtomicUsize>,
}

impl AppState {
    pub fn new(session: Session) -> Self {
        let (tx, rx) = watch::channel(session.metrics());
        Self {
            dir: session.dir().to_path_buf(),
            revision: Arc::new(AtomicU64::new(session.revision())),
            session: Arc::new(Mutex::new(session)),
            metrics: rx,
            publish: Arc::new(tx),
            retrains: Arc::new(AtomicUsize::new(0)),
        }
    }

    pub fn revision(&self) -> u64 {
        self.revision.load(Ordering::SeqCst)
    }

    /// Runs `f` with exclusive access to the session on the blocking pool and
    /// republishes metrics if the revision moved.
    async fn mutate<T, F>(&self, f: F) -> Result<T, ApiError>
    where
        T: Send + 'static,
        F: FnOnce(&mut Session) -> Result<T, ServiceError> + Send + 'static,
    {
        let mut guard = self.session.clone().lock_owned().await;
        let before = guard.revision();
        let (out, after, snapshot) = tokio::task::spawn_blocking(move || {
            let out = f(&mut guard);
            let after = guard.revision();
            let snapshot = (after != before).then(|| guard.metrics());
            (out, after, snapshot)
        })
        .await
        .map_err(|e| self.error(ServiceError::Internal(format!("worker failed: {e}"))))?;
        self.revision.store(after, Ordering::SeqCst);
        if let Some(m) = snapshot {
            self.publish.send_replace(m);
        }
        out.map_err(|e| self.error(e))
    }

    fn error(&self, source: ServiceError) -> ApiError {
        ApiError {
            revision: self.revision(),
            source,
        }
    }
}

pub struct ApiError {
    revision: u64,
    source: ServiceError,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.source {
            ServiceError::UnknownQuery(_) | ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Duplicate(_)
            | ServiceError::Exhausted(_)
            | ServiceError::NotTrained
            | ServiceError::EmptyPool(_) => StatusCode::CONFLICT,
            ServiceError::KindMismatch { .. } | ServiceError::InvalidLabel(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Io { .. } | ServiceError::Core(_) | ServiceError::Internal(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        if status.is_server_error() {
            tracing::error!("{}", self.source);
        }
        let body = ErrorBody {
            revision: self.revision,
            error: self.source.code(),
            message: self.source.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    Json(Health {
        revision: state.revision(),
        status: "ok".into(),
    })
}

async fn next_query(
    State(state): State<AppState>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Json<QueryResponse>, ApiError> {
    let kind: QueryKind = params
        .get("kind")
        .ok_or_else(|| state.error(ServiceError::BadRequest("missing `kind` parameter".into())))?
        .parse()
        .map_err(|e| state.error(ServiceError::BadRequest(e)))?;
    let (revision, query) = state
        .mutate(move |s| {
            let q = s.next_query(kind)?;
            Ok((s.revision(), q))
        })
        .await?;
    Ok(Json(QueryResponse { revision, query }))
}

async fn submit_label(
    State(state): State<AppState>,
    body: Result<Json<LabelSubmission>, JsonRejection>,
) -> Result<Json<LabelAck>, ApiError> {
    let Json(sub) = body.map_err(|e| state.error(ServiceError::BadRequest(e.body_text())))?;
    let (revision, pools) = state
        .mutate(move |s| {
            let pools = s.submit(&sub.query_id, &sub.payload)?;
            Ok((s.revision(), pools))
        })
        .await?;
    Ok(Json(LabelAck { revision, pools }))
}

async fn retrain(
    State(state): State<AppState>,
    body: Result<Json<RetrainRequest>, JsonRejection>,
) -> Result<Json<RetrainResponse>, ApiError> {
    let Json(req) = body.map_err(|e| state.error(ServiceError::BadRequest(e.body_text())))?;
    let queued = state.retrains.fetch_add(1, Ordering::SeqCst) > 0;
    let result = state
        .mutate(move |s| {
            let out = s.retrain(req.task)?;
            Ok((s.revision(), out))
        })
        .await;
    state.retrains.fetch_sub(1, Ordering::SeqCst);
    let (revision, out) = result?;
    Ok(Json(RetrainResponse {
        revision,
        task: out.task,
        final_loss: out.final_loss,
        queued,
    }))
}

async fn metrics(State(state): State<AppState>) -> Json<Metrics> {
    Json(state.metrics.borrow().clone())
}

async fn trajectory(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<TrajectoryPayload>, ApiError> {
    let dir = state.dir.clone();
    let traj = tokio::task::spawn_blocking(move || trajectory_from_dir(&dir, &id))
        .await
        .map_err(|e| state.error(ServiceError::Internal(format!("worker failed: {e}"))))?
        .map_err(|e| state.error(e))?;
    Ok(Json(TrajectoryPayload {
        revision: state.revision(),
        id: traj.id().to_owned(),
        team_size: traj.team_size(),
        dt: traj.dt(),
        targets: traj.targets().to_vec(),
        steps: traj.steps().map(<[_]>::to_vec).collect(),
    }))
}

/// API routes, plus `static_dir` (the labeling console bundle) at `/` if given.
pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/query", get(next_query))
        .route("/api/label", post(submit_label))
        .route("/api/retrain", post(retrain))
        .route("/api/metrics", get(metrics))
        .route("/api/trajectory/{id}", get(trajectory))
        .with_state(state);
    let app = match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.layer(TraceLayer::new_for_http())
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    app: Router,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}
