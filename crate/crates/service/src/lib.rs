//! Stateless HTTP API over the assure-dx engines.
//!
//! Every successful response is an envelope `{inputs_echo, result,
//! engine_version, compute_ms}`. Schema violations and compute-guard
//! breaches return 400, infeasible analyses and exhausted searches 422.

pub mod error;
pub mod settings;

use std::convert::Infallible;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use assure_dx_core::config::{parse_json, CompareMode, RunConfig, DEFAULT_NT_MAX};
use assure_dx_core::par::{Execution, Monitor};
use assure_dx_core::run::{self, CompareResult, CurveRequest, Envelope, ENGINE_VERSION};
use assure_dx_core::schema::Health;
use axum::body::{Body, Bytes};
use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::mpsc;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::error::ApiError;
use crate::settings::Settings;

/// Largest assurance curve a request may ask for.
pub const MAX_NT_MAX: u64 = 5_000;
/// Largest sample-size search cap.
pub const MAX_CAP: u64 = 100_000;
/// Largest simulation replicate count per candidate size.
pub const MAX_SIM_REPS: u64 = 100_000;
/// Largest number of width-study cycles.
pub const MAX_WIDTH_REPS: u64 = 1_000;
/// Largest number of contour angles.
pub const MAX_ANGLES: usize = 1_024;
/// Largest number of grid scenarios.
pub const MAX_GRID_POINTS: usize = 400;

/// Shared, read-only request context: the engine thread pool and limits.
#[derive(Clone)]
pub struct AppState {
    pool: Arc<rayon::ThreadPool>,
    compare_timeout: Duration,
}

impl AppState {
    pub fn new(workers: usize, compare_timeout: Duration) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .thread_name(|i| format!("assure-dx-engine-{i}"))
            .build()
            .expect("engine pool starts");
        AppState {
            pool: Arc::new(pool),
            compare_timeout,
        }
    }

    /// Runs `f` on the engine pool and wraps its result in an envelope.
    async fn compute<T, F>(&self, inputs_echo: Value, f: F) -> Result<Response, ApiError>
    where
        T: Serialize + Send + 'static,
        F: FnOnce(Execution) -> assure_dx_core::error::Result<T> + Send + 'static,
    {
        let pool = self.pool.clone();
        let (result, ms) = tokio::task::spawn_blocking(move || {
            let start = Instant::now();
            let r = pool.install(|| f(Execution::default()));
            (r, start.elapsed().as_secs_f64() * 1e3)
        })
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?;
        Ok(Json(envelope(inputs_echo, result?, ms)).into_response())
    }
}

fn envelope<T>(inputs_echo: Value, result: T, compute_ms: f64) -> Envelope<T> {
    Envelope {
        inputs_echo,
        result,
        engine_version: ENGINE_VERSION.to_string(),
        compute_ms,
    }
}

pub fn app(settings: &Settings) -> Router {
    let state = AppState::new(settings.workers, settings.compare_timeout);
    let origin = match &settings.cors_origin {
        Some(o) => match HeaderValue::from_str(o) {
            Ok(v) => AllowOrigin::exact(v),
            Err(_) => AllowOrigin::any(),
        },
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST, Method::OPTIONS])
        .allow_headers(Any);
    router(state).layer(cors)
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/v1/health", get(health))
        .route("/api/v1/assurance-curve", post(assurance_curve))
        .route("/api/v1/sample-size", post(sample_size))
        .route("/api/v1/prior-sensitivity", post(prior_sensitivity))
        .route("/api/v1/conflict-check", post(conflict_check))
        .route("/api/v1/compare", post(compare))
        .with_state(state)
}

async fn health() -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        engine_version: ENGINE_VERSION.into(),
    })
}

fn body_text(body: &Bytes) -> Result<&str, ApiError> {
    std::str::from_utf8(body).map_err(|e| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid_request",
            format!("body is not UTF-8: {e}"),
        )
    })
}

fn parse_config(body: &Bytes) -> Result<RunConfig, ApiError> {
    let cfg: RunConfig = parse_json(body_text(body)?)?;
    guard(&cfg)?;
    Ok(cfg)
}

/// Compute guards: request sizes whose cost would starve other clients.
fn guard(cfg: &RunConfig) -> Result<(), ApiError> {
    let s = &cfg.study;
    if let Some(n) = s.nt_max {
        if n > MAX_NT_MAX {
            return Err(ApiError::limit(
                "study.nt_max",
                format!("nT_max {n} exceeds {MAX_NT_MAX}"),
            ));
        }
    }
    if s.cap > MAX_CAP {
        return Err(ApiError::limit(
            "study.cap",
            format!("cap {} exceeds {MAX_CAP}", s.cap),
        ));
    }
    if s.sensitivity.n_angles > MAX_ANGLES {
        return Err(ApiError::limit(
            "study.sensitivity.n_angles",
            format!("{} angles exceed {MAX_ANGLES}", s.sensitivity.n_angles),
        ));
    }
    let grid = &s.compare.grid;
    if grid.reps > MAX_SIM_REPS {
        return Err(ApiError::limit(
            "study.compare.grid.reps",
            format!("reps exceed {MAX_SIM_REPS}"),
        ));
    }
    if grid.cap > MAX_CAP {
        return Err(ApiError::limit(
            "study.compare.grid.cap",
            format!("cap exceeds {MAX_CAP}"),
        ));
    }
    if grid.sens.len() * grid.prev.len() > MAX_GRID_POINTS {
        return Err(ApiError::limit(
            "study.compare.grid",
            format!("more than {MAX_GRID_POINTS} scenarios"),
        ));
    }
    let width = &s.compare.width;
    if width.reps > MAX_WIDTH_REPS {
        return Err(ApiError::limit(
            "study.compare.width.reps",
            format!("reps exceed {MAX_WIDTH_REPS}"),
        ));
    }
    if width.sim_reps > MAX_SIM_REPS {
        return Err(ApiError::limit(
            "study.compare.width.sim_reps",
            format!("sim_reps exceed {MAX_SIM_REPS}"),
        ));
    }
    if width.cap > MAX_CAP {
        return Err(ApiError::limit(
            "study.compare.width.cap",
            format!("cap exceeds {MAX_CAP}"),
        ));
    }
    Ok(())
}

async fn assurance_curve(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: CurveRequest = parse_json(body_text(&body)?)?;
    if let Some(n) = req.nt_max.filter(|&n| n > MAX_NT_MAX) {
        return Err(ApiError::limit(
            "nT_max",
            format!("nT_max {n} exceeds {MAX_NT_MAX}"),
        ));
    }
    let echo = serde_json::to_value(&req).map_err(|e| ApiError::internal(e.to_string()))?;
    let mut cfg = RunConfig::from(req);
    cfg.study.nt_max = Some(cfg.study.nt_max.unwrap_or(DEFAULT_NT_MAX));
    if cfg.study.nt_max == Some(0) {
        let mut e = ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid_request",
            "nT_max must be at least 1",
        );
        e.body.field = Some("nT_max".into());
        return Err(e);
    }
    guard(&cfg)?;
    state
        .compute(echo, move |exec| run::run_curve(&cfg, exec))
        .await
}

async fn sample_size(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let cfg = parse_config(&body)?;
    state
        .compute(cfg.to_value(), move |exec| run::run_sample_size(&cfg, exec))
        .await
}

async fn prior_sensitivity(
    State(state): State<AppState>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let cfg = parse_config(&body)?;
    state
        .compute(cfg.to_value(), move |exec| run::run_sensitivity(&cfg, exec))
        .await
}

async fn conflict_check(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let cfg = parse_config(&body)?;
    state
        .compute(cfg.to_value(), move |_| run::run_conflict(&cfg))
        .await
}

#[derive(Debug, Deserialize)]
pub struct CompareParams {
    /// Stream progress as NDJSON; on by default.
    pub stream: Option<bool>,
}

/// One line of a streamed comparison.
#[derive(Debug, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum StreamEvent {
    Progress { done: usize, total: usize },
    Result { response: Envelope<CompareResult> },
    Error { status: u16, body: error::ErrorBody },
}

fn ndjson(event: &StreamEvent) -> Bytes {
    let mut line = serde_json::to_vec(event).expect("event serializes");
    line.push(b'\n');
    Bytes::from(line)
}

async fn compare(
    State(state): State<AppState>,
    Query(params): Query<CompareParams>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let cfg = parse_config(&body)?;
    match cfg.study.compare.mode {
        CompareMode::Grid => cfg.grid_spec().validate()?,
        CompareMode::Width => cfg.width_spec().validate()?,
    }
    let echo = cfg.to_value();
    let cancel = Arc::new(AtomicBool::new(false));
    let (tx, rx) = mpsc::unbounded_channel::<StreamEvent>();
    let streaming = params.stream.unwrap_or(true);

    let pool = state.pool.clone();
    let flag = cancel.clone();
    let progress_tx = tx.clone();
    let worker = tokio::task::spawn_blocking(move || {
        let start = Instant::now();
        let progress = |done: usize, total: usize| {
            if streaming
                && progress_tx
                    .send(StreamEvent::Progress { done, total })
                    .is_err()
            {
                flag.store(true, Ordering::Relaxed);
            }
        };
        let monitor = Monitor::new(Some(&progress), Some(&flag));
        let result = pool.install(|| run::run_compare(&cfg, Execution::default(), monitor));
        (result, start.elapsed().as_secs_f64() * 1e3)
    });

    let timeout = state.compare_timeout;
    let finish = async move {
        let timer_flag = cancel.clone();
        let timer = tokio::spawn(async move {
            tokio::time::sleep(timeout).await;
            timer_flag.store(true, Ordering::Relaxed);
        });
        let outcome = worker.await;
        timer.abort();
        match outcome {
            Ok((Ok(result), ms)) => Ok(envelope(echo, result, ms)),
            Ok((Err(e), _)) => Err(ApiError::from(e)),
            Err(e) => Err(ApiError::internal(e.to_string())),
        }
    };

    if !streaming {
        drop(tx);
        return Ok(Json(finish.await?).into_response());
    }

    tokio::spawn(async move {
        let event = match finish.await {
            Ok(response) => StreamEvent::Result { response },
            Err(e) => StreamEvent::Error {
                status: e.status.as_u16(),
                body: e.body,
            },
        };
        let _ = tx.send(event);
    });
    let stream = futures_util::stream::unfold(rx, |mut rx| async move {
        rx.recv()
            .await
            .map(|event| (Ok::<_, Infallible>(ndjson(&event)), rx))
    });
    Ok((
        [(header::CONTENT_TYPE, "application/x-ndjson")],
        Body::from_stream(stream),
    )
        .into_response())
}
