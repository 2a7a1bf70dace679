use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Query, State};
use axum::http::header;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use serde::Deserialize;

use rankq_core::api::{
    DumpResponse, Health, ObserveBatch, ObserveRequest, RankRequest, ReportResponse, RotateRequest,
    SimulateResponse, StatusResponse,
};
use rankq_core::sim::{self, SimConfig};
use rankq_core::{codec, Error, RankEstimate, Timestamp, WindowConfig};

use crate::error::ApiFailure;
use crate::AppState;

type ApiResult<T> = Result<T, ApiFailure>;

// Record CSVs from long simulations run to tens of megabytes.
const MAX_BODY: usize = 256 * 1024 * 1024;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/config", get(config))
        .route("/v1/status", get(status))
        .route("/v1/observe", post(observe))
        .route("/v1/observe/batch", post(observe_batch))
        .route("/v1/rotate", post(rotate))
        .route("/v1/rank", post(rank))
        .route("/v1/snapshot", get(snapshot).put(restore))
        .route("/v1/simulate", post(simulate))
        .route("/v1/report", post(report))
        .route("/v1/sketch-dump", post(sketch_dump))
        .layer(DefaultBodyLimit::max(MAX_BODY))
        .with_state(state)
}

async fn health() -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
    })
}

async fn config(State(state): State<AppState>) -> Json<WindowConfig> {
    Json(state.estimator.config().clone())
}

async fn status(State(state): State<AppState>) -> Json<StatusResponse> {
    let (window_index, now) = state.estimator.status();
    Json(StatusResponse {
        window_index,
        now,
        applied: 0,
    })
}

async fn observe(
    State(state): State<AppState>,
    Json(req): Json<ObserveRequest>,
) -> ApiResult<Json<StatusResponse>> {
    let (window_index, now) = state.estimator.observe(&req.event(), req.now)?;
    Ok(Json(StatusResponse {
        window_index,
        now,
        applied: 1,
    }))
}

async fn observe_batch(
    State(state): State<AppState>,
    Json(batch): Json<ObserveBatch>,
) -> ApiResult<Json<StatusResponse>> {
    let mut last = state.estimator.status();
    for req in &batch.events {
        last = state.estimator.observe(&req.event(), req.now)?;
    }
    Ok(Json(StatusResponse {
        window_index: last.0,
        now: last.1,
        applied: batch.events.len(),
    }))
}

async fn rotate(
    State(state): State<AppState>,
    Json(req): Json<RotateRequest>,
) -> Json<StatusResponse> {
    let (window_index, now) = state.estimator.rotate(req.now);
    Json(StatusResponse {
        window_index,
        now,
        applied: 0,
    })
}

async fn rank(
    State(state): State<AppState>,
    Json(req): Json<RankRequest>,
) -> ApiResult<Json<RankEstimate>> {
    let estimate = state
        .estimator
        .estimate_rank(Timestamp(req.rho_ts), req.t_cur)?;
    Ok(Json(estimate))
}

async fn snapshot(State(state): State<AppState>) -> impl IntoResponse {
    (
        [(header::CONTENT_TYPE, "application/octet-stream")],
        state.estimator.snapshot(),
    )
}

async fn restore(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<StatusResponse>> {
    let (window_index, now) = state.estimator.restore(&body)?;
    Ok(Json(StatusResponse {
        window_index,
        now,
        applied: 0,
    }))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> rankq_core::Result<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| Error::Io(format!("worker failed: {e}")))?
        .map_err(ApiFailure)
}

async fn simulate(Json(config): Json<SimConfig>) -> ApiResult<Json<SimulateResponse>> {
    let response = blocking(move || {
        let out = sim::run_simulation(&config)?;
        let mut csv = Vec::new();
        sim::write_csv(&mut csv, &out.records)?;
        Ok(SimulateResponse {
            summary: out.summary,
            records_csv: String::from_utf8(csv).expect("csv output is utf-8"),
            snapshot_b64: base64::engine::general_purpose::STANDARD.encode(&out.snapshot),
        })
    })
    .await?;
    Ok(Json(response))
}

#[derive(Debug, Deserialize)]
struct ReportParams {
    eps_n: Option<f64>,
}

async fn report(
    Query(params): Query<ReportParams>,
    body: Bytes,
) -> ApiResult<Json<ReportResponse>> {
    let response = blocking(move || {
        let records = sim::read_csv(body.as_ref())?;
        let summary = sim::report(&records, params.eps_n)?;
        Ok(ReportResponse {
            text: summary.render(),
            summary,
        })
    })
    .await?;
    Ok(Json(response))
}

async fn sketch_dump(body: Bytes) -> ApiResult<Json<DumpResponse>> {
    let dump = codec::dump(&body)?;
    Ok(Json(DumpResponse {
        text: dump.render(),
        dump,
    }))
}
