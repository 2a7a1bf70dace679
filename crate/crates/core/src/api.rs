//! JSON bodies exchanged with the rank service.
//!
//! | method | path               | request              | response            |
//! |--------|--------------------|----------------------|---------------------|
//! | GET    | `/health`          |                      | [`Health`]          |
//! | GET    | `/v1/config`       |                      | `WindowConfig`      |
//! | GET    | `/v1/status`       |                      | [`StatusResponse`]  |
//! | POST   | `/v1/observe`      | [`ObserveRequest`]   | [`StatusResponse`]  |
//! | POST   | `/v1/observe/batch`| [`ObserveBatch`]     | [`StatusResponse`]  |
//! | POST   | `/v1/rotate`       | [`RotateRequest`]    | [`StatusResponse`]  |
//! | POST   | `/v1/rank`         | [`RankRequest`]      | `RankEstimate`      |
//! | GET    | `/v1/snapshot`     |                      | binary snapshot     |
//! | PUT    | `/v1/snapshot`     | binary snapshot      | [`StatusResponse`]  |
//! | POST   | `/v1/simulate`     | `SimConfig`          | [`SimulateResponse`]|
//! | POST   | `/v1/report`       | CSV, `?eps_n=`       | [`ReportResponse`]  |
//! | POST   | `/v1/sketch-dump`  | binary snapshot      | [`DumpResponse`]    |
//!
//! Errors come back as [`ApiError`] with a 4xx/5xx status.

use serde::{Deserialize, Serialize};

use crate::codec::SketchDump;
use crate::rank::RainCheckEvent;
use crate::sim::{ReportSummary, SimSummary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserveRequest {
    pub client_id: String,
    pub ts: u64,
    pub now: u64,
}

impl ObserveRequest {
    pub fn event(&self) -> RainCheckEvent {
        RainCheckEvent::new(self.client_id.as_bytes(), self.ts)
    }
}

/// Events applied in order; stops at the first failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserveBatch {
    pub events: Vec<ObserveRequest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotateRequest {
    pub now: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRequest {
    pub rho_ts: u64,
    pub t_cur: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusResponse {
    pub window_index: u64,
    pub now: u64,
    #[serde(default)]
    pub applied: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateResponse {
    pub summary: SimSummary,
    /// Records in the fixed CSV schema, header row included.
    pub records_csv: String,
    /// Final estimator snapshot, base64 (standard alphabet, padded).
    pub snapshot_b64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportResponse {
    pub summary: ReportSummary,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpResponse {
    pub dump: SketchDump,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    /// Stable machine-readable kind, e.g. `stale_window`.
    pub error: String,
    pub message: String,
}
