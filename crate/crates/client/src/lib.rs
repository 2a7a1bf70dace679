//! Async client for `rankq-server`.
//!
//! ```no_run
//! # async fn demo() -> Result<(), rankq_client::ClientError> {
//! let client = rankq_client::RankqClient::new("http://127.0.0.1:7878")?;
//! client.observe("c-1", 10, 12).await?;
//! client.rotate(100).await?;
//! let est = client.rank(10, 100).await?;
//! println!("{} +/- {}", est.estimated_rank, est.error_bound);
//! # Ok(())
//! # }
//! ```

use base64::Engine;
use reqwest::{RequestBuilder, Response, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;

use rankq_core::api::{
    ApiError, DumpResponse, Health, ObserveBatch, ObserveRequest, RankRequest, ReportResponse,
    RotateRequest, SimulateResponse, StatusResponse,
};
use rankq_core::sim::SimConfig;
use rankq_core::{RankEstimate, WindowConfig};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("bad server url {0:?}")]
    Url(String),
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
    /// The server answered with an error body.
    #[error("server returned {status}: {message} ({kind})")]
    Api {
        status: u16,
        kind: String,
        message: String,
    },
    #[error("bad snapshot encoding: {0}")]
    Snapshot(#[from] base64::DecodeError),
}

impl ClientError {
    /// Error kind reported by the server, e.g. `stale_window`.
    pub fn kind(&self) -> Option<&str> {
        match self {
            ClientError::Api { kind, .. } => Some(kind),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct RankqClient {
    http: reqwest::Client,
    base: String,
}

impl RankqClient {
    pub fn new(base_url: &str) -> Result<Self> {
        Self::with_http(base_url, reqwest::Client::new())
    }

    pub fn with_http(base_url: &str, http: reqwest::Client) -> Result<Self> {
        let base = base_url.trim_end_matches('/');
        if !(base.starts_with("http://") || base.starts_with("https://")) {
            return Err(ClientError::Url(base_url.to_string()));
        }
        Ok(Self {
            http,
            base: base.to_string(),
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    async fn send(req: RequestBuilder) -> Result<Response> {
        let resp = req.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().await.unwrap_or_default();
        Err(match serde_json::from_str::<ApiError>(&text) {
            Ok(e) => ClientError::Api {
                status: status.as_u16(),
                kind: e.error,
                message: e.message,
            },
            Err(_) => ClientError::Api {
                status: status.as_u16(),
                kind: fallback_kind(status).to_string(),
                message: text,
            },
        })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        Ok(Self::send(self.http.get(self.url(path)))
            .await?
            .json()
            .await?)
    }

    async fn post<B: Serialize + ?Sized, T: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<T> {
        let req = self.http.post(self.url(path)).json(body);
        Ok(Self::send(req).await?.json().await?)
    }

    pub async fn health(&self) -> Result<Health> {
        self.get("/health").await
    }

    pub async fn config(&self) -> Result<WindowConfig> {
        self.get("/v1/config").await
    }

    pub async fn status(&self) -> Result<StatusResponse> {
        self.get("/v1/status").await
    }

    pub async fn observe(&self, client_id: &str, ts: u64, now: u64) -> Result<StatusResponse> {
        let body = ObserveRequest {
            client_id: client_id.to_string(),
            ts,
            now,
        };
        self.post("/v1/observe", &body).await
    }

    pub async fn observe_batch(&self, events: Vec<ObserveRequest>) -> Result<StatusResponse> {
        self.post("/v1/observe/batch", &ObserveBatch { events })
            .await
    }

    pub async fn rotate(&self, now: u64) -> Result<StatusResponse> {
        self.post("/v1/rotate", &RotateRequest { now }).await
    }

    pub async fn rank(&self, rho_ts: u64, t_cur: u64) -> Result<RankEstimate> {
        self.post("/v1/rank", &RankRequest { rho_ts, t_cur }).await
    }

    pub async fn snapshot(&self) -> Result<Vec<u8>> {
        let resp = Self::send(self.http.get(self.url("/v1/snapshot"))).await?;
        Ok(resp.bytes().await?.to_vec())
    }

    pub async fn restore(&self, snapshot: Vec<u8>) -> Result<StatusResponse> {
        let req = self
            .http
            .put(self.url("/v1/snapshot"))
            .header("content-type", "application/octet-stream")
            .body(snapshot);
        Ok(Self::send(req).await?.json().await?)
    }

    pub async fn simulate(&self, config: &SimConfig) -> Result<SimulateResponse> {
        self.post("/v1/simulate", config).await
    }

    /// `csv` is a record file as written by `simulate`.
    pub async fn report(&self, csv: Vec<u8>, eps_n: Option<f64>) -> Result<ReportResponse> {
        let path = match eps_n {
            Some(e) => format!("/v1/report?eps_n={e}"),
            None => "/v1/report".to_string(),
        };
        let req = self
            .http
            .post(self.url(&path))
            .header("content-type", "text/csv")
            .body(csv);
        Ok(Self::send(req).await?.json().await?)
    }

    pub async fn sketch_dump(&self, snapshot: Vec<u8>) -> Result<DumpResponse> {
        let req = self
            .http
            .post(self.url("/v1/sketch-dump"))
            .header("content-type", "application/octet-stream")
            .body(snapshot);
        Ok(Self::send(req).await?.json().await?)
    }
}

/// Raw snapshot bytes carried in a simulate response.
pub fn snapshot_bytes(resp: &SimulateResponse) -> Result<Vec<u8>> {
    Ok(base64::engine::general_purpose::STANDARD.decode(&resp.snapshot_b64)?)
}

fn fallback_kind(status: StatusCode) -> &'static str {
    if status.is_client_error() {
        "bad_request"
    } else {
        "server"
    }
}
