//! HTTP/JSON front end for the windowed rank estimator.
//!
//! One process owns one [`SharedEstimator`]. Writes (`observe`, `rotate`,
//! snapshot restore) serialize on the estimator's writer lock; rank queries
//! read the published completed window and never block on writers. The
//! offline tools (`simulate`, `report`, `sketch-dump`) are stateless and run on
//! the blocking pool.

mod error;
mod routes;

use std::net::SocketAddr;
use std::sync::Arc;

use rankq_core::{SharedEstimator, WindowConfig};
use tokio::net::TcpListener;

pub use error::ApiFailure;
pub use routes::router;

#[derive(Clone)]
pub struct AppState {
    pub estimator: Arc<SharedEstimator>,
}

impl AppState {
    pub fn new(config: WindowConfig) -> rankq_core::Result<Self> {
        Ok(Self {
            estimator: Arc::new(SharedEstimator::new(config)?),
        })
    }
}

/// Binds `addr` and serves until the returned handle is dropped or aborted.
/// Port 0 picks a free port; the bound address is returned.
pub async fn spawn(
    addr: SocketAddr,
    state: AppState,
) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<std::io::Result<()>>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let app = router(state);
    let handle = tokio::spawn(async move { axum::serve(listener, app).await });
    Ok((local, handle))
}
