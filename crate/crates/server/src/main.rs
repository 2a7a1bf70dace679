use std::net::SocketAddr;

use clap::Parser;
use rankq_core::{AccuracyParams, WindowConfig};
use rankq_server::{router, AppState};
use tracing_subscriber::EnvFilter;

/// Serve a windowed rank estimator over HTTP.
#[derive(Debug, Parser)]
#[command(name = "rankq-server", version)]
struct Args {
    #[arg(long, default_value = "127.0.0.1:7878")]
    bind: SocketAddr,
    /// Window length in ticks.
    #[arg(long, default_value_t = 100)]
    delta: u64,
    /// Service rate used in the error bound.
    #[arg(long, default_value_t = 5.0)]
    rs: f64,
    #[arg(long, default_value_t = 0.3)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    delta_prob: f64,
    /// Sketches per ensemble; derived from epsilon/delta-prob when omitted.
    #[arg(long)]
    sketches: Option<usize>,
    #[arg(long, default_value_t = 64)]
    width: u32,
    /// Expected distinct clients per window.
    #[arg(long, default_value_t = 10_000)]
    n_hint: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl Args {
    fn window_config(&self) -> rankq_core::Result<WindowConfig> {
        Ok(WindowConfig {
            delta: self.delta,
            r_s: self.rs,
            accuracy: AccuracyParams::new(self.epsilon, self.delta_prob)?,
            width: self.width,
            sketches: self.sketches,
            capacity_hint: self.n_hint,
            seed: self.seed,
            ..WindowConfig::default()
        })
    }
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();

    let args = Args::parse();
    let state = AppState::new(args.window_config()?)?;
    let config = state.estimator.config();
    tracing::info!(
        delta = config.delta,
        sketches = config.sketch_count(),
        width = config.width,
        "estimator ready"
    );

    let listener = tokio::net::TcpListener::bind(args.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
