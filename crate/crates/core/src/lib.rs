//! Streaming sketches for "how many distinct clients hold a token stamped at or
//! before `x`?" queries, and a windowed rank estimator for virtual waiting queues.
//!
//! The building blocks, bottom-up:
//!
//! - [`hashing`] maps a client identity to a sketch position with geometric law.
//! - [`fm`] is the classical Flajolet-Martin bit-vector counter and its ensemble.
//! - [`rank`] stores the minimum timestamp per position so that any threshold
//!   query can be turned back into an FM sketch.
//! - [`window`] keeps two Δ-aligned rank ensembles and answers rank upper bounds.
//! - [`oracle`] holds exact per-client ground truth for tests and simulation.
//! - [`codec`] is the little-endian binary snapshot format shared by all sketches.
//! - [`api`] holds the JSON request and response bodies of the HTTP service.
//! - [`sim`] drives a workload through the estimator and the oracle side by side.

pub mod api;
pub mod codec;
pub mod error;
pub mod fm;
pub mod hashing;
pub mod oracle;
pub mod rank;
pub mod sim;
pub mod window;

pub use error::{Error, Result};
pub use fm::{AccuracyParams, Averaging, FmEnsemble, FmSketch};
pub use hashing::{position_of, HashSeed, Position};
pub use rank::{RainCheckEvent, RankEnsemble, RankSketchRow, Timestamp};
pub use window::{RankEstimate, SharedEstimator, WindowConfig, WindowState};

/// Default sketch width: one 64-bit word per FM row.
pub const DEFAULT_WIDTH: u32 = 64;

/// Largest supported width. Positions come from the trailing-zero count of a
/// 64-bit hash, so wider rows could never be reached.
pub const MAX_WIDTH: u32 = 64;
