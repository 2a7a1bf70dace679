//! Δ-aligned double-buffered rank estimator.
//!
//! Time is cut into half-open windows `[iΔ, (i+1)Δ)`. While the clock is in
//! window `i`, events fill `current` and queries read `completed`, the frozen
//! sketch of window `i - 1`. A client whose smallest valid token is stamped
//! `rho` is then estimated to have at most `count_at_most(completed, rho)`
//! clients ahead of it (itself included), with error envelope
//! `εN + (t_cur - (i-1)Δ)·R_s <= εN + 2Δ·R_s`.
//!
//! No per-client state is kept: the estimator holds `2·K·W` timestamp cells.

use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::codec::{self, Snapshot};
use crate::fm::{AccuracyParams, Averaging};
use crate::rank::{RainCheckEvent, RankEnsemble, Timestamp};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    /// Window length Δ in ticks.
    pub delta: u64,
    /// Raincheck rate bound R_s, per tick.
    pub r_s: f64,
    pub accuracy: AccuracyParams,
    pub width: u32,
    /// Explicit row count; derived from `accuracy` when absent.
    #[serde(default)]
    pub sketches: Option<usize>,
    /// Scale N used to report the εN part of the bound. Not observable from
    /// the sketch itself, so it must be configured.
    pub capacity_hint: u64,
    /// Base seed for the row hash seeds.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub averaging: Averaging,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            delta: 100,
            r_s: 5.0,
            accuracy: AccuracyParams {
                epsilon: 0.3,
                delta: 0.1,
                constant_c: 1.0,
            },
            width: crate::DEFAULT_WIDTH,
            sketches: Some(64),
            capacity_hint: 10_000,
            seed: 0,
            averaging: Averaging::MeanIndex,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.delta == 0 {
            return Err(Error::Config("delta must be >= 1".into()));
        }
        if !(self.r_s > 0.0 && self.r_s.is_finite()) {
            return Err(Error::Config("r_s must be positive".into()));
        }
        self.accuracy
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        crate::hashing::check_width(self.width).map_err(|e| Error::Config(e.to_string()))?;
        if self.sketches == Some(0) {
            return Err(Error::Config("sketches must be >= 1".into()));
        }
        Ok(())
    }

    pub fn sketch_count(&self) -> usize {
        self.sketches
            .unwrap_or_else(|| self.accuracy.required_sketch_count())
    }

    pub fn window_of(&self, t: u64) -> u64 {
        t / self.delta
    }

    /// Largest value the error bound can approach within one window.
    pub fn max_error_bound(&self) -> f64 {
        self.epsilon_n() + 2.0 * self.delta as f64 * self.r_s
    }

    pub fn epsilon_n(&self) -> f64 {
        self.accuracy.epsilon * self.capacity_hint as f64
    }
}

/// `εN + (t_cur - (i-1)Δ)·R_s`. Requires `(i-1)Δ <= t_cur`.
pub fn window_error_bound(config: &WindowConfig, t_cur: u64, window_index: u64) -> f64 {
    let start_prev = (window_index as i128 - 1) * config.delta as i128;
    let elapsed = t_cur as i128 - start_prev;
    debug_assert!(elapsed >= 0, "t_cur precedes the completed window");
    config.epsilon_n() + elapsed.max(0) as f64 * config.r_s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEstimate {
    pub estimated_rank: f64,
    pub error_bound: f64,
    pub window_index: u64,
    pub queried_ts: Timestamp,
}

fn estimate_against(
    config: &WindowConfig,
    completed: &RankEnsemble,
    window_index: u64,
    rho_ts: Timestamp,
    t_cur: u64,
) -> Result<RankEstimate> {
    if config.window_of(t_cur) != window_index {
        return Err(Error::StaleWindow {
            t_cur,
            window_index,
            delta: config.delta,
        });
    }
    Ok(RankEstimate {
        estimated_rank: completed.count_at_most_with(rho_ts, config.averaging),
        error_bound: window_error_bound(config, t_cur, window_index),
        window_index,
        queried_ts: rho_ts,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowState {
    config: WindowConfig,
    current: RankEnsemble,
    completed: Arc<RankEnsemble>,
    window_index: u64,
    now: u64,
}

impl WindowState {
    pub fn new(config: WindowConfig) -> Result<Self> {
        config.validate()?;
        let current =
            RankEnsemble::with_seed_base(config.seed, config.sketch_count(), config.width)?;
        Ok(Self {
            completed: Arc::new(current.fresh()),
            current,
            config,
            window_index: 0,
            now: 0,
        })
    }

    pub fn config(&self) -> &WindowConfig {
        &self.config
    }

    pub fn current(&self) -> &RankEnsemble {
        &self.current
    }

    pub fn completed(&self) -> &RankEnsemble {
        &self.completed
    }

    pub fn window_index(&self) -> u64 {
        self.window_index
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    /// Advances the clock, rotating across every window boundary crossed.
    /// When more than one boundary is crossed, `completed` is empty. An earlier
    /// `now` leaves the state untouched.
    pub fn rotate(&mut self, now: u64) {
        let target = self.config.window_of(now);
        if target > self.window_index {
            let fresh = self.current.fresh();
            let finished = std::mem::replace(&mut self.current, fresh);
            self.completed = if target == self.window_index + 1 {
                Arc::new(finished)
            } else {
                Arc::new(self.current.fresh())
            };
            self.window_index = target;
        }
        self.now = self.now.max(now);
    }

    pub fn observe(&mut self, event: &RainCheckEvent, now: u64) -> Result<()> {
        if now < self.now {
            return Err(Error::TimeRegression {
                now: self.now,
                requested: now,
            });
        }
        event.validate()?;
        if event.ts.0 > now {
            return Err(Error::invalid(format!(
                "event stamped {} is ahead of the clock {now}",
                event.ts
            )));
        }
        self.rotate(now);
        self.current.insert(event)
    }

    pub fn estimate_rank(&self, rho_ts: Timestamp, t_cur: u64) -> Result<RankEstimate> {
        estimate_against(
            &self.config,
            &self.completed,
            self.window_index,
            rho_ts,
            t_cur,
        )
    }

    pub fn snapshot(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::snapshot_len(self.current.len(), self.config.width));
        codec::write_window(
            &mut out,
            self.window_index,
            self.now,
            &self.current,
            &self.completed,
        );
        out
    }

    /// Serialized size: header, two scalars, and `2·K` seeds plus `2·K·W` cells.
    pub fn snapshot_len(k: usize, width: u32) -> usize {
        codec::HEADER_LEN + 16 + 2 * codec::rank_body_len(k, width)
    }

    /// Restores a snapshot taken under `config`. Shape and seeds must match.
    pub fn from_snapshot(bytes: &[u8], config: WindowConfig) -> Result<Self> {
        let fresh = Self::new(config)?;
        match codec::decode(bytes)? {
            Snapshot::Window {
                window_index,
                now,
                current,
                completed,
            } => {
                let seeds = fresh.current.seeds();
                if current.width() != fresh.config.width
                    || current.seeds() != seeds
                    || completed.seeds() != seeds
                {
                    return Err(Error::IncompatibleSketch(
                        "snapshot shape or seeds differ from the configuration".into(),
                    ));
                }
                if fresh.config.window_of(now) != window_index {
                    return Err(Error::Codec(format!(
                        "clock {now} is outside window {window_index}"
                    )));
                }
                Ok(Self {
                    config: fresh.config,
                    current,
                    completed: Arc::new(completed),
                    window_index,
                    now,
                })
            }
            _ => Err(Error::Codec("expected a window snapshot".into())),
        }
    }
}

/// The frozen half of a [`WindowState`], as seen by readers.
#[derive(Debug, Clone)]
pub struct PublishedWindow {
    pub completed: Arc<RankEnsemble>,
    pub window_index: u64,
}

/// Single-writer, many-reader wrapper around [`WindowState`].
///
/// Writers serialize on a mutex. Readers never take it: they grab the current
/// `(completed, window_index)` pair, which is replaced as one pointer at every
/// rotation, so a reader sees either the old pair or the new one.
#[derive(Debug)]
pub struct SharedEstimator {
    config: WindowConfig,
    writer: Mutex<WindowState>,
    published: RwLock<Arc<PublishedWindow>>,
}

impl SharedEstimator {
    pub fn new(config: WindowConfig) -> Result<Self> {
        Ok(Self::from_state(WindowState::new(config)?))
    }

    pub fn from_state(state: WindowState) -> Self {
        let published = RwLock::new(Arc::new(PublishedWindow {
            completed: state.completed.clone(),
            window_index: state.window_index,
        }));
        Self {
            config: state.config.clone(),
            writer: Mutex::new(state),
            published,
        }
    }

    pub fn config(&self) -> &WindowConfig {
        &self.config
    }

    fn with_writer<T>(&self, f: impl FnOnce(&mut WindowState) -> Result<T>) -> Result<T> {
        let mut state = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let before = state.window_index;
        let out = f(&mut state);
        if state.window_index != before {
            let next = Arc::new(PublishedWindow {
                completed: state.completed.clone(),
                window_index: state.window_index,
            });
            *self.published.write().unwrap_or_else(|e| e.into_inner()) = next;
        }
        out
    }

    /// Returns `(window_index, now)` after the event is applied.
    pub fn observe(&self, event: &RainCheckEvent, now: u64) -> Result<(u64, u64)> {
        self.with_writer(|s| {
            s.observe(event, now)?;
            Ok((s.window_index, s.now))
        })
    }

    pub fn rotate(&self, now: u64) -> (u64, u64) {
        self.with_writer(|s| {
            s.rotate(now);
            Ok((s.window_index, s.now))
        })
        .expect("rotate is infallible")
    }

    pub fn published(&self) -> Arc<PublishedWindow> {
        self.published
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
    }

    pub fn estimate_rank(&self, rho_ts: Timestamp, t_cur: u64) -> Result<RankEstimate> {
        let view = self.published();
        estimate_against(
            &self.config,
            &view.completed,
            view.window_index,
            rho_ts,
            t_cur,
        )
    }

    pub fn status(&self) -> (u64, u64) {
        let s = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        (s.window_index, s.now)
    }

    pub fn snapshot(&self) -> Vec<u8> {
        self.writer
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .snapshot()
    }

    pub fn restore(&self, bytes: &[u8]) -> Result<(u64, u64)> {
        let restored = WindowState::from_snapshot(bytes, self.config.clone())?;
        let mut s = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        *s = restored;
        *self.published.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(PublishedWindow {
            completed: s.completed.clone(),
            window_index: s.window_index,
        });
        Ok((s.window_index, s.now))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(delta: u64) -> WindowConfig {
        WindowConfig {
            delta,
            sketches: Some(8),
            ..WindowConfig::default()
        }
    }

    #[test]
    fn first_event_lands_in_window_zero() {
        let mut s = WindowState::new(config(100)).unwrap();
        s.observe(&RainCheckEvent::new("a", 0), 0).unwrap();
        assert_eq!(s.window_index(), 0);
        assert!(!s.current().is_empty());
        assert!(s.completed().is_empty());
    }

    #[test]
    fn half_open_boundary() {
        let mut s = WindowState::new(config(100)).unwrap();
        s.observe(&RainCheckEvent::new("a", 99), 99).unwrap();
        let window0 = s.current().clone();
        s.observe(&RainCheckEvent::new("b", 100), 100).unwrap();
        assert_eq!(s.window_index(), 1);
        assert_eq!(s.completed(), &window0);
        let mut only_b = window0.fresh();
        only_b.insert(&RainCheckEvent::new("b", 100)).unwrap();
        assert_eq!(s.current(), &only_b);
    }

    #[test]
    fn rotate_cases() {
        let mut s = WindowState::new(config(100)).unwrap();
        s.observe(&RainCheckEvent::new("a", 10), 10).unwrap();
        let before = s.clone();
        s.rotate(50);
        assert_eq!(s.current(), before.current());
        assert_eq!(s.window_index(), 0);

        s.rotate(300);
        assert_eq!(s.window_index(), 3);
        assert!(s.completed().is_empty());
        assert!(s.current().is_empty());
        assert_eq!(s.current().seeds(), before.current().seeds());

        // earlier clock: no-op
        s.rotate(5);
        assert_eq!(s.now(), 300);
        assert_eq!(s.window_index(), 3);
    }

    #[test]
    fn observe_errors() {
        let mut s = WindowState::new(config(100)).unwrap();
        s.observe(&RainCheckEvent::new("a", 10), 50).unwrap();
        assert!(matches!(
            s.observe(&RainCheckEvent::new("a", 10), 49),
            Err(Error::TimeRegression {
                now: 50,
                requested: 49
            })
        ));
        assert!(s.observe(&RainCheckEvent::new("a", 60), 55).is_err());
        assert!(s.observe(&RainCheckEvent::new("", 10), 55).is_err());
        // failed calls do not move the clock
        assert_eq!(s.now(), 50);
    }

    #[test]
    fn estimate_on_empty_completed_window() {
        let mut s = WindowState::new(config(100)).unwrap();
        s.rotate(250);
        let est = s.estimate_rank(Timestamp(120), 250).unwrap();
        assert_eq!(est.estimated_rank, 0.0);
        let cfg = s.config();
        assert_eq!(est.error_bound, cfg.epsilon_n() + 150.0 * cfg.r_s);
        assert_eq!(est.window_index, 2);
    }

    #[test]
    fn estimate_at_window_start_has_minimum_bound() {
        let mut s = WindowState::new(config(100)).unwrap();
        s.rotate(400);
        let est = s.estimate_rank(Timestamp(350), 400).unwrap();
        let cfg = s.config();
        assert_eq!(est.error_bound, cfg.epsilon_n() + 100.0 * cfg.r_s);
    }

    #[test]
    fn stale_window_rejected() {
        let mut s = WindowState::new(config(100)).unwrap();
        s.rotate(150);
        assert!(matches!(
            s.estimate_rank(Timestamp(10), 200),
            Err(Error::StaleWindow { .. })
        ));
        assert!(s.estimate_rank(Timestamp(10), 99).is_err());
    }

    #[test]
    fn error_bound_arithmetic() {
        let cfg = WindowConfig {
            delta: 50,
            r_s: 2.0,
            accuracy: AccuracyParams::new(0.1, 0.1).unwrap(),
            capacity_hint: 1000,
            ..WindowConfig::default()
        };
        let i = 4;
        assert!((window_error_bound(&cfg, i * 50 + 25, i) - 250.0).abs() < 1e-9);

        let zero_eps = WindowConfig {
            capacity_hint: 0,
            ..cfg.clone()
        };
        assert_eq!(window_error_bound(&zero_eps, (i - 1) * 50, i), 0.0);

        let sup = (i * 50..(i + 1) * 50)
            .map(|t| window_error_bound(&cfg, t, i))
            .fold(f64::MIN, f64::max);
        assert!(sup < cfg.max_error_bound());
        assert!((cfg.max_error_bound() - sup - cfg.r_s).abs() < 1e-9);
    }

    #[test]
    fn queries_do_not_mutate() {
        let mut s = WindowState::new(config(10)).unwrap();
        for t in 0..25 {
            s.observe(&RainCheckEvent::new(format!("c{t}"), t), t)
                .unwrap();
        }
        let before = s.snapshot();
        for rho in 0..25 {
            let _ = s.estimate_rank(Timestamp(rho), 24);
        }
        assert_eq!(before, s.snapshot());
    }

    #[test]
    fn snapshot_roundtrip_and_length() {
        let cfg = config(10);
        let mut s = WindowState::new(cfg.clone()).unwrap();
        for t in 0..35 {
            s.observe(&RainCheckEvent::new(format!("c{t}"), t), t)
                .unwrap();
        }
        let bytes = s.snapshot();
        assert_eq!(bytes.len(), WindowState::snapshot_len(8, 64));
        assert_eq!(WindowState::from_snapshot(&bytes, cfg.clone()).unwrap(), s);
        let other_seed = WindowConfig { seed: 1, ..cfg };
        assert!(WindowState::from_snapshot(&bytes, other_seed).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(WindowState::new(WindowConfig {
            delta: 0,
            ..config(1)
        })
        .is_err());
        assert!(WindowState::new(WindowConfig {
            r_s: 0.0,
            ..config(1)
        })
        .is_err());
        assert!(WindowState::new(WindowConfig {
            sketches: Some(0),
            ..config(1)
        })
        .is_err());
        let derived = WindowConfig {
            sketches: None,
            ..config(1)
        };
        assert_eq!(derived.sketch_count(), 34);
    }

    #[test]
    fn shared_estimator_publishes_on_rotation() {
        let shared = SharedEstimator::new(config(10)).unwrap();
        shared.observe(&RainCheckEvent::new("a", 3), 3).unwrap();
        assert_eq!(shared.published().window_index, 0);
        assert_eq!(
            shared
                .estimate_rank(Timestamp(3), 5)
                .unwrap()
                .estimated_rank,
            0.0
        );
        shared.rotate(12);
        let view = shared.published();
        assert_eq!(view.window_index, 1);
        assert!(
            shared
                .estimate_rank(Timestamp(3), 12)
                .unwrap()
                .estimated_rank
                > 0.0
        );
        let snap = shared.snapshot();
        let other = SharedEstimator::new(config(10)).unwrap();
        assert_eq!(other.restore(&snap).unwrap(), (1, 12));
        assert_eq!(other.published().completed, view.completed);
    }

    #[test]
    fn readers_see_consistent_pairs() {
        let shared = Arc::new(SharedEstimator::new(config(5)).unwrap());
        let writer = {
            let shared = shared.clone();
            std::thread::spawn(move || {
                for t in 0..2_000u64 {
                    shared
                        .observe(&RainCheckEvent::new(format!("c{}", t % 97), t), t)
                        .unwrap();
                }
            })
        };
        let readers: Vec<_> = (0..4)
            .map(|_| {
                let shared = shared.clone();
                std::thread::spawn(move || {
                    for _ in 0..2_000 {
                        let view = shared.published();
                        // completed holds window i-1, so no stored value reaches iΔ.
                        let limit = view.window_index * 5;
                        for row in view.completed.rows() {
                            assert!(row.slots().iter().all(|s| s.is_empty() || s.0 < limit));
                        }
                    }
                })
            })
            .collect();
        writer.join().unwrap();
        for r in readers {
            r.join().unwrap();
        }
    }
}
