//! Workload simulator: a virtual waiting room fed through the windowed
//! estimator and the exact oracle side by side.
//!
//! Each tick runs, in order:
//! 1. arrivals (Poisson) join the queue and get a raincheck stamped now;
//! 2. waiting clients whose renewal timer fires get a fresh raincheck that
//!    carries their original timestamp;
//! 3. a random fraction of waiting clients ask for their rank;
//! 4. once the service opens, up to `service_rate` clients leave from the head.
//!
//! Every raincheck feeds both sides, so each query yields the true rank, the
//! exact windowed count and the sketch estimate for the same instant.

mod config;
mod report;

use std::collections::VecDeque;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

pub use config::{parse_config_text, ConfigFile};
pub use report::{
    percentile, read_csv, report, write_csv, Percentiles, QueryRecord, ReportSummary,
    CSV_SCHEMA_VERSION,
};

use crate::fm::{AccuracyParams, Averaging};
use crate::oracle::{ExactQueue, ExactWindows};
use crate::rank::{RainCheckEvent, Timestamp};
use crate::window::{WindowConfig, WindowState};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub ticks: u64,
    /// Mean new clients per tick.
    pub arrival_rate: f64,
    /// Ticks between a waiting client's renewals.
    pub renewal_interval: u64,
    /// Clients served per tick once the service opens. Must not exceed `r_s`.
    pub service_rate: f64,
    /// Tick at which the service opens; clients queue up until then.
    pub service_start: u64,
    /// Probability that a waiting client asks for its rank on a given tick.
    pub query_fraction: f64,
    /// Permit `renewal_interval >= delta`, where waiting clients can skip a
    /// whole window and drop out of the completed sketch.
    pub allow_stale_renewal: bool,
    pub delta: u64,
    pub r_s: f64,
    pub epsilon: f64,
    pub delta_prob: f64,
    /// Explicit sketch count; derived from `epsilon`/`delta_prob` when absent.
    pub sketches: Option<usize>,
    pub width: u32,
    /// N in εN for the per-query error bound.
    pub n_hint: u64,
    pub seed: u64,
    pub averaging: Averaging,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            ticks: 20_000,
            arrival_rate: 3.0,
            renewal_interval: 50,
            service_rate: 5.0,
            service_start: 2_000,
            query_fraction: 0.002,
            allow_stale_renewal: false,
            delta: 100,
            r_s: 5.0,
            epsilon: 0.3,
            delta_prob: 0.1,
            sketches: Some(64),
            width: crate::DEFAULT_WIDTH,
            n_hint: 10_000,
            seed: 1,
            averaging: Averaging::MeanIndex,
        }
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{name} must be a finite non-negative number"
        )))
    }
}

impl SimConfig {
    pub fn window_config(&self) -> WindowConfig {
        WindowConfig {
            delta: self.delta,
            r_s: self.r_s,
            accuracy: AccuracyParams {
                epsilon: self.epsilon,
                delta: self.delta_prob,
                constant_c: 1.0,
            },
            width: self.width,
            sketches: self.sketches,
            capacity_hint: self.n_hint,
            seed: self.seed,
            averaging: self.averaging,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.window_config().validate()?;
        non_negative("arrival_rate", self.arrival_rate)?;
        non_negative("service_rate", self.service_rate)?;
        if self.service_rate > self.r_s {
            return Err(Error::Config(format!(
                "service_rate {} exceeds r_s {}",
                self.service_rate, self.r_s
            )));
        }
        if !(0.0..=1.0).contains(&self.query_fraction) {
            return Err(Error::Config("query_fraction must lie in [0, 1]".into()));
        }
        if self.renewal_interval == 0 {
            return Err(Error::Config("renewal_interval must be >= 1".into()));
        }
        if self.renewal_interval >= self.delta && !self.allow_stale_renewal {
            return Err(Error::Config(format!(
                "renewal_interval {} must be below delta {} (set allow_stale_renewal to override)",
                self.renewal_interval, self.delta
            )));
        }
        if self.ticks < 2 * self.delta {
            return Err(Error::Config(format!(
                "ticks {} must cover at least two windows (2 x {})",
                self.ticks, self.delta
            )));
        }
        Ok(())
    }
}

/// Percentile summary over the queries that passed a filter, plus the
/// observed extremes of `exact_window_count - true_rank`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SlackCheck {
    pub queries: usize,
    pub min_slack: Option<i64>,
    pub max_slack: Option<i64>,
    /// Queries with slack outside `[0, 2ΔR_s]`.
    pub violations: usize,
}

impl SlackCheck {
    fn add(&mut self, slack: i64, cap: f64) {
        self.queries += 1;
        self.min_slack = Some(self.min_slack.map_or(slack, |m| m.min(slack)));
        self.max_slack = Some(self.max_slack.map_or(slack, |m| m.max(slack)));
        if slack < 0 || slack as f64 > cap {
            self.violations += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub csv_schema_version: u32,
    pub config: SimConfig,
    pub sketches: usize,
    pub ticks: u64,
    pub events: u64,
    pub arrivals: u64,
    pub served: u64,
    pub waiting_at_end: u64,
    pub queries: usize,
    /// `εN` with the configured N hint.
    pub epsilon_n: f64,
    /// `εN + 2ΔR_s`.
    pub max_error_bound: f64,
    /// Fraction of queries with `|estimate - exact| < εN`.
    pub coverage: Option<f64>,
    /// Most distinct clients the oracle saw in a single window.
    pub peak_window_clients: u64,
    /// Fraction of queries with `|estimate - exact| < ε · peak_window_clients`.
    pub coverage_at_peak: Option<f64>,
    /// Queries whose rho_ts lies in the completed window.
    pub completed_window: SlackCheck,
    /// Queries whose rho_ts precedes the current window.
    pub before_current_window: SlackCheck,
    pub report: Option<ReportSummary>,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub summary: SimSummary,
    pub records: Vec<QueryRecord>,
    /// Final estimator snapshot.
    pub snapshot: Vec<u8>,
}

struct Waiting {
    id: String,
    rho: u64,
}

pub fn run_simulation(config: &SimConfig) -> Result<SimOutput> {
    config.validate()?;
    let window_config = config.window_config();
    let mut estimator = WindowState::new(window_config.clone())?;
    let mut exact = ExactWindows::new(config.delta);
    let mut queue = ExactQueue::new();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let arrivals_dist = if config.arrival_rate > 0.0 {
        Some(Poisson::new(config.arrival_rate).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };
    let renewal = config.renewal_interval;
    let cap = 2.0 * config.delta as f64 * config.r_s;
    let eps = config.epsilon;

    // FCFS line; client `seq` sits at index `seq - head_seq`.
    let mut line: VecDeque<Waiting> = VecDeque::new();
    let mut head_seq: u64 = 0;
    let mut next_seq: u64 = 0;
    let mut buckets: Vec<Vec<u64>> = vec![Vec::new(); renewal as usize];

    let mut records = Vec::new();
    let mut events = 0u64;
    let mut credit = 0.0f64;
    let mut completed_check = SlackCheck::default();
    let mut before_check = SlackCheck::default();

    let mut feed = |estimator: &mut WindowState,
                    exact: &mut ExactWindows,
                    ev: RainCheckEvent,
                    t: u64|
     -> Result<()> {
        estimator.observe(&ev, t)?;
        exact.observe(&ev, t);
        events += 1;
        Ok(())
    };

    for t in 0..config.ticks {
        estimator.rotate(t);
        exact.rotate(t);

        if let Some(dist) = &arrivals_dist {
            let n = dist.sample(&mut rng) as u64;
            for _ in 0..n {
                let seq = next_seq;
                next_seq += 1;
                let id = format!("c{seq:09}");
                buckets[rng.random_range(0..renewal) as usize].push(seq);
                queue.join(id.as_bytes(), Timestamp(t));
                feed(
                    &mut estimator,
                    &mut exact,
                    RainCheckEvent::new(id.clone(), t),
                    t,
                )?;
                line.push_back(Waiting { id, rho: t });
            }
        }

        let bucket = &mut buckets[(t % renewal) as usize];
        bucket.retain(|&seq| seq >= head_seq);
        for &seq in bucket.iter() {
            let client = &line[(seq - head_seq) as usize];
            if client.rho < t {
                let ev = RainCheckEvent::new(client.id.clone(), client.rho);
                feed(&mut estimator, &mut exact, ev, t)?;
            }
        }

        if config.query_fraction > 0.0 && !line.is_empty() {
            let m = Binomial::new(line.len() as u64, config.query_fraction)
                .map_err(|e| Error::Config(e.to_string()))?
                .sample(&mut rng) as usize;
            let mut picks = index::sample(&mut rng, line.len(), m).into_vec();
            picks.sort_unstable();
            let window_index = estimator.window_index();
            let window_start = window_index * config.delta;
            let completed_start = window_start.saturating_sub(config.delta);
            for i in picks {
                let client = &line[i];
                let rho = Timestamp(client.rho);
                let true_rank = queue.rank(client.id.as_bytes())? as u64;
                let exact_count = exact.completed().count_at_most(rho) as u64;
                let est = estimator.estimate_rank(rho, t)?;
                let slack = exact_count as i64 - true_rank as i64;
                if client.rho < window_start {
                    before_check.add(slack, cap);
                    if window_index > 0 && client.rho >= completed_start {
                        completed_check.add(slack, cap);
                    }
                }
                records.push(QueryRecord {
                    t_cur: t,
                    client_id: client.id.clone(),
                    rho_ts: client.rho,
                    true_rank,
                    exact_window_count: exact_count,
                    sketch_estimate: est.estimated_rank,
                    error_bound: est.error_bound,
                    window_index: est.window_index,
                });
            }
        }

        if t >= config.service_start {
            credit += config.service_rate;
            let n = credit.floor();
            credit -= n;
            for _ in 0..n as u64 {
                let Some(client) = line.pop_front() else {
                    break;
                };
                let (id, _) = queue.serve().expect("oracle and line agree on size");
                debug_assert_eq!(id, client.id.as_bytes());
                head_seq += 1;
            }
        }
    }

    let peak = exact.peak_window_clients() as u64;
    let coverage_of = |threshold: f64| {
        (!records.is_empty()).then(|| {
            records
                .iter()
                .filter(|r| (r.sketch_estimate - r.exact_window_count as f64).abs() < threshold)
                .count() as f64
                / records.len() as f64
        })
    };
    let epsilon_n = window_config.epsilon_n();
    let summary = SimSummary {
        csv_schema_version: CSV_SCHEMA_VERSION,
        config: config.clone(),
        sketches: window_config.sketch_count(),
        ticks: config.ticks,
        events,
        arrivals: next_seq,
        served: queue.served() as u64,
        waiting_at_end: line.len() as u64,
        queries: records.len(),
        epsilon_n,
        max_error_bound: window_config.max_error_bound(),
        coverage: coverage_of(epsilon_n),
        peak_window_clients: peak,
        coverage_at_peak: coverage_of(eps * peak as f64),
        completed_window: completed_check,
        before_current_window: before_check,
        report: (!records.is_empty())
            .then(|| report(&records, Some(epsilon_n)))
            .transpose()?,
    };
    Ok(SimOutput {
        summary,
        snapshot: estimator.snapshot(),
        records,
    })
}
