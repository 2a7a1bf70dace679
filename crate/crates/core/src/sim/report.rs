use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Bumped whenever the CSV columns change.
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// One rank query. Column order is the CSV schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub t_cur: u64,
    pub client_id: String,
    pub rho_ts: u64,
    pub true_rank: u64,
    pub exact_window_count: u64,
    pub sketch_estimate: f64,
    pub error_bound: f64,
    pub window_index: u64,
}

impl QueryRecord {
    pub fn abs_error(&self) -> f64 {
        (self.sketch_estimate - self.exact_window_count as f64).abs()
    }

    pub fn slack(&self) -> f64 {
        self.exact_window_count as f64 - self.true_rank as f64
    }
}

pub fn write_csv<W: Write>(out: W, records: &[QueryRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record([
        "t_cur",
        "client_id",
        "rho_ts",
        "true_rank",
        "exact_window_count",
        "sketch_estimate",
        "error_bound",
        "window_index",
    ])?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<QueryRecord>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Nearest-rank percentile: the smallest value with at least `p` of the mass
/// at or below it. `p` in `[0, 1]`; `values` must be non-empty.
pub fn percentile(values: &mut [f64], p: f64) -> f64 {
    assert!(!values.is_empty());
    let n = values.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    let (_, v, _) = values.select_nth_unstable_by(rank - 1, f64::total_cmp);
    *v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
}

impl Percentiles {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        Self {
            p50: percentile(&mut v, 0.50),
            p90: percentile(&mut v, 0.90),
            p99: percentile(&mut v, 0.99),
            max: percentile(&mut v, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub records: usize,
    /// `|sketch_estimate - exact_window_count|`.
    pub sketch_error: Percentiles,
    /// `exact_window_count - true_rank`.
    pub rank_slack: Percentiles,
    /// Threshold used for `coverage`.
    pub epsilon_n: f64,
    /// Fraction of records with `|sketch_estimate - exact_window_count| < epsilon_n`.
    pub coverage: f64,
}

/// Default `εN` when none is supplied: 0.3 times the largest exact count seen.
pub fn default_epsilon_n(records: &[QueryRecord]) -> f64 {
    0.3 * records
        .iter()
        .map(|r| r.exact_window_count)
        .max()
        .unwrap_or(0) as f64
}

pub fn report(records: &[QueryRecord], epsilon_n: Option<f64>) -> Result<ReportSummary> {
    if records.is_empty() {
        return Err(Error::EmptyReport);
    }
    let epsilon_n = epsilon_n.unwrap_or_else(|| default_epsilon_n(records));
    let errors: Vec<f64> = records.iter().map(QueryRecord::abs_error).collect();
    let slack: Vec<f64> = records.iter().map(QueryRecord::slack).collect();
    let covered = errors.iter().filter(|&&e| e < epsilon_n).count();
    Ok(ReportSummary {
        records: records.len(),
        sketch_error: Percentiles::of(&errors),
        rank_slack: Percentiles::of(&slack),
        epsilon_n,
        coverage: covered as f64 / records.len() as f64,
    })
}

impl ReportSummary {
    pub fn render(&self) -> String {
        let row = |name: &str, p: &Percentiles| {
            format!(
                "{name:<28} p50={:<10.3} p90={:<10.3} p99={:<10.3} max={:.3}\n",
                p.p50, p.p90, p.p99, p.max
            )
        };
        let mut s = format!("records: {}\n", self.records);
        s += &row("|estimate - exact|", &self.sketch_error);
        s += &row("exact - true_rank", &self.rank_slack);
        s += &format!(
            "coverage (|estimate - exact| < {:.3}): {:.4}\n",
            self.epsilon_n, self.coverage
        );
        s
    }
}
