//! Exact ground truth with per-client state. Used by tests and the simulator to
//! measure what the sketches avoid storing.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::rank::{RainCheckEvent, Timestamp};
use crate::{Error, Result};

/// Every client seen in one window, with its smallest timestamp.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExactWindowCounter {
    per_client_min: BTreeMap<Vec<u8>, Timestamp>,
}

impl ExactWindowCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, event: &RainCheckEvent) {
        self.per_client_min
            .entry(event.client_id.clone())
            .and_modify(|t| *t = (*t).min(event.ts))
            .or_insert(event.ts);
    }

    pub fn len(&self) -> usize {
        self.per_client_min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_client_min.is_empty()
    }

    pub fn min_of(&self, client_id: &[u8]) -> Option<Timestamp> {
        self.per_client_min.get(client_id).copied()
    }

    /// `|{c : min(c) <= x}|`. Linear scan.
    pub fn count_at_most(&self, x: Timestamp) -> usize {
        self.per_client_min.values().filter(|&&t| t <= x).count()
    }

    /// Sorted view for repeated threshold queries against a closed window.
    pub fn freeze(&self) -> FrozenCounts {
        let mut sorted: Vec<Timestamp> = self.per_client_min.values().copied().collect();
        sorted.sort_unstable();
        FrozenCounts { sorted }
    }
}

/// Immutable sorted per-client minimums; `count_at_most` is a binary search.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrozenCounts {
    sorted: Vec<Timestamp>,
}

impl FrozenCounts {
    pub fn count_at_most(&self, x: Timestamp) -> usize {
        self.sorted.partition_point(|&t| t <= x)
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }
}

/// Exact windowed counts aligned with the estimator's Δ windows.
#[derive(Debug, Clone)]
pub struct ExactWindows {
    delta: u64,
    window_index: u64,
    current: ExactWindowCounter,
    completed: FrozenCounts,
    peak_window_clients: usize,
}

impl ExactWindows {
    pub fn new(delta: u64) -> Self {
        Self {
            delta,
            window_index: 0,
            current: ExactWindowCounter::new(),
            completed: FrozenCounts::default(),
            peak_window_clients: 0,
        }
    }

    pub fn rotate(&mut self, now: u64) {
        let target = now / self.delta;
        if target > self.window_index {
            let finished = std::mem::take(&mut self.current);
            self.peak_window_clients = self.peak_window_clients.max(finished.len());
            self.completed = if target == self.window_index + 1 {
                finished.freeze()
            } else {
                FrozenCounts::default()
            };
            self.window_index = target;
        }
    }

    pub fn observe(&mut self, event: &RainCheckEvent, now: u64) {
        self.rotate(now);
        self.current.insert(event);
    }

    pub fn window_index(&self) -> u64 {
        self.window_index
    }

    pub fn completed(&self) -> &FrozenCounts {
        &self.completed
    }

    /// Largest number of distinct clients seen in any closed window so far,
    /// or in the open one.
    pub fn peak_window_clients(&self) -> usize {
        self.peak_window_clients.max(self.current.len())
    }
}

/// FCFS virtual queue ordered by `(rho_ts, client_id)`. Ranks are 1-based;
/// equal timestamps are broken by ascending client id bytes.
#[derive(Debug, Clone, Default)]
pub struct ExactQueue {
    waiting: BTreeSet<(Timestamp, Vec<u8>)>,
    rho: HashMap<Vec<u8>, Timestamp>,
    served: usize,
}

impl ExactQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a waiting client. A client already waiting keeps the smaller of the
    /// two timestamps.
    pub fn join(&mut self, client_id: &[u8], rho_ts: Timestamp) {
        if let Some(&old) = self.rho.get(client_id) {
            if old <= rho_ts {
                return;
            }
            self.waiting.remove(&(old, client_id.to_vec()));
        }
        self.rho.insert(client_id.to_vec(), rho_ts);
        self.waiting.insert((rho_ts, client_id.to_vec()));
    }

    /// Serves the head of the queue.
    pub fn serve(&mut self) -> Option<(Vec<u8>, Timestamp)> {
        let (ts, id) = self.waiting.pop_first()?;
        self.rho.remove(&id);
        self.served += 1;
        Some((id, ts))
    }

    pub fn rho_of(&self, client_id: &[u8]) -> Option<Timestamp> {
        self.rho.get(client_id).copied()
    }

    pub fn rank(&self, client_id: &[u8]) -> Result<usize> {
        let rho = self
            .rho_of(client_id)
            .ok_or_else(|| Error::NotWaiting(String::from_utf8_lossy(client_id).into_owned()))?;
        Ok(1 + self.waiting.range(..(rho, client_id.to_vec())).count())
    }

    pub fn waiting(&self) -> usize {
        self.waiting.len()
    }

    pub fn served(&self) -> usize {
        self.served
    }
}
