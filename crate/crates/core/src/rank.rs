//! Rank estimation sketch: an FM-shaped array whose positions remember the
//! smallest timestamp ever hashed there.
//!
//! Converting a row at threshold `x` (keep the positions whose stored minimum
//! is `<= x`) yields exactly the FM sketch that would have been built from the
//! events stamped `<= x`. One structure therefore answers "how many distinct
//! clients hold a timestamp at or before `x`?" for every `x` at once.
//!
//! Positions depend on the client identity only, so repeated tokens from one
//! client collapse into a single slot and are never double counted.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::fm::{check_seeds, combine_indices, Averaging, FmSketch};
use crate::hashing::{check_width, derive_seeds, position_of, HashSeed};
use crate::{Error, Result};

/// Discrete time in ticks. `u64::MAX` is reserved as the empty-slot sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const EMPTY: Timestamp = Timestamp(u64::MAX);
    /// Largest valid timestamp; a threshold here passes every stored value.
    pub const MAX: Timestamp = Timestamp(u64::MAX - 1);

    pub fn is_empty(self) -> bool {
        self == Self::EMPTY
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// One token: the identity is the client, the value is the timestamp.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RainCheckEvent {
    pub client_id: Vec<u8>,
    pub ts: Timestamp,
}

impl RainCheckEvent {
    pub fn new(client_id: impl Into<Vec<u8>>, ts: u64) -> Self {
        Self {
            client_id: client_id.into(),
            ts: Timestamp(ts),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.client_id.is_empty() {
            return Err(Error::invalid("client id must be non-empty"));
        }
        if self.ts.is_empty() {
            return Err(Error::invalid("timestamp collides with the empty sentinel"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RankSketchRow {
    slots: Vec<Timestamp>,
    seed: HashSeed,
}

impl RankSketchRow {
    pub fn new(seed: HashSeed, width: u32) -> Result<Self> {
        check_width(width)?;
        Ok(Self {
            slots: vec![Timestamp::EMPTY; width as usize],
            seed,
        })
    }

    pub fn from_slots(seed: HashSeed, slots: Vec<Timestamp>) -> Result<Self> {
        check_width(slots.len() as u32)?;
        Ok(Self { slots, seed })
    }

    pub fn seed(&self) -> HashSeed {
        self.seed
    }

    pub fn slots(&self) -> &[Timestamp] {
        &self.slots
    }

    pub fn width(&self) -> u32 {
        self.slots.len() as u32
    }

    fn insert_unchecked(&mut self, event: &RainCheckEvent) -> Result<()> {
        let p = position_of(&event.client_id, self.seed, self.width())?.index() as usize;
        let slot = &mut self.slots[p];
        if event.ts < *slot {
            *slot = event.ts;
        }
        Ok(())
    }

    pub fn insert(&mut self, event: &RainCheckEvent) -> Result<()> {
        event.validate()?;
        self.insert_unchecked(event)
    }

    /// FM sketch of the events stamped `<= x`.
    pub fn to_fm(&self, x: Timestamp) -> FmSketch {
        let mut fm = FmSketch::new(self.width()).expect("row width already validated");
        for (i, &slot) in self.slots.iter().enumerate() {
            if !slot.is_empty() && slot <= x {
                fm.set_bit(i as u32);
            }
        }
        fm
    }

    /// `lsb0` of `to_fm(x)` without materializing the bit vector.
    pub fn lsb0_at(&self, x: Timestamp) -> u32 {
        self.slots
            .iter()
            .position(|&slot| slot.is_empty() || slot > x)
            .unwrap_or(self.slots.len()) as u32
    }

    fn any_at_most(&self, x: Timestamp) -> bool {
        self.slots.iter().any(|&s| !s.is_empty() && s <= x)
    }

    pub fn reset(&mut self) {
        self.slots.fill(Timestamp::EMPTY);
    }

    pub fn merge_from(&mut self, other: &RankSketchRow) -> Result<()> {
        if self.seed != other.seed || self.slots.len() != other.slots.len() {
            return Err(Error::IncompatibleSketch(
                "row seed or width differs".into(),
            ));
        }
        for (a, &b) in self.slots.iter_mut().zip(&other.slots) {
            *a = (*a).min(b);
        }
        Ok(())
    }
}

/// `K` rank rows sharing a width, with pairwise distinct seeds.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RankEnsemble {
    rows: Vec<RankSketchRow>,
    width: u32,
}

impl RankEnsemble {
    pub fn new(seeds: &[HashSeed], width: u32) -> Result<Self> {
        check_seeds(seeds)?;
        let rows = seeds
            .iter()
            .map(|&s| RankSketchRow::new(s, width))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows, width })
    }

    /// `k` rows with seeds derived from `base_seed`.
    pub fn with_seed_base(base_seed: u64, k: usize, width: u32) -> Result<Self> {
        Self::new(&derive_seeds(base_seed, k), width)
    }

    pub fn from_rows(rows: Vec<RankSketchRow>) -> Result<Self> {
        let seeds: Vec<HashSeed> = rows.iter().map(|r| r.seed).collect();
        check_seeds(&seeds)?;
        let width = rows[0].width();
        if rows.iter().any(|r| r.width() != width) {
            return Err(Error::invalid("rows must share a width"));
        }
        Ok(Self { rows, width })
    }

    pub fn rows(&self) -> &[RankSketchRow] {
        &self.rows
    }

    pub fn seeds(&self) -> Vec<HashSeed> {
        self.rows.iter().map(|r| r.seed).collect()
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.slots.iter().all(|s| s.is_empty()))
    }

    /// Number of timestamp cells held, `K · W`.
    pub fn cell_count(&self) -> usize {
        self.rows.len() * self.width as usize
    }

    pub fn insert(&mut self, event: &RainCheckEvent) -> Result<()> {
        event.validate()?;
        for row in &mut self.rows {
            row.insert_unchecked(event)?;
        }
        Ok(())
    }

    pub fn to_fm_rows(&self, x: Timestamp) -> Vec<FmSketch> {
        self.rows.iter().map(|r| r.to_fm(x)).collect()
    }

    /// Estimated number of distinct clients whose smallest timestamp is `<= x`.
    pub fn count_at_most(&self, x: Timestamp) -> f64 {
        self.count_at_most_with(x, Averaging::MeanIndex)
    }

    pub fn count_at_most_with(&self, x: Timestamp, averaging: Averaging) -> f64 {
        let indices: Vec<u32> = self.rows.iter().map(|r| r.lsb0_at(x)).collect();
        let any = self.rows.iter().any(|r| r.any_at_most(x));
        combine_indices(&indices, any, averaging)
    }

    pub fn merge(&self, other: &RankEnsemble) -> Result<RankEnsemble> {
        if self.rows.len() != other.rows.len() || self.width != other.width {
            return Err(Error::IncompatibleSketch(format!(
                "shape {}x{} vs {}x{}",
                self.rows.len(),
                self.width,
                other.rows.len(),
                other.width
            )));
        }
        let mut out = self.clone();
        for (a, b) in out.rows.iter_mut().zip(&other.rows) {
            a.merge_from(b)?;
        }
        Ok(out)
    }

    pub fn reset(&mut self) {
        for row in &mut self.rows {
            row.reset();
        }
    }

    /// An empty ensemble with the same seeds and width.
    pub fn fresh(&self) -> RankEnsemble {
        let mut out = self.clone();
        out.reset();
        out
    }
}
