//! Flajolet-Martin probabilistic counting.
//!
//! An [`FmSketch`] is a `W`-bit vector; inserting a client sets the bit at its
//! hashed position. The distinct count is estimated from the lowest unset bit.
//! An [`FmEnsemble`] runs `K` independently seeded rows and averages them.

use serde::{Deserialize, Serialize};

use crate::hashing::{check_width, position_of, HashSeed};
use crate::{Error, Result};

/// Bias-correction constant of the FM estimator.
pub const FM_PHI: f64 = 0.77351;

/// Single FM bit vector. Bit `i` lives at bit `i` of `bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FmSketch {
    bits: u64,
    width: u32,
}

impl FmSketch {
    pub fn new(width: u32) -> Result<Self> {
        check_width(width)?;
        Ok(Self { bits: 0, width })
    }

    /// Builds a sketch from raw bits. Bits at or above `width` are rejected.
    pub fn from_bits(bits: u64, width: u32) -> Result<Self> {
        check_width(width)?;
        if width < 64 && bits >> width != 0 {
            return Err(Error::invalid(format!(
                "bits {bits:#x} do not fit in width {width}"
            )));
        }
        Ok(Self { bits, width })
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn bit(&self, index: u32) -> bool {
        index < self.width && self.bits >> index & 1 == 1
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn set_bit(&mut self, index: u32) {
        debug_assert!(index < self.width);
        self.bits |= 1 << index;
    }

    pub fn insert(&mut self, client_id: &[u8], seed: HashSeed) -> Result<()> {
        let pos = position_of(client_id, seed, self.width)?;
        self.set_bit(pos.index());
        Ok(())
    }

    /// Index of the lowest zero bit, or `W` when every bit is set.
    pub fn lsb0(&self) -> u32 {
        (!self.bits).trailing_zeros().min(self.width)
    }

    /// `2^lsb0 / φ`, or exactly 0 for a sketch that has seen nothing.
    pub fn estimate(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            raw_estimate(self.lsb0() as f64)
        }
    }

    pub fn merge(&self, other: &FmSketch) -> Result<FmSketch> {
        if self.width != other.width {
            return Err(Error::IncompatibleSketch(format!(
                "width {} vs {}",
                self.width, other.width
            )));
        }
        Ok(FmSketch {
            bits: self.bits | other.bits,
            width: self.width,
        })
    }

    pub fn clear(&mut self) {
        self.bits = 0;
    }
}

fn raw_estimate(index: f64) -> f64 {
    index.exp2() / FM_PHI
}

/// How an ensemble combines its rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Average the `lsb0` indices, then exponentiate.
    #[default]
    MeanIndex,
    /// Average the per-row estimates.
    MeanEstimate,
}

/// Combines per-row `lsb0` values into one estimate. Returns 0 when no row has
/// any bit set.
pub fn combine_indices(indices: &[u32], any_set: bool, averaging: Averaging) -> f64 {
    if !any_set || indices.is_empty() {
        return 0.0;
    }
    let k = indices.len() as f64;
    match averaging {
        Averaging::MeanIndex => {
            let mean = indices.iter().map(|&i| i as f64).sum::<f64>() / k;
            raw_estimate(mean)
        }
        Averaging::MeanEstimate => indices.iter().map(|&i| raw_estimate(i as f64)).sum::<f64>() / k,
    }
}

/// `K` FM rows with pairwise distinct seeds and a common width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FmEnsemble {
    seeds: Vec<HashSeed>,
    rows: Vec<FmSketch>,
    width: u32,
}

impl FmEnsemble {
    pub fn new(seeds: Vec<HashSeed>, width: u32) -> Result<Self> {
        check_seeds(&seeds)?;
        let row = FmSketch::new(width)?;
        Ok(Self {
            rows: vec![row; seeds.len()],
            seeds,
            width,
        })
    }

    pub fn from_rows(seeds: Vec<HashSeed>, rows: Vec<FmSketch>) -> Result<Self> {
        check_seeds(&seeds)?;
        if rows.len() != seeds.len() {
            return Err(Error::invalid("one row per seed required"));
        }
        let width = rows[0].width;
        if rows.iter().any(|r| r.width != width) {
            return Err(Error::invalid("rows must share a width"));
        }
        Ok(Self { seeds, rows, width })
    }

    pub fn seeds(&self) -> &[HashSeed] {
        &self.seeds
    }

    pub fn rows(&self) -> &[FmSketch] {
        &self.rows
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.iter().all(FmSketch::is_empty)
    }

    pub fn insert(&mut self, client_id: &[u8]) -> Result<()> {
        for (row, &seed) in self.rows.iter_mut().zip(&self.seeds) {
            row.insert(client_id, seed)?;
        }
        Ok(())
    }

    pub fn estimate(&self) -> f64 {
        self.estimate_with(Averaging::MeanIndex)
    }

    pub fn estimate_with(&self, averaging: Averaging) -> f64 {
        let indices: Vec<u32> = self.rows.iter().map(FmSketch::lsb0).collect();
        combine_indices(&indices, !self.is_empty(), averaging)
    }

    pub fn merge(&self, other: &FmEnsemble) -> Result<FmEnsemble> {
        if self.seeds != other.seeds {
            return Err(Error::IncompatibleSketch("seed lists differ".into()));
        }
        let rows = self
            .rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| a.merge(b))
            .collect::<Result<Vec<_>>>()?;
        Ok(FmEnsemble {
            seeds: self.seeds.clone(),
            rows,
            width: self.width,
        })
    }
}

pub(crate) fn check_seeds(seeds: &[HashSeed]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::invalid("at least one row is required"));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("seeds must be pairwise distinct"));
    }
    Ok(())
}

/// Target accuracy `Pr[|ñ - n| < εN] > 1 - δ`, with the unstated constant of
/// the `O(log(2/δ)/ε²)` row count exposed as `constant_c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyParams {
    pub epsilon: f64,
    pub delta: f64,
    #[serde(default = "default_constant")]
    pub constant_c: f64,
}

fn default_constant() -> f64 {
    1.0
}

impl AccuracyParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        Self::with_constant(epsilon, delta, 1.0)
    }

    pub fn with_constant(epsilon: f64, delta: f64, constant_c: f64) -> Result<Self> {
        let params = Self {
            epsilon,
            delta,
            constant_c,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::invalid(format!(
                "epsilon {} not in (0,1)",
                self.epsilon
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!("delta {} not in (0,1)", self.delta)));
        }
        if !(self.constant_c > 0.0 && self.constant_c.is_finite()) {
            return Err(Error::invalid("constant_c must be positive"));
        }
        Ok(())
    }

    /// `ceil(c · ln(2/δ) / ε²)`, at least 1.
    pub fn required_sketch_count(&self) -> usize {
        sketch_count_raw(self.epsilon, self.delta, self.constant_c)
    }
}

// Unvalidated form; `epsilon = 1` is a legal input here for unit cases.
pub(crate) fn sketch_count_raw(epsilon: f64, delta: f64, constant_c: f64) -> usize {
    let k = constant_c * (2.0 / delta).ln() / (epsilon * epsilon);
    (k.ceil() as usize).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Smallest id (by counter) whose position under `seed` equals `target`.
    fn id_at(target: u32, seed: HashSeed, width: u32) -> Vec<u8> {
        (0u64..)
            .map(|i| format!("probe-{i}").into_bytes())
            .find(|id| position_of(id, seed, width).unwrap().index() == target)
            .unwrap()
    }

    #[test]
    fn insert_sets_single_bit() {
        let seed = HashSeed(3);
        let mut s = FmSketch::new(64).unwrap();
        s.insert(&id_at(0, seed, 64), seed).unwrap();
        assert_eq!(s.bits(), 1);
        let once = s;
        s.insert(&id_at(0, seed, 64), seed).unwrap();
        assert_eq!(s, once);
    }

    #[test]
    fn bit_zero_always_set_after_many_inserts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for trial in 0..100u64 {
            let mut s = FmSketch::new(64).unwrap();
            for _ in 0..1000 {
                let id: u64 = rng.random();
                s.insert(&id.to_le_bytes(), HashSeed(trial)).unwrap();
            }
            assert!(s.bit(0), "trial {trial}");
        }
    }

    #[test]
    fn lsb0_cases() {
        assert_eq!(FmSketch::new(64).unwrap().lsb0(), 0);
        // bits 110100... : bit0=1, bit1=1, bit2=0, bit3=1
        assert_eq!(FmSketch::from_bits(0b1011, 64).unwrap().lsb0(), 2);
        assert_eq!(FmSketch::from_bits(0xff, 8).unwrap().lsb0(), 8);
        assert_eq!(FmSketch::from_bits(u64::MAX, 64).unwrap().lsb0(), 64);
        assert!(FmSketch::from_bits(0x100, 8).is_err());
    }

    #[test]
    fn estimate_cases() {
        assert_eq!(FmSketch::new(64).unwrap().estimate(), 0.0);
        let s = FmSketch::from_bits(0b0111, 64).unwrap();
        assert!((s.estimate() - 10.3424).abs() < 1e-4);
        let s = FmSketch::from_bits(0b0100, 64).unwrap();
        assert!((s.estimate() - 1.29281).abs() < 1e-5);
    }

    #[test]
    fn ensemble_mean_index() {
        let seeds = vec![HashSeed(1), HashSeed(2)];
        let rows = vec![
            FmSketch::from_bits(0b0011, 64).unwrap(),
            FmSketch::from_bits(0b1111, 64).unwrap(),
        ];
        let e = FmEnsemble::from_rows(seeds.clone(), rows).unwrap();
        assert!((e.estimate() - 8.0 / FM_PHI).abs() < 1e-12);
        let mean_est = (4.0 / FM_PHI + 16.0 / FM_PHI) / 2.0;
        assert!((e.estimate_with(Averaging::MeanEstimate) - mean_est).abs() < 1e-12);
        assert_eq!(FmEnsemble::new(seeds, 64).unwrap().estimate(), 0.0);
    }

    #[test]
    fn ensemble_rejects_duplicate_seeds() {
        assert!(FmEnsemble::new(vec![HashSeed(1), HashSeed(1)], 64).is_err());
        assert!(FmEnsemble::new(vec![], 64).is_err());
    }

    #[test]
    fn sketch_count() {
        let unit = sketch_count_raw(1.0, 2.0 / std::f64::consts::E, 1.0);
        assert_eq!(unit, 1);
        let p = AccuracyParams::new(0.1, 0.05).unwrap();
        assert_eq!(p.required_sketch_count(), 369);
        let raw = |eps: f64| (2.0f64 / 0.05).ln() / (eps * eps);
        assert!((raw(0.05) / raw(0.1) - 4.0).abs() < 1e-12);
        assert!(AccuracyParams::new(0.0, 0.5).is_err());
        assert!(AccuracyParams::new(0.5, 1.0).is_err());
    }

    #[test]
    fn merge_width_mismatch() {
        let a = FmSketch::new(64).unwrap();
        let b = FmSketch::new(32).unwrap();
        assert!(matches!(a.merge(&b), Err(Error::IncompatibleSketch(_))));
        let e1 = FmEnsemble::new(vec![HashSeed(1)], 64).unwrap();
        let e2 = FmEnsemble::new(vec![HashSeed(2)], 64).unwrap();
        assert!(e1.merge(&e2).is_err());
    }

    #[test]
    fn merge_of_halves_equals_full_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..50u64 {
            let ids: Vec<[u8; 8]> = (0..200)
                .map(|_| rng.random::<u64>().to_le_bytes())
                .collect();
            let seeds: Vec<HashSeed> = (0..4).map(|k| HashSeed(trial * 10 + k)).collect();
            let mut full = FmEnsemble::new(seeds.clone(), 64).unwrap();
            let mut left = full.clone();
            let mut right = full.clone();
            for (i, id) in ids.iter().enumerate() {
                full.insert(id).unwrap();
                if i < 100 {
                    left.insert(id).unwrap()
                } else {
                    right.insert(id).unwrap()
                }
            }
            assert_eq!(left.merge(&right).unwrap(), full);
            let empty = FmEnsemble::new(seeds, 64).unwrap();
            assert_eq!(full.merge(&empty).unwrap(), full);
        }
    }

    proptest! {
        #[test]
        fn state_depends_only_on_id_set(ids in prop::collection::vec(1u32..500, 0..60), seed in any::<u64>()) {
            let seed = HashSeed(seed);
            let mut forward = FmSketch::new(64).unwrap();
            let mut prev_lsb0 = 0;
            for id in &ids {
                forward.insert(&id.to_le_bytes(), seed).unwrap();
                prop_assert!(forward.lsb0() >= prev_lsb0);
                prev_lsb0 = forward.lsb0();
            }
            let mut set: Vec<u32> = ids.clone();
            set.sort_unstable();
            set.dedup();
            let mut dedup = FmSketch::new(64).unwrap();
            for id in set.iter().rev() {
                dedup.insert(&id.to_le_bytes(), seed).unwrap();
            }
            prop_assert_eq!(forward, dedup);
            if ids.is_empty() {
                prop_assert_eq!(forward.estimate(), 0.0);
            } else {
                prop_assert!(forward.estimate() >= 1.0 / FM_PHI);
            }
        }
    }
}
