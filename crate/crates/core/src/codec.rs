//! Little-endian binary snapshots.
//!
//! ```text
//! header   magic "FMRK" | version u8 | kind u8 | K u32 | W u32
//! kind 0   K seeds (u64) | K rows of ceil(W/8) bytes
//! kind 1   K seeds (u64) | K rows of W timestamp cells (u64, sentinel literal)
//! kind 2   window_index u64 | now u64 | current (as kind 1 body) | completed (as kind 1 body)
//! ```

use serde::{Deserialize, Serialize};

use crate::fm::{FmEnsemble, FmSketch};
use crate::hashing::HashSeed;
use crate::rank::{RankEnsemble, RankSketchRow, Timestamp};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FMRK";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum SketchKind {
    Fm = 0,
    Rank = 1,
    Window = 2,
}

impl TryFrom<u8> for SketchKind {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(SketchKind::Fm),
            1 => Ok(SketchKind::Rank),
            2 => Ok(SketchKind::Window),
            other => Err(Error::Codec(format!("unknown sketch kind {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub version: u8,
    pub kind: SketchKind,
    pub rows: u32,
    pub width: u32,
}

fn write_header(out: &mut Vec<u8>, kind: SketchKind, rows: usize, width: u32) {
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(kind as u8);
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&width.to_le_bytes());
}

fn fm_row_bytes(width: u32) -> usize {
    width.div_ceil(8) as usize
}

pub fn encode_fm(ensemble: &FmEnsemble) -> Vec<u8> {
    let w = ensemble.width();
    let row_len = fm_row_bytes(w);
    let mut out = Vec::with_capacity(HEADER_LEN + ensemble.len() * (8 + row_len));
    write_header(&mut out, SketchKind::Fm, ensemble.len(), w);
    for seed in ensemble.seeds() {
        out.extend_from_slice(&seed.0.to_le_bytes());
    }
    for row in ensemble.rows() {
        out.extend_from_slice(&row.bits().to_le_bytes()[..row_len]);
    }
    out
}

pub fn encode_rank(ensemble: &RankEnsemble) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + rank_body_len(ensemble.len(), ensemble.width()));
    write_header(&mut out, SketchKind::Rank, ensemble.len(), ensemble.width());
    write_rank_body(&mut out, ensemble);
    out
}

pub(crate) fn rank_body_len(rows: usize, width: u32) -> usize {
    rows * 8 + rows * width as usize * 8
}

pub(crate) fn write_rank_body(out: &mut Vec<u8>, ensemble: &RankEnsemble) {
    for row in ensemble.rows() {
        out.extend_from_slice(&row.seed().0.to_le_bytes());
    }
    for row in ensemble.rows() {
        for cell in row.slots() {
            out.extend_from_slice(&cell.0.to_le_bytes());
        }
    }
}

pub(crate) fn write_window(
    out: &mut Vec<u8>,
    window_index: u64,
    now: u64,
    current: &RankEnsemble,
    completed: &RankEnsemble,
) {
    write_header(out, SketchKind::Window, current.len(), current.width());
    out.extend_from_slice(&window_index.to_le_bytes());
    out.extend_from_slice(&now.to_le_bytes());
    write_rank_body(out, current);
    write_rank_body(out, completed);
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Codec(format!(
                "truncated: wanted {n} bytes, {} left",
                self.buf.len()
            )));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn finish(&self) -> Result<()> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(Error::Codec(format!("{} trailing bytes", self.buf.len())))
        }
    }

    fn header(&mut self) -> Result<Header> {
        if self.take(4)? != MAGIC {
            return Err(Error::Codec("bad magic".into()));
        }
        let version = self.u8()?;
        if version != VERSION {
            return Err(Error::Codec(format!("unsupported version {version}")));
        }
        let kind = SketchKind::try_from(self.u8()?)?;
        let rows = self.u32()?;
        let width = self.u32()?;
        if rows == 0 {
            return Err(Error::Codec("zero rows".into()));
        }
        if width == 0 || width > crate::MAX_WIDTH {
            return Err(Error::Codec(format!("width {width} out of range")));
        }
        Ok(Header {
            version,
            kind,
            rows,
            width,
        })
    }

    fn seeds(&mut self, k: u32) -> Result<Vec<HashSeed>> {
        (0..k).map(|_| self.u64().map(HashSeed)).collect()
    }

    fn rank_body(&mut self, h: &Header) -> Result<RankEnsemble> {
        let seeds = self.seeds(h.rows)?;
        let rows = seeds
            .into_iter()
            .map(|seed| {
                let slots = (0..h.width)
                    .map(|_| self.u64().map(Timestamp))
                    .collect::<Result<Vec<_>>>()?;
                RankSketchRow::from_slots(seed, slots)
            })
            .collect::<Result<Vec<_>>>()?;
        RankEnsemble::from_rows(rows).map_err(|e| Error::Codec(e.to_string()))
    }
}

pub fn read_header(bytes: &[u8]) -> Result<Header> {
    Reader { buf: bytes }.header()
}

/// Any decoded snapshot.
#[derive(Debug, Clone, PartialEq)]
pub enum Snapshot {
    Fm(FmEnsemble),
    Rank(RankEnsemble),
    Window {
        window_index: u64,
        now: u64,
        current: RankEnsemble,
        completed: RankEnsemble,
    },
}

pub fn decode(bytes: &[u8]) -> Result<Snapshot> {
    let mut r = Reader { buf: bytes };
    let h = r.header()?;
    let snap = match h.kind {
        SketchKind::Fm => {
            let seeds = r.seeds(h.rows)?;
            let row_len = fm_row_bytes(h.width);
            let rows = (0..h.rows)
                .map(|_| {
                    let mut word = [0u8; 8];
                    word[..row_len].copy_from_slice(r.take(row_len)?);
                    FmSketch::from_bits(u64::from_le_bytes(word), h.width)
                        .map_err(|e| Error::Codec(e.to_string()))
                })
                .collect::<Result<Vec<_>>>()?;
            Snapshot::Fm(
                FmEnsemble::from_rows(seeds, rows).map_err(|e| Error::Codec(e.to_string()))?,
            )
        }
        SketchKind::Rank => Snapshot::Rank(r.rank_body(&h)?),
        SketchKind::Window => {
            let window_index = r.u64()?;
            let now = r.u64()?;
            let current = r.rank_body(&h)?;
            let completed = r.rank_body(&h)?;
            Snapshot::Window {
                window_index,
                now,
                current,
                completed,
            }
        }
    };
    r.finish()?;
    Ok(snap)
}

pub fn decode_fm(bytes: &[u8]) -> Result<FmEnsemble> {
    match decode(bytes)? {
        Snapshot::Fm(e) => Ok(e),
        _ => Err(Error::Codec("expected an FM snapshot".into())),
    }
}

pub fn decode_rank(bytes: &[u8]) -> Result<RankEnsemble> {
    match decode(bytes)? {
        Snapshot::Rank(e) => Ok(e),
        _ => Err(Error::Codec("expected a rank snapshot".into())),
    }
}

/// Per-row summary printed by `sketch-dump`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowProfile {
    pub seed: u64,
    pub lsb0: u32,
    /// Occupied positions (set bits, or non-empty slots).
    pub occupied: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleProfile {
    pub label: String,
    pub estimate: f64,
    pub rows: Vec<RowProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchDump {
    pub header: Header,
    pub bytes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_index: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub now: Option<u64>,
    pub ensembles: Vec<EnsembleProfile>,
}

fn rank_profile(label: &str, e: &RankEnsemble) -> EnsembleProfile {
    EnsembleProfile {
        label: label.to_string(),
        estimate: e.count_at_most(Timestamp::MAX),
        rows: e
            .rows()
            .iter()
            .map(|r| RowProfile {
                seed: r.seed().0,
                lsb0: r.lsb0_at(Timestamp::MAX),
                occupied: r.slots().iter().filter(|s| !s.is_empty()).count() as u32,
            })
            .collect(),
    }
}

/// Decodes a snapshot and summarizes its header and per-row `lsb0` profile.
/// Rank rows are profiled at the all-pass threshold.
pub fn dump(bytes: &[u8]) -> Result<SketchDump> {
    let header = read_header(bytes)?;
    let snap = decode(bytes)?;
    let mut out = SketchDump {
        header,
        bytes: bytes.len(),
        window_index: None,
        now: None,
        ensembles: Vec::new(),
    };
    match snap {
        Snapshot::Fm(e) => out.ensembles.push(EnsembleProfile {
            label: "fm".into(),
            estimate: e.estimate(),
            rows: e
                .seeds()
                .iter()
                .zip(e.rows())
                .map(|(s, r)| RowProfile {
                    seed: s.0,
                    lsb0: r.lsb0(),
                    occupied: r.bits().count_ones(),
                })
                .collect(),
        }),
        Snapshot::Rank(e) => out.ensembles.push(rank_profile("rank", &e)),
        Snapshot::Window {
            window_index,
            now,
            current,
            completed,
        } => {
            out.window_index = Some(window_index);
            out.now = Some(now);
            out.ensembles.push(rank_profile("current", &current));
            out.ensembles.push(rank_profile("completed", &completed));
        }
    }
    Ok(out)
}

impl SketchDump {
    pub fn render(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let h = &self.header;
        let _ = writeln!(
            s,
            "FMRK v{} kind={:?} K={} W={} ({} bytes)",
            h.version, h.kind, h.rows, h.width, self.bytes
        );
        if let (Some(i), Some(now)) = (self.window_index, self.now) {
            let _ = writeln!(s, "window_index={i} now={now}");
        }
        for e in &self.ensembles {
            let _ = writeln!(s, "[{}] estimate={:.3}", e.label, e.estimate);
            let lsb: Vec<String> = e.rows.iter().map(|r| r.lsb0.to_string()).collect();
            let _ = writeln!(s, "  lsb0: {}", lsb.join(" "));
            let mut hist = vec![0usize; h.width as usize + 1];
            for r in &e.rows {
                hist[r.lsb0 as usize] += 1;
            }
            for (i, n) in hist.iter().enumerate().filter(|(_, n)| **n > 0) {
                let _ = writeln!(s, "  {i:>3} | {}", "#".repeat(*n));
            }
        }
        s
    }
}
