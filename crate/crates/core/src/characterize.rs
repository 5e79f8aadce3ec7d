//! Cell classification from a measurement campaign.
//!
//! Classification runs in two passes so dumps can be streamed from disk:
//! the first pass folds every dump into per-pattern AND/OR images, which
//! is enough to decide each cell's class; the second pass counts ones for
//! the noisy cells only.

use crate::io::MeasurementDump;
use crate::model::{CellAddress, CellClass, DramGeometry};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const CHARMAP_MAGIC: [u8; 4] = *b"DLC1";
const CHARMAP_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CharacterizeError {
    #[error("campaign has no dumps")]
    Empty,
    #[error("dump geometry {found} differs from campaign geometry {expected}")]
    GeometryMismatch {
        expected: DramGeometry,
        found: DramGeometry,
    },
    #[error("classification needs at least 2 distinct patterns, found {0}")]
    TooFewPatterns(usize),
    #[error("pattern {pattern:#04x} has {repeats} repeat(s); at least 2 are needed")]
    TooFewRepeats { pattern: u8, repeats: u32 },
    #[error("every read echoed its written pattern; the campaign shows no faults")]
    FaultFree,
    #[error("second pass saw {found} dumps for pattern {pattern:#04x}, first pass saw {expected}")]
    PassMismatch {
        pattern: u8,
        expected: u32,
        found: u32,
    },
    #[error("the map has no noisy cells")]
    NoNoisyCells,
    #[error("malformed characterization file: {0}")]
    Format(String),
    #[error("I/O error")]
    Io(#[from] std::io::Error),
}

/// First pass: per-pattern AND/OR images.
#[derive(Debug)]
pub struct Classifier {
    geometry: Option<DramGeometry>,
    groups: BTreeMap<u8, Group>,
    dump_digests: Vec<[u8; 32]>,
    all_echo: bool,
}

#[derive(Debug)]
struct Group {
    and: Vec<u8>,
    or: Vec<u8>,
    repeats: u32,
}

impl Default for Classifier {
    fn default() -> Self {
        Self::new()
    }
}

impl Classifier {
    pub fn new() -> Self {
        Classifier {
            geometry: None,
            groups: BTreeMap::new(),
            dump_digests: Vec::new(),
            all_echo: true,
        }
    }

    fn check_geometry(&mut self, g: DramGeometry) -> Result<(), CharacterizeError> {
        match self.geometry {
            None => {
                self.geometry = Some(g);
                Ok(())
            }
            Some(expected) if expected == g => Ok(()),
            Some(expected) => Err(CharacterizeError::GeometryMismatch { expected, found: g }),
        }
    }

    pub fn observe(&mut self, dump: &MeasurementDump) -> Result<(), CharacterizeError> {
        self.check_geometry(dump.geometry())?;
        let payload = dump.payload();
        self.all_echo &= dump.echoes_pattern();
        let mut h = Sha256::new();
        h.update([dump.spec().input_pattern]);
        h.update(dump.spec().measurement_index.to_le_bytes());
        h.update(payload);
        self.dump_digests.push(h.finalize().into());

        let group = self
            .groups
            .entry(dump.spec().input_pattern)
            .or_insert_with(|| Group {
                and: vec![0xFF; payload.len()],
                or: vec![0x00; payload.len()],
                repeats: 0,
            });
        for ((a, o), &b) in group.and.iter_mut().zip(group.or.iter_mut()).zip(payload) {
            *a &= b;
            *o |= b;
        }
        group.repeats += 1;
        Ok(())
    }

    /// Decides every cell's class and prepares the counting pass.
    pub fn into_counter(self) -> Result<OnesCounter, CharacterizeError> {
        let geometry = self.geometry.ok_or(CharacterizeError::Empty)?;
        if self.groups.len() < 2 {
            return Err(CharacterizeError::TooFewPatterns(self.groups.len()));
        }
        if let Some((&pattern, g)) = self.groups.iter().find(|(_, g)| g.repeats < 2) {
            return Err(CharacterizeError::TooFewRepeats {
                pattern,
                repeats: g.repeats,
            });
        }
        if self.all_echo {
            return Err(CharacterizeError::FaultFree);
        }

        let bytes = geometry.image_bytes();
        let mut noisy = vec![0u8; bytes];
        let mut dependent = vec![0u8; bytes];
        let groups: Vec<&Group> = self.groups.values().collect();
        for g in &groups {
            for ((n, &a), &o) in noisy.iter_mut().zip(&g.and).zip(&g.or) {
                *n |= a ^ o;
            }
        }
        let reference = &groups[0].and;
        for g in &groups[1..] {
            for ((d, &a), &r) in dependent.iter_mut().zip(&g.and).zip(reference) {
                *d |= a ^ r;
            }
        }
        for (d, &n) in dependent.iter_mut().zip(&noisy) {
            *d &= !n;
        }

        let bank_bytes = bytes / geometry.banks as usize;
        let bank_counts = (0..geometry.banks as usize)
            .map(|b| {
                let range = b * bank_bytes..(b + 1) * bank_bytes;
                let n: u64 = noisy[range.clone()]
                    .iter()
                    .map(|x| x.count_ones() as u64)
                    .sum();
                let d: u64 = dependent[range].iter().map(|x| x.count_ones() as u64).sum();
                [geometry.cells_per_bank() - n - d, d, n]
            })
            .collect();

        let noisy_idx = set_bits(&noisy);
        let pd_idx = set_bits(&dependent);
        let patterns: Vec<(u8, u32)> = self.groups.iter().map(|(&p, g)| (p, g.repeats)).collect();
        let mut digests = self.dump_digests;
        digests.sort_unstable();
        let mut h = Sha256::new();
        for d in &digests {
            h.update(d);
        }
        let campaign_id = hex::encode(&h.finalize()[..16]);

        Ok(OnesCounter {
            geometry,
            ones: vec![0; noisy_idx.len() * patterns.len()],
            seen: vec![0; patterns.len()],
            patterns,
            noisy: noisy_idx,
            pattern_dependent: pd_idx,
            bank_counts,
            campaign_id,
        })
    }
}

fn set_bits(mask: &[u8]) -> Vec<u64> {
    let mut out = Vec::new();
    for (i, &b) in mask.iter().enumerate() {
        let mut b = b;
        while b != 0 {
            let lead = b.leading_zeros() as u64;
            out.push(i as u64 * 8 + lead);
            b &= !(0x80 >> lead);
        }
    }
    out
}

/// Second pass: ones counts for noisy cells.
#[derive(Debug)]
pub struct OnesCounter {
    geometry: DramGeometry,
    patterns: Vec<(u8, u32)>,
    seen: Vec<u32>,
    noisy: Vec<u64>,
    ones: Vec<u16>,
    pattern_dependent: Vec<u64>,
    bank_counts: Vec<[u64; 3]>,
    campaign_id: String,
}

impl OnesCounter {
    pub fn count(&mut self, dump: &MeasurementDump) -> Result<(), CharacterizeError> {
        if dump.geometry() != self.geometry {
            return Err(CharacterizeError::GeometryMismatch {
                expected: self.geometry,
                found: dump.geometry(),
            });
        }
        let pattern = dump.spec().input_pattern;
        let slot = self
            .patterns
            .iter()
            .position(|&(p, _)| p == pattern)
            .ok_or(CharacterizeError::PassMismatch {
                pattern,
                expected: 0,
                found: 1,
            })?;
        self.seen[slot] += 1;
        let width = self.patterns.len();
        let payload = dump.payload();
        for (k, &idx) in self.noisy.iter().enumerate() {
            let bit = (payload[(idx / 8) as usize] >> (7 - idx % 8)) & 1;
            self.ones[k * width + slot] += bit as u16;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<CharacterizationMap, CharacterizeError> {
        for (&(pattern, expected), &found) in self.patterns.iter().zip(&self.seen) {
            if expected != found {
                return Err(CharacterizeError::PassMismatch {
                    pattern,
                    expected,
                    found,
                });
            }
        }
        Ok(CharacterizationMap {
            geometry: self.geometry,
            total_measurements: self.patterns.iter().map(|&(_, r)| r).sum(),
            patterns: self.patterns,
            bank_counts: self.bank_counts,
            noisy: self.noisy,
            noisy_ones: self.ones,
            pattern_dependent: self.pattern_dependent,
            campaign_id: self.campaign_id,
            config_digest: None,
        })
    }
}

/// Classifies an in-memory campaign.
pub fn classify(dumps: &[MeasurementDump]) -> Result<CharacterizationMap, CharacterizeError> {
    let mut c = Classifier::new();
    for d in dumps {
        c.observe(d)?;
    }
    let mut counter = c.into_counter()?;
    for d in dumps {
        counter.count(d)?;
    }
    counter.finish()
}

/// Ones counts of one noisy cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellStats {
    pub per_pattern: Vec<(u8, u16)>,
    pub total_measurements: u32,
    pub total_ones: u32,
}

impl CellStats {
    pub fn ones_fraction(&self) -> f64 {
        self.total_ones as f64 / self.total_measurements as f64
    }
}

/// Class assignment for every cell, with ones counts for noisy cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacterizationMap {
    geometry: DramGeometry,
    /// `(pattern, repeats)` in ascending pattern order.
    patterns: Vec<(u8, u32)>,
    total_measurements: u32,
    bank_counts: Vec<[u64; 3]>,
    /// Sorted linear indices of noisy cells.
    noisy: Vec<u64>,
    /// `noisy.len() × patterns.len()` ones counts, row per cell.
    noisy_ones: Vec<u16>,
    pattern_dependent: Vec<u64>,
    campaign_id: String,
    config_digest: Option<String>,
}

/// Per-class fractions, indexed by `CellClass as usize`.
pub type ClassFractions = [f64; 3];

impl CharacterizationMap {
    pub fn geometry(&self) -> DramGeometry {
        self.geometry
    }

    pub fn patterns(&self) -> &[(u8, u32)] {
        &self.patterns
    }

    pub fn total_measurements(&self) -> u32 {
        self.total_measurements
    }

    pub fn campaign_id(&self) -> &str {
        &self.campaign_id
    }

    pub fn config_digest(&self) -> Option<&str> {
        self.config_digest.as_deref()
    }

    pub fn set_config_digest(&mut self, digest: impl Into<String>) {
        self.config_digest = Some(digest.into());
    }

    pub fn bank_counts(&self) -> &[[u64; 3]] {
        &self.bank_counts
    }

    pub fn class_counts(&self) -> [u64; 3] {
        self.bank_counts.iter().fold([0; 3], |mut acc, c| {
            for i in 0..3 {
                acc[i] += c[i];
            }
            acc
        })
    }

    pub fn noisy_count(&self) -> usize {
        self.noisy.len()
    }

    pub fn noisy_indices(&self) -> &[u64] {
        &self.noisy
    }

    pub fn pattern_dependent_indices(&self) -> &[u64] {
        &self.pattern_dependent
    }

    pub fn class_of(&self, addr: CellAddress) -> CellClass {
        let i = self.geometry.linear_index(addr);
        if self.noisy.binary_search(&i).is_ok() {
            CellClass::Noisy
        } else if self.pattern_dependent.binary_search(&i).is_ok() {
            CellClass::PatternDependent
        } else {
            CellClass::PatternIndependent
        }
    }

    /// Total ones of the `k`-th noisy cell.
    pub fn noisy_total_ones(&self, k: usize) -> u32 {
        let w = self.patterns.len();
        self.noisy_ones[k * w..(k + 1) * w]
            .iter()
            .map(|&c| c as u32)
            .sum()
    }

    /// Per-pattern ones counts of the `k`-th noisy cell.
    pub fn noisy_pattern_ones(&self, k: usize) -> &[u16] {
        let w = self.patterns.len();
        &self.noisy_ones[k * w..(k + 1) * w]
    }

    pub fn stats(&self, addr: CellAddress) -> Option<CellStats> {
        let k = self
            .noisy
            .binary_search(&self.geometry.linear_index(addr))
            .ok()?;
        Some(CellStats {
            per_pattern: self
                .patterns
                .iter()
                .zip(self.noisy_pattern_ones(k))
                .map(|(&(p, _), &c)| (p, c))
                .collect(),
            total_measurements: self.total_measurements,
            total_ones: self.noisy_total_ones(k),
        })
    }

    /// Iterates `(address, total_ones)` over noisy cells in canonical order.
    pub fn noisy_cells(&self) -> impl Iterator<Item = (CellAddress, u32)> + '_ {
        self.noisy
            .iter()
            .enumerate()
            .map(|(k, &i)| (self.geometry.address_of(i), self.noisy_total_ones(k)))
    }

    /// Class fractions of each bank.
    pub fn bank_fractions(&self) -> Vec<ClassFractions> {
        let per_bank = self.geometry.cells_per_bank() as f64;
        self.bank_counts
            .iter()
            .map(|c| normalize(c, per_bank))
            .collect()
    }

    /// Class fractions over the whole device.
    pub fn class_fractions(&self) -> ClassFractions {
        normalize(&self.class_counts(), self.geometry.cell_count() as f64)
    }

    /// Histogram of noisy-cell ones counts; bin `k` holds cells with `k`
    /// ones out of `total_measurements`.
    pub fn ones_histogram(&self) -> Result<Vec<u64>, CharacterizeError> {
        if self.noisy.is_empty() {
            return Err(CharacterizeError::NoNoisyCells);
        }
        let mut bins = vec![0u64; self.total_measurements as usize + 1];
        for k in 0..self.noisy.len() {
            bins[self.noisy_total_ones(k) as usize] += 1;
        }
        Ok(bins)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CharacterizeError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&CHARMAP_MAGIC)?;
        w.write_all(&CHARMAP_VERSION.to_le_bytes())?;
        let g = self.geometry;
        for v in [g.banks, g.rows_per_bank, g.cols_per_row] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(self.patterns.len() as u32).to_le_bytes())?;
        for &(p, r) in &self.patterns {
            w.write_all(&[p])?;
            w.write_all(&r.to_le_bytes())?;
        }
        for c in &self.bank_counts {
            for v in c {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        write_str(&mut w, &self.campaign_id)?;
        write_str(&mut w, self.config_digest.as_deref().unwrap_or(""))?;
        w.write_all(&(self.noisy.len() as u64).to_le_bytes())?;
        for v in &self.noisy {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.noisy_ones {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(self.pattern_dependent.len() as u64).to_le_bytes())?;
        for v in &self.pattern_dependent {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CharacterizeError> {
        let mut r = BufReader::new(File::open(path)?);
        let bad = |m: &str| CharacterizeError::Format(m.to_string());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != CHARMAP_MAGIC {
            return Err(bad("bad magic"));
        }
        if read_u16(&mut r)? != CHARMAP_VERSION {
            return Err(bad("unsupported version"));
        }
        let geometry = DramGeometry::new(read_u32(&mut r)?, read_u32(&mut r)?, read_u32(&mut r)?)
            .map_err(|e| bad(&e.to_string()))?;
        let n_patterns = read_u32(&mut r)? as usize;
        if n_patterns > 256 {
            return Err(bad("too many patterns"));
        }
        let mut patterns = Vec::with_capacity(n_patterns);
        for _ in 0..n_patterns {
            let mut p = [0u8; 1];
            r.read_exact(&mut p)?;
            patterns.push((p[0], read_u32(&mut r)?));
        }
        let mut bank_counts = Vec::with_capacity(geometry.banks as usize);
        for _ in 0..geometry.banks {
            bank_counts.push([read_u64(&mut r)?, read_u64(&mut r)?, read_u64(&mut r)?]);
        }
        let campaign_id = read_str(&mut r)?;
        let digest = read_str(&mut r)?;
        let n_noisy = read_u64(&mut r)?;
        if n_noisy > geometry.cell_count() {
            return Err(bad("noisy count exceeds cell count"));
        }
        let noisy = (0..n_noisy)
            .map(|_| read_u64(&mut r))
            .collect::<Result<Vec<_>, _>>()?;
        let noisy_ones = (0..n_noisy as usize * n_patterns)
            .map(|_| read_u16(&mut r))
            .collect::<Result<Vec<_>, _>>()?;
        let n_pd = read_u64(&mut r)?;
        if n_pd > geometry.cell_count() {
            return Err(bad("pattern-dependent count exceeds cell count"));
        }
        let pattern_dependent = (0..n_pd)
            .map(|_| read_u64(&mut r))
            .collect::<Result<Vec<_>, _>>()?;
        let total_measurements = patterns.iter().map(|&(_, r)| r).sum();
        let map = CharacterizationMap {
            geometry,
            patterns,
            total_measurements,
            bank_counts,
            noisy,
            noisy_ones,
            pattern_dependent,
            campaign_id,
            config_digest: (!digest.is_empty()).then_some(digest),
        };
        let sorted = |v: &[u64]| v.windows(2).all(|w| w[0] < w[1]);
        if !sorted(&map.noisy) || !sorted(&map.pattern_dependent) {
            return Err(bad("cell lists are not sorted"));
        }
        if map.class_counts().iter().sum::<u64>() != geometry.cell_count()
            || map.class_counts()[CellClass::Noisy as usize] != n_noisy
        {
            return Err(bad("class counts are inconsistent"));
        }
        Ok(map)
    }
}

fn normalize(counts: &[u64; 3], total: f64) -> ClassFractions {
    [
        counts[0] as f64 / total,
        counts[1] as f64 / total,
        counts[2] as f64 / total,
    ]
}

fn write_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u16).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_str(r: &mut impl Read) -> Result<String, CharacterizeError> {
    let len = read_u16(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| CharacterizeError::Format(e.to_string()))
}

fn read_u16(r: &mut impl Read) -> std::io::Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
