//! Raw-bit harvesting from enrolled cells, hash conditioning and the
//! throughput model.

use crate::filter::FilterSet;
use crate::io::{MeasurementSource, SourceError};
use crate::model::{BitStream, MeasurementSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256, Sha512};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("the enrollment set is empty")]
    EmptyFilterSet,
    #[error("requested length must be at least 1 bit")]
    ZeroLength,
    #[error("raw input has {len} bits, fewer than one {block}-bit block")]
    ShortInput { len: usize, block: usize },
    #[error("enrollment geometry {enrolled} does not match the source geometry {source_geometry}")]
    GeometryMismatch {
        enrolled: crate::model::DramGeometry,
        source_geometry: crate::model::DramGeometry,
    },
    #[error("measurement index overflowed after {rounds} read rounds")]
    IndexOverflow { rounds: u64 },
    #[error("throughput parameter `{0}` must be strictly positive and finite")]
    InvalidParam(&'static str),
    #[error(transparent)]
    Source(#[from] SourceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum HashAlgorithm {
    #[default]
    #[serde(rename = "sha-256", alias = "sha256")]
    Sha256,
    #[serde(rename = "sha-512", alias = "sha512")]
    Sha512,
}

impl std::fmt::Display for HashAlgorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HashAlgorithm::Sha256 => "sha-256",
            HashAlgorithm::Sha512 => "sha-512",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConditionerConfig {
    pub algorithm: HashAlgorithm,
}

impl ConditionerConfig {
    pub fn new(algorithm: HashAlgorithm) -> Self {
        ConditionerConfig { algorithm }
    }

    /// Input block size in bits.
    pub fn block_bits(&self) -> usize {
        match self.algorithm {
            HashAlgorithm::Sha256 => 512,
            HashAlgorithm::Sha512 => 1024,
        }
    }

    /// Digest size in bits.
    pub fn digest_bits(&self) -> usize {
        match self.algorithm {
            HashAlgorithm::Sha256 => 256,
            HashAlgorithm::Sha512 => 512,
        }
    }

    fn digest(&self, block: &[u8]) -> Vec<u8> {
        match self.algorithm {
            HashAlgorithm::Sha256 => Sha256::digest(block).to_vec(),
            HashAlgorithm::Sha512 => Sha512::digest(block).to_vec(),
        }
    }
}

/// First measurement index used for generation; campaign indices fit in the
/// 16-bit dump header field and therefore never reach it.
pub const GENERATION_BASE_INDEX: u32 = 1 << 16;

/// Reads `n_raw_bits` from the enrolled cells.
///
/// Each round reads every member once in canonical order at measurement
/// index `spec.measurement_index + round`; the last round may stop early.
pub fn harvest<S: MeasurementSource + ?Sized>(
    source: &mut S,
    fset: &FilterSet,
    spec: &MeasurementSpec,
    n_raw_bits: usize,
) -> Result<BitStream, ExtractError> {
    if fset.is_empty() {
        return Err(ExtractError::EmptyFilterSet);
    }
    if n_raw_bits == 0 {
        return Err(ExtractError::ZeroLength);
    }
    if fset.geometry != source.geometry() {
        return Err(ExtractError::GeometryMismatch {
            enrolled: fset.geometry,
            source_geometry: source.geometry(),
        });
    }
    source.write_pattern(spec.input_pattern)?;
    let pages = fset.pages();
    let mut out = BitStream::with_capacity(n_raw_bits);
    let mut round = 0u64;
    while out.len() < n_raw_bits {
        let index = u32::try_from(spec.measurement_index as u64 + round)
            .map_err(|_| ExtractError::IndexOverflow { rounds: round })?;
        let read = spec.with_index(index);
        for ((bank, row), cols) in &pages {
            let need = n_raw_bits - out.len();
            let cols = &cols[..cols.len().min(need)];
            for bit in source.acquire_cells(&read, *bank, *row, cols)? {
                out.push(bit);
            }
            if out.len() == n_raw_bits {
                break;
            }
        }
        round += 1;
    }
    Ok(out)
}

/// Hashes consecutive non-overlapping blocks; a trailing partial block is
/// dropped.
pub fn condition(raw: &BitStream, cfg: &ConditionerConfig) -> Result<BitStream, ExtractError> {
    let block = cfg.block_bits();
    if raw.len() < block {
        return Err(ExtractError::ShortInput {
            len: raw.len(),
            block,
        });
    }
    let blocks = raw.len() / block;
    let bytes = &raw.as_bytes()[..blocks * block / 8];
    let digests: Vec<Vec<u8>> = bytes
        .par_chunks(block / 8)
        .map(|chunk| cfg.digest(chunk))
        .collect();
    Ok(BitStream::from_whole_bytes(digests.concat()))
}

/// Harvests and conditions exactly `n_out_bits` of output.
pub fn generate<S: MeasurementSource + ?Sized>(
    source: &mut S,
    fset: &FilterSet,
    cfg: &ConditionerConfig,
    n_out_bits: usize,
    spec: &MeasurementSpec,
) -> Result<BitStream, ExtractError> {
    if n_out_bits == 0 {
        return Err(ExtractError::ZeroLength);
    }
    let blocks = n_out_bits.div_ceil(cfg.digest_bits());
    let raw = harvest(source, fset, spec, blocks * cfg.block_bits())?;
    let mut out = condition(&raw, cfg)?;
    out.truncate(n_out_bits);
    Ok(out)
}

/// Inputs to the throughput model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputParams {
    pub digest_bits: f64,
    pub block_bits: f64,
    pub avg_random_bits_per_page: f64,
    pub page_read_time_s: f64,
    pub hash_cycles_per_byte: f64,
    pub clock_hz: f64,
}

impl ThroughputParams {
    /// SHA-256 on a 2.2 GHz host reading 84.7 bits from each 91.2 µs page.
    pub fn reference() -> Self {
        ThroughputParams {
            digest_bits: 256.0,
            block_bits: 512.0,
            avg_random_bits_per_page: 84.7,
            page_read_time_s: 91.2e-6,
            hash_cycles_per_byte: 3.78,
            clock_hz: 2.2e9,
        }
    }

    pub fn validate(&self) -> Result<(), ExtractError> {
        let fields = [
            ("digest_bits", self.digest_bits),
            ("block_bits", self.block_bits),
            ("avg_random_bits_per_page", self.avg_random_bits_per_page),
            ("page_read_time_s", self.page_read_time_s),
            ("hash_cycles_per_byte", self.hash_cycles_per_byte),
            ("clock_hz", self.clock_hz),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ExtractError::InvalidParam(name));
            }
        }
        Ok(())
    }

    pub fn hash_time_s(&self) -> f64 {
        self.block_bits / 8.0 * self.hash_cycles_per_byte / self.clock_hz
    }

    pub fn data_time_s(&self) -> f64 {
        self.block_bits / self.avg_random_bits_per_page * self.page_read_time_s
    }
}

/// Output bit rate in bits per second.
pub fn throughput(params: &ThroughputParams) -> Result<f64, ExtractError> {
    params.validate()?;
    Ok(params.digest_bits / (params.data_time_s() + params.hash_time_s()))
}

/// Throughput as the page read time goes to zero.
pub fn hash_bound_throughput(params: &ThroughputParams) -> Result<f64, ExtractError> {
    params.validate()?;
    Ok(params.digest_bits / params.hash_time_s())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{BiasWindow, WindowMode};
    use crate::model::{CellAddress, DramGeometry};
    use crate::sim::{PopulationConfig, SimulatedDevice};

    fn tiny() -> (SimulatedDevice, FilterSet) {
        let g = DramGeometry::new(1, 4, 64).unwrap();
        let dev = SimulatedDevice::build(g, PopulationConfig::ideal_noisy(0.5), 8).unwrap();
        let members = vec![
            CellAddress::new(0, 2, 9),
            CellAddress::new(0, 0, 3),
            CellAddress::new(0, 0, 40),
        ];
        let set = FilterSet::new(
            g,
            BiasWindow::default(),
            WindowMode::Pooled,
            20,
            String::new(),
            members,
        );
        (dev, set)
    }

    #[test]
    fn harvest_cycles_rounds_in_canonical_order() {
        let (mut dev, set) = tiny();
        let spec = MeasurementSpec::default().with_index(100);
        let seven = harvest(&mut dev, &set, &spec, 7).unwrap();
        assert_eq!(seven.len(), 7);
        let mut expected = Vec::new();
        for round in 0..3u32 {
            let s = spec.with_index(100 + round);
            for m in set.members() {
                expected.push(dev.read_cells(m.bank, m.row, &[m.col], &s).unwrap()[0]);
            }
        }
        assert_eq!(seven.iter().collect::<Vec<_>>(), expected[..7]);
        let three = harvest(&mut dev, &set, &spec, 3).unwrap();
        assert_eq!(three.iter().collect::<Vec<_>>(), expected[..3]);
    }

    #[test]
    fn harvest_errors() {
        let (mut dev, set) = tiny();
        let spec = MeasurementSpec::default();
        assert!(matches!(
            harvest(&mut dev, &set, &spec, 0),
            Err(ExtractError::ZeroLength)
        ));
        let empty = FilterSet::new(
            set.geometry,
            set.window,
            set.mode,
            20,
            String::new(),
            vec![],
        );
        assert!(matches!(
            harvest(&mut dev, &empty, &spec, 8),
            Err(ExtractError::EmptyFilterSet)
        ));
        let other = FilterSet::new(
            DramGeometry::new(1, 8, 64).unwrap(),
            set.window,
            set.mode,
            20,
            String::new(),
            set.members().to_vec(),
        );
        assert!(matches!(
            harvest(&mut dev, &other, &spec, 8),
            Err(ExtractError::GeometryMismatch { .. })
        ));
        let late = spec.with_index(u32::MAX);
        assert!(matches!(
            harvest(&mut dev, &set, &late, 7),
            Err(ExtractError::IndexOverflow { .. })
        ));
    }

    #[test]
    fn sha256_known_answer() {
        let cfg = ConditionerConfig::default();
        let zeros = condition(&BitStream::from_whole_bytes(vec![0u8; 64]), &cfg).unwrap();
        assert_eq!(
            hex::encode(zeros.as_bytes()),
            "f5a5fd42d16a20302798ef6ed309979b43003d2320d9f0e8ea9831a92759fb4b"
        );
        let mut block = b"abc".to_vec();
        block.resize(64, 0);
        let abc = condition(&BitStream::from_whole_bytes(block), &cfg).unwrap();
        assert_eq!(
            hex::encode(abc.as_bytes()),
            "a4041e70d4b31e18edb128099f3f7ab68cab82e1207e7093542492c31f68b549"
        );
    }

    #[test]
    fn sha512_known_answer() {
        let raw = BitStream::from_whole_bytes(vec![0u8; 128]);
        let cfg = ConditionerConfig::new(HashAlgorithm::Sha512);
        let out = condition(&raw, &cfg).unwrap();
        assert_eq!(out.len(), 512);
        assert_eq!(
            hex::encode(&out.as_bytes()[..16]),
            "ab942f526272e456ed68a979f5020290"
        );
    }

    #[test]
    fn condition_block_arithmetic() {
        let cfg = ConditionerConfig::default();
        let bits = |n: usize| (0..n).map(|i| i % 3 == 0).collect::<BitStream>();
        assert_eq!(condition(&bits(1023), &cfg).unwrap().len(), 256);
        assert_eq!(
            condition(&bits(1023), &cfg).unwrap(),
            condition(&bits(512), &cfg).unwrap()
        );
        assert_eq!(condition(&bits(1024), &cfg).unwrap().len(), 512);
        assert!(matches!(
            condition(&bits(511), &cfg),
            Err(ExtractError::ShortInput {
                len: 511,
                block: 512
            })
        ));
    }

    #[test]
    fn generate_lengths_and_determinism() {
        let (mut dev, set) = tiny();
        let cfg = ConditionerConfig::default();
        let spec = MeasurementSpec::default();
        let a = generate(&mut dev, &set, &cfg, 256, &spec).unwrap();
        assert_eq!(a.len(), 256);
        let raw = harvest(&mut dev, &set, &spec, 512).unwrap();
        assert_eq!(a, condition(&raw, &cfg).unwrap());
        let b = generate(&mut dev, &set, &cfg, 2560, &spec).unwrap();
        assert_eq!(b.len(), 2560);
        let c = generate(&mut dev, &set, &cfg, 2560, &spec).unwrap();
        assert_eq!(b, c);
        assert_eq!(
            generate(&mut dev, &set, &cfg, 300, &spec).unwrap().len(),
            300
        );
        assert!(matches!(
            generate(&mut dev, &set, &cfg, 0, &spec),
            Err(ExtractError::ZeroLength)
        ));
    }

    #[test]
    fn throughput_model() {
        let p = ThroughputParams::reference();
        let t = throughput(&p).unwrap();
        assert!((p.hash_time_s() - 0.11e-6).abs() < 0.005e-6);
        assert!((t / 0.47e6 - 1.0).abs() < 0.05, "{t}");
        let ceiling = hash_bound_throughput(&p).unwrap();
        assert!((ceiling / 2.33e9 - 1.0).abs() < 0.01, "{ceiling}");
        let mut denser = p;
        denser.avg_random_bits_per_page *= 2.0;
        assert!(throughput(&denser).unwrap() > t);
        let mut bad = p;
        bad.clock_hz = 0.0;
        assert!(matches!(
            throughput(&bad),
            Err(ExtractError::InvalidParam("clock_hz"))
        ));
    }
}
