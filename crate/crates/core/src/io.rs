//! `DLT1` measurement dumps and the [`MeasurementSource`] abstraction.
//!
//! A dump holds one full read-back of a module: a fixed little-endian
//! header followed by every page, bank-major then row-major, bit-packed
//! MSB-first.
//!
//! ```text
//! magic "DLT1" | version u16 | banks u8 | rows u32 | cols u32 | pattern u8
//! | t_rp permille u16 | dv_mv i16 | dt_c i16 | measurement_index u16
//! | seed u64 | label_len u8 | label utf-8 | payload
//! ```

use crate::model::{
    pattern_bit, CellAddress, DramGeometry, MeasurementSpec, ModelError, OperatingCondition,
    TrpFraction,
};
use crate::sim::{SimError, SimulatedDevice};
use std::fs;
use std::path::Path;
use thiserror::Error;

pub const DUMP_MAGIC: [u8; 4] = *b"DLT1";
pub const DUMP_VERSION: u16 = 1;
/// Header length in bytes up to and including the label length.
pub const FIXED_HEADER_LEN: usize = 33;

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("bad magic {found:02x?}, expected \"DLT1\"")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported dump version {found} (this build reads version {DUMP_VERSION})")]
    UnsupportedVersion { found: u16 },
    #[error("truncated dump: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("payload is {actual} bytes but the header geometry needs {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("invalid dump header: {0}")]
    InvalidHeader(String),
    #[error("value does not fit the dump format: {0}")]
    Unrepresentable(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl From<ModelError> for DumpError {
    fn from(e: ModelError) -> Self {
        DumpError::InvalidHeader(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DumpHeader {
    pub version: u16,
    pub geometry: DramGeometry,
    pub spec: MeasurementSpec,
    /// Simulator seed, or zero for hardware captures.
    pub seed: u64,
    pub label: String,
}

/// One read-back of every page of a module.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasurementDump {
    pub header: DumpHeader,
    payload: Vec<u8>,
}

impl MeasurementDump {
    pub fn new(header: DumpHeader, payload: Vec<u8>) -> Result<Self, DumpError> {
        let expected = header.geometry.image_bytes();
        if payload.len() != expected {
            return Err(DumpError::LengthMismatch {
                expected,
                actual: payload.len(),
            });
        }
        Ok(MeasurementDump { header, payload })
    }

    pub fn geometry(&self) -> DramGeometry {
        self.header.geometry
    }

    pub fn spec(&self) -> &MeasurementSpec {
        &self.header.spec
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn page(&self, bank: u32, row: u32) -> &[u8] {
        let g = self.header.geometry;
        let len = g.page_bytes();
        let start = g.page_index(bank, row) as usize * len;
        &self.payload[start..start + len]
    }

    pub fn bit(&self, addr: CellAddress) -> bool {
        let idx = self.header.geometry.linear_index(addr) as usize;
        (self.payload[idx / 8] >> (7 - idx % 8)) & 1 == 1
    }

    /// True if every bit equals the written pattern.
    pub fn echoes_pattern(&self) -> bool {
        let p = self.header.spec.input_pattern;
        self.payload.iter().all(|&b| b == p)
    }

    pub fn encode(&self) -> Result<Vec<u8>, DumpError> {
        let h = &self.header;
        let g = h.geometry;
        let banks = u8::try_from(g.banks)
            .map_err(|_| DumpError::Unrepresentable(format!("{} banks (max 255)", g.banks)))?;
        let index = u16::try_from(h.spec.measurement_index).map_err(|_| {
            DumpError::Unrepresentable(format!(
                "measurement index {} (max {})",
                h.spec.measurement_index,
                u16::MAX
            ))
        })?;
        let label = h.label.as_bytes();
        let label_len = u8::try_from(label.len()).map_err(|_| {
            DumpError::Unrepresentable(format!("label of {} bytes (max 255)", label.len()))
        })?;

        let mut out = Vec::with_capacity(FIXED_HEADER_LEN + label.len() + self.payload.len());
        out.extend_from_slice(&DUMP_MAGIC);
        out.extend_from_slice(&h.version.to_le_bytes());
        out.push(banks);
        out.extend_from_slice(&g.rows_per_bank.to_le_bytes());
        out.extend_from_slice(&g.cols_per_row.to_le_bytes());
        out.push(h.spec.input_pattern);
        out.extend_from_slice(&h.spec.t_rp.permille().to_le_bytes());
        out.extend_from_slice(&h.spec.condition.delta_mv.to_le_bytes());
        out.extend_from_slice(&h.spec.condition.delta_celsius.to_le_bytes());
        out.extend_from_slice(&index.to_le_bytes());
        out.extend_from_slice(&h.seed.to_le_bytes());
        out.push(label_len);
        out.extend_from_slice(label);
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DumpError> {
        if bytes.len() < DUMP_MAGIC.len() || bytes[..4] != DUMP_MAGIC {
            return Err(DumpError::BadMagic {
                found: bytes[..bytes.len().min(4)].to_vec(),
            });
        }
        if bytes.len() < FIXED_HEADER_LEN {
            return Err(DumpError::Truncated {
                expected: FIXED_HEADER_LEN,
                actual: bytes.len(),
            });
        }
        let mut r = Reader { bytes, pos: 4 };
        let version = r.u16();
        if version != DUMP_VERSION {
            return Err(DumpError::UnsupportedVersion { found: version });
        }
        let banks = r.u8() as u32;
        let rows = r.u32();
        let cols = r.u32();
        let pattern = r.u8();
        let trp = r.u16();
        let dv = r.u16() as i16;
        let dt = r.u16() as i16;
        let index = r.u16();
        let seed = r.u64();
        let label_len = r.u8() as usize;

        let geometry = DramGeometry::new(banks, rows, cols)?;
        let t_rp = TrpFraction::from_permille(trp)?;
        let header_len = FIXED_HEADER_LEN + label_len;
        let expected = header_len + geometry.image_bytes();
        if bytes.len() < expected {
            return Err(DumpError::Truncated {
                expected,
                actual: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(DumpError::LengthMismatch {
                expected: geometry.image_bytes(),
                actual: bytes.len() - header_len,
            });
        }
        let label = std::str::from_utf8(&bytes[FIXED_HEADER_LEN..header_len])
            .map_err(|e| DumpError::InvalidHeader(format!("label is not UTF-8: {e}")))?
            .to_string();
        let spec = MeasurementSpec {
            input_pattern: pattern,
            t_rp,
            condition: OperatingCondition {
                delta_mv: dv,
                delta_celsius: dt,
            },
            measurement_index: index as u32,
        };
        MeasurementDump::new(
            DumpHeader {
                version,
                geometry,
                spec,
                seed,
                label,
            },
            bytes[header_len..].to_vec(),
        )
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out: [u8; N] = self.bytes[self.pos..self.pos + N].try_into().unwrap();
        self.pos += N;
        out
    }
    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }
    fn u16(&mut self) -> u16 {
        u16::from_le_bytes(self.take())
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }
    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DumpError + '_ {
    move |source| DumpError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_dump(path: impl AsRef<Path>, dump: &MeasurementDump) -> Result<(), DumpError> {
    let path = path.as_ref();
    let bytes = dump.encode()?;
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_dump(path: impl AsRef<Path>) -> Result<MeasurementDump, DumpError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    MeasurementDump::decode(&bytes)
}

#[derive(Debug, Error)]
pub enum SourceError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("no dump matches pattern {pattern:#04x}, measurement {index}, {condition}")]
    NoMatchingDump {
        pattern: u8,
        index: u32,
        condition: OperatingCondition,
    },
    #[error("page ({bank}, {row}) outside {geometry}")]
    PageOutOfRange {
        bank: u32,
        row: u32,
        geometry: DramGeometry,
    },
    #[error("dumps disagree on geometry: {first} vs {other}")]
    GeometryMismatch {
        first: DramGeometry,
        other: DramGeometry,
    },
    #[error("no dumps supplied")]
    Empty,
}

/// Anything that can be written with a pattern and read page by page.
pub trait MeasurementSource {
    fn geometry(&self) -> DramGeometry;

    /// Seed recorded in dump headers; zero for hardware.
    fn seed(&self) -> u64 {
        0
    }

    fn label(&self) -> String {
        String::new()
    }

    fn write_pattern(&mut self, pattern: u8) -> Result<(), SourceError>;

    /// Reads one page, bit-packed MSB-first.
    fn acquire(&self, spec: &MeasurementSpec, bank: u32, row: u32) -> Result<Vec<u8>, SourceError>;

    /// Reads selected columns of one page in the given order.
    fn acquire_cells(
        &self,
        spec: &MeasurementSpec,
        bank: u32,
        row: u32,
        cols: &[u32],
    ) -> Result<Vec<bool>, SourceError> {
        let page = self.acquire(spec, bank, row)?;
        Ok(cols
            .iter()
            .map(|&c| pattern_bit(page[c as usize / 8], c))
            .collect())
    }
}

impl MeasurementSource for SimulatedDevice {
    fn geometry(&self) -> DramGeometry {
        SimulatedDevice::geometry(self)
    }

    fn seed(&self) -> u64 {
        SimulatedDevice::seed(self)
    }

    fn label(&self) -> String {
        "simulated".to_string()
    }

    fn write_pattern(&mut self, pattern: u8) -> Result<(), SourceError> {
        SimulatedDevice::write_pattern(self, pattern);
        Ok(())
    }

    fn acquire(&self, spec: &MeasurementSpec, bank: u32, row: u32) -> Result<Vec<u8>, SourceError> {
        Ok(self.read_page(bank, row, spec)?)
    }

    fn acquire_cells(
        &self,
        spec: &MeasurementSpec,
        bank: u32,
        row: u32,
        cols: &[u32],
    ) -> Result<Vec<bool>, SourceError> {
        Ok(self.read_cells(bank, row, cols, spec)?)
    }
}

/// Replays previously captured dumps as a source.
///
/// A read is served by the dump whose pattern, measurement index and
/// operating condition equal the request.
#[derive(Debug, Clone)]
pub struct DumpSource {
    geometry: DramGeometry,
    dumps: Vec<MeasurementDump>,
    pattern: u8,
}

impl DumpSource {
    pub fn new(dumps: Vec<MeasurementDump>) -> Result<Self, SourceError> {
        let first = dumps.first().ok_or(SourceError::Empty)?.geometry();
        if let Some(d) = dumps.iter().find(|d| d.geometry() != first) {
            return Err(SourceError::GeometryMismatch {
                first,
                other: d.geometry(),
            });
        }
        Ok(DumpSource {
            geometry: first,
            pattern: dumps[0].spec().input_pattern,
            dumps,
        })
    }

    pub fn dumps(&self) -> &[MeasurementDump] {
        &self.dumps
    }

    fn find(&self, spec: &MeasurementSpec) -> Result<&MeasurementDump, SourceError> {
        self.dumps
            .iter()
            .find(|d| {
                let s = d.spec();
                s.input_pattern == spec.input_pattern
                    && s.measurement_index == spec.measurement_index
                    && s.condition == spec.condition
            })
            .ok_or(SourceError::NoMatchingDump {
                pattern: spec.input_pattern,
                index: spec.measurement_index,
                condition: spec.condition,
            })
    }
}

impl MeasurementSource for DumpSource {
    fn geometry(&self) -> DramGeometry {
        self.geometry
    }

    fn seed(&self) -> u64 {
        self.dumps[0].header.seed
    }

    fn label(&self) -> String {
        self.dumps[0].header.label.clone()
    }

    fn write_pattern(&mut self, pattern: u8) -> Result<(), SourceError> {
        self.pattern = pattern;
        Ok(())
    }

    fn acquire(&self, spec: &MeasurementSpec, bank: u32, row: u32) -> Result<Vec<u8>, SourceError> {
        if !self.geometry.contains_page(bank, row) {
            return Err(SourceError::PageOutOfRange {
                bank,
                row,
                geometry: self.geometry,
            });
        }
        if spec.input_pattern != self.pattern {
            return Err(SourceError::Sim(SimError::PatternMismatch {
                stored: self.pattern,
                requested: spec.input_pattern,
            }));
        }
        Ok(self.find(spec)?.page(bank, row).to_vec())
    }
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("a campaign needs at least one pattern and one repeat")]
    Empty,
    #[error("acquisition failed for pattern {pattern:#04x}, repeat {repeat}: {source}")]
    Acquire {
        pattern: u8,
        repeat: u32,
        #[source]
        source: SourceError,
    },
    #[error(transparent)]
    Dump(#[from] DumpError),
}

/// Captures `patterns.len() × repeats` dumps, pattern-major.
///
/// Measurement indices count up from `template.measurement_index`.
pub fn capture_campaign<S: MeasurementSource + ?Sized>(
    source: &mut S,
    patterns: &[u8],
    repeats: u32,
    template: &MeasurementSpec,
) -> Result<Vec<MeasurementDump>, CampaignError> {
    if patterns.is_empty() || repeats == 0 {
        return Err(CampaignError::Empty);
    }
    let geometry = source.geometry();
    let mut dumps = Vec::with_capacity(patterns.len() * repeats as usize);
    let mut index = template.measurement_index;
    for &pattern in patterns {
        source
            .write_pattern(pattern)
            .map_err(|source| CampaignError::Acquire {
                pattern,
                repeat: 0,
                source,
            })?;
        for repeat in 0..repeats {
            let spec = template.with_pattern(pattern).with_index(index);
            let mut payload = Vec::with_capacity(geometry.image_bytes());
            for (bank, row) in geometry.pages() {
                let page =
                    source
                        .acquire(&spec, bank, row)
                        .map_err(|source| CampaignError::Acquire {
                            pattern,
                            repeat,
                            source,
                        })?;
                payload.extend_from_slice(&page);
            }
            let header = DumpHeader {
                version: DUMP_VERSION,
                geometry,
                spec,
                seed: source.seed(),
                label: source.label(),
            };
            dumps.push(MeasurementDump::new(header, payload)?);
            index += 1;
        }
    }
    Ok(dumps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_dump() -> MeasurementDump {
        let geometry = DramGeometry::new(1, 2, 64).unwrap();
        let spec = MeasurementSpec::new(
            0xAA,
            TrpFraction::DEFAULT_REDUCED,
            OperatingCondition::new(-20, 5).unwrap(),
        )
        .with_index(3);
        let header = DumpHeader {
            version: DUMP_VERSION,
            geometry,
            spec,
            seed: 0x0102_0304_0506_0708,
            label: "lab".into(),
        };
        MeasurementDump::new(header, (0u8..16).collect()).unwrap()
    }

    #[test]
    fn golden_header_bytes() {
        let bytes = sample_dump().encode().unwrap();
        let expected_header: [u8; 36] = [
            b'D', b'L', b'T', b'1', // magic
            1, 0, // version
            1, // banks
            2, 0, 0, 0, // rows
            64, 0, 0, 0,    // cols
            0xAA, // pattern
            190, 0, // t_rp permille
            0xEC, 0xFF, // -20 mV
            5, 0, // +5 C
            3, 0, // measurement index
            8, 7, 6, 5, 4, 3, 2, 1, // seed
            3, b'l', b'a', b'b',
        ];
        assert_eq!(&bytes[..36], &expected_header);
        assert_eq!(&bytes[36..], &(0u8..16).collect::<Vec<_>>()[..]);
    }

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.dlt");
        let dump = sample_dump();
        write_dump(&path, &dump).unwrap();
        let back = read_dump(&path).unwrap();
        assert_eq!(back, dump);
        assert_eq!(back.encode().unwrap(), dump.encode().unwrap());
    }

    #[test]
    fn decode_errors_are_distinct() {
        let good = sample_dump().encode().unwrap();

        let mut bad = good.clone();
        bad[3] = b'2';
        assert!(matches!(
            MeasurementDump::decode(&bad),
            Err(DumpError::BadMagic { .. })
        ));

        let mut bad = good.clone();
        bad[4] = 9;
        assert!(matches!(
            MeasurementDump::decode(&bad),
            Err(DumpError::UnsupportedVersion { found: 9 })
        ));

        match MeasurementDump::decode(&good[..good.len() - 1]) {
            Err(DumpError::Truncated { expected, actual }) => {
                assert_eq!(expected, good.len());
                assert_eq!(actual, good.len() - 1);
            }
            other => panic!("{other:?}"),
        }

        let mut long = good.clone();
        long.push(0);
        assert!(matches!(
            MeasurementDump::decode(&long),
            Err(DumpError::LengthMismatch {
                expected: 16,
                actual: 17
            })
        ));

        let mut bad = good.clone();
        bad[11] = 7; // cols = 7
        assert!(matches!(
            MeasurementDump::decode(&bad),
            Err(DumpError::InvalidHeader(_))
        ));

        assert!(matches!(
            MeasurementDump::decode(&good[..10]),
            Err(DumpError::Truncated { .. })
        ));
    }

    #[test]
    fn rejects_unrepresentable_headers() {
        let mut dump = sample_dump();
        dump.header.spec.measurement_index = 70_000;
        assert!(matches!(dump.encode(), Err(DumpError::Unrepresentable(_))));
        let geometry = DramGeometry::new(1, 2, 64).unwrap();
        let mut h = sample_dump().header;
        h.geometry = DramGeometry::new(1, 1, 64).unwrap();
        assert!(MeasurementDump::new(h, vec![0; 16]).is_err());
        assert_eq!(geometry.image_bytes(), 16);
    }

    #[test]
    fn campaign_layout_and_headers() {
        let g = DramGeometry::new(1, 4, 128).unwrap();
        let mut dev = SimulatedDevice::from_preset(g, "micron", 1).unwrap();
        let template = MeasurementSpec::new(
            0,
            TrpFraction::DEFAULT_REDUCED,
            OperatingCondition::new(0, 20).unwrap(),
        );
        let dumps = capture_campaign(&mut dev, &[0xFF, 0xAA, 0x55, 0x00], 2, &template).unwrap();
        assert_eq!(dumps.len(), 8);
        for (i, d) in dumps.iter().enumerate() {
            assert_eq!(d.spec().measurement_index, i as u32);
            assert_eq!(d.spec().input_pattern, [0xFF, 0xAA, 0x55, 0x00][i / 2]);
            assert_eq!(d.spec().condition.delta_celsius, 20);
            assert_eq!(d.header.seed, 1);
        }
        let one = capture_campaign(&mut dev, &[0x00], 1, &template).unwrap();
        assert_eq!(one.len(), 1);
        assert!(matches!(
            capture_campaign(&mut dev, &[0x00], 0, &template),
            Err(CampaignError::Empty)
        ));
    }

    #[test]
    fn dump_source_replays_campaign() {
        let g = DramGeometry::new(2, 3, 64).unwrap();
        let mut dev = SimulatedDevice::from_preset(g, "samsung-a", 4).unwrap();
        let template = MeasurementSpec::default();
        let dumps = capture_campaign(&mut dev, &[0xFF, 0x00], 2, &template).unwrap();
        let mut replay = DumpSource::new(dumps.clone()).unwrap();
        let again = capture_campaign(&mut replay, &[0xFF, 0x00], 2, &template).unwrap();
        assert_eq!(
            dumps.iter().map(|d| d.payload()).collect::<Vec<_>>(),
            again.iter().map(|d| d.payload()).collect::<Vec<_>>()
        );
        let spec = template.with_pattern(0x00).with_index(99);
        assert!(matches!(
            replay.acquire(&spec, 0, 0),
            Err(SourceError::NoMatchingDump { .. })
        ));
        let cells = replay
            .acquire_cells(&spec.with_index(2), 1, 2, &[0, 63])
            .unwrap();
        assert_eq!(
            cells,
            dev.read_cells(1, 2, &[0, 63], &spec.with_index(2)).unwrap()
        );
    }

    #[test]
    fn fault_free_reads_echo_pattern() {
        let g = DramGeometry::new(1, 2, 64).unwrap();
        let mut dev = SimulatedDevice::from_preset(g, "micron", 1).unwrap();
        let full = MeasurementSpec::new(0, TrpFraction::FULL, OperatingCondition::nominal());
        let dumps = capture_campaign(&mut dev, &[0x55, 0xAA], 2, &full).unwrap();
        assert!(dumps.iter().all(|d| d.echoes_pattern()));
    }
}
