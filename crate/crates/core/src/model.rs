//! Shared domain types: device geometry, cell addresses, operating
//! conditions, measurement settings and packed bitstreams.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("geometry field `{field}` must be at least 1")]
    ZeroDimension { field: &'static str },
    #[error("cols_per_row ({0}) must be divisible by 8")]
    UnpackableRow(u32),
    #[error("t_RP fraction {0} outside (0, 1]")]
    TrpOutOfRange(f64),
    #[error("operating condition {value} {unit} exceeds the bound of ±{bound}")]
    ConditionOutOfRange {
        value: i32,
        bound: i32,
        unit: &'static str,
    },
    #[error("bitstream payload holds {bytes} bytes but {len} bits need {expected}")]
    PayloadLength {
        len: usize,
        bytes: usize,
        expected: usize,
    },
    #[error("bitstream pad bits after bit {0} are not zero")]
    NonZeroPadding(usize),
    #[error("invalid bit character {0:?}")]
    InvalidBitChar(char),
}

/// Banks × pages × bits-per-page of a simulated or captured module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DramGeometry {
    pub banks: u32,
    pub rows_per_bank: u32,
    pub cols_per_row: u32,
}

impl DramGeometry {
    /// One 1 Gbit DDR3 bank: 2^14 pages of 8 KB.
    pub const DDR3_BANK: DramGeometry = DramGeometry {
        banks: 1,
        rows_per_bank: 1 << 14,
        cols_per_row: 1 << 16,
    };

    pub fn new(banks: u32, rows_per_bank: u32, cols_per_row: u32) -> Result<Self, ModelError> {
        let g = DramGeometry {
            banks,
            rows_per_bank,
            cols_per_row,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.banks == 0 {
            return Err(ModelError::ZeroDimension { field: "banks" });
        }
        if self.rows_per_bank == 0 {
            return Err(ModelError::ZeroDimension {
                field: "rows_per_bank",
            });
        }
        if self.cols_per_row == 0 {
            return Err(ModelError::ZeroDimension {
                field: "cols_per_row",
            });
        }
        if !self.cols_per_row.is_multiple_of(8) {
            return Err(ModelError::UnpackableRow(self.cols_per_row));
        }
        Ok(())
    }

    pub fn page_count(&self) -> u64 {
        self.banks as u64 * self.rows_per_bank as u64
    }

    pub fn cell_count(&self) -> u64 {
        self.page_count() * self.cols_per_row as u64
    }

    pub fn cells_per_bank(&self) -> u64 {
        self.rows_per_bank as u64 * self.cols_per_row as u64
    }

    pub fn page_bytes(&self) -> usize {
        self.cols_per_row as usize / 8
    }

    /// Size in bytes of a full bit-packed image of the device.
    pub fn image_bytes(&self) -> usize {
        self.page_count() as usize * self.page_bytes()
    }

    pub fn contains(&self, addr: CellAddress) -> bool {
        addr.bank < self.banks && addr.row < self.rows_per_bank && addr.col < self.cols_per_row
    }

    pub fn contains_page(&self, bank: u32, row: u32) -> bool {
        bank < self.banks && row < self.rows_per_bank
    }

    /// Position of a page in canonical (bank, row) order.
    pub fn page_index(&self, bank: u32, row: u32) -> u64 {
        bank as u64 * self.rows_per_bank as u64 + row as u64
    }

    /// Position of a cell in canonical (bank, row, col) order.
    pub fn linear_index(&self, addr: CellAddress) -> u64 {
        self.page_index(addr.bank, addr.row) * self.cols_per_row as u64 + addr.col as u64
    }

    pub fn address_of(&self, index: u64) -> CellAddress {
        let cols = self.cols_per_row as u64;
        let page = index / cols;
        CellAddress {
            bank: (page / self.rows_per_bank as u64) as u32,
            row: (page % self.rows_per_bank as u64) as u32,
            col: (index % cols) as u32,
        }
    }

    /// Iterates `(bank, row)` over every page in canonical order.
    pub fn pages(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.banks).flat_map(move |b| (0..self.rows_per_bank).map(move |r| (b, r)))
    }
}

impl fmt::Display for DramGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} bank(s) x {} pages x {} bits",
            self.banks, self.rows_per_bank, self.cols_per_row
        )
    }
}

/// Location of one DRAM cell. Ordering is (bank, row, col) lexicographic,
/// which is the canonical order used for enrollment and harvesting.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
pub struct CellAddress {
    pub bank: u32,
    pub row: u32,
    pub col: u32,
}

impl CellAddress {
    pub const fn new(bank: u32, row: u32, col: u32) -> Self {
        CellAddress { bank, row, col }
    }
}

impl fmt::Display for CellAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.bank, self.row, self.col)
    }
}

/// Measurement-invariant / noisy taxonomy of a cell read at reduced t_RP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[repr(u8)]
pub enum CellClass {
    PatternIndependent = 0,
    PatternDependent = 1,
    Noisy = 2,
}

impl CellClass {
    pub const ALL: [CellClass; 3] = [
        CellClass::PatternIndependent,
        CellClass::PatternDependent,
        CellClass::Noisy,
    ];
}

/// Hard bounds on the operating-condition offsets accepted by
/// [`OperatingCondition::with_bounds`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionBounds {
    pub max_abs_mv: i32,
    pub max_abs_celsius: i32,
}

impl Default for ConditionBounds {
    fn default() -> Self {
        ConditionBounds {
            max_abs_mv: 200,
            max_abs_celsius: 60,
        }
    }
}

/// Supply-voltage and temperature offsets from the nominal 1.5 V / 25 °C.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct OperatingCondition {
    pub delta_mv: i16,
    pub delta_celsius: i16,
}

impl OperatingCondition {
    pub const NOMINAL_VOLTS: f64 = 1.5;
    pub const NOMINAL_CELSIUS: f64 = 25.0;

    pub const fn nominal() -> Self {
        OperatingCondition {
            delta_mv: 0,
            delta_celsius: 0,
        }
    }

    pub fn new(delta_mv: i32, delta_celsius: i32) -> Result<Self, ModelError> {
        Self::with_bounds(delta_mv, delta_celsius, ConditionBounds::default())
    }

    pub fn with_bounds(
        delta_mv: i32,
        delta_celsius: i32,
        bounds: ConditionBounds,
    ) -> Result<Self, ModelError> {
        let mv_bound = bounds.max_abs_mv.min(i16::MAX as i32);
        let c_bound = bounds.max_abs_celsius.min(i16::MAX as i32);
        if delta_mv.abs() > mv_bound {
            return Err(ModelError::ConditionOutOfRange {
                value: delta_mv,
                bound: mv_bound,
                unit: "mV",
            });
        }
        if delta_celsius.abs() > c_bound {
            return Err(ModelError::ConditionOutOfRange {
                value: delta_celsius,
                bound: c_bound,
                unit: "°C",
            });
        }
        Ok(OperatingCondition {
            delta_mv: delta_mv as i16,
            delta_celsius: delta_celsius as i16,
        })
    }

    pub fn is_nominal(&self) -> bool {
        self.delta_mv == 0 && self.delta_celsius == 0
    }

    pub fn volts(&self) -> f64 {
        Self::NOMINAL_VOLTS + self.delta_mv as f64 / 1000.0
    }

    pub fn celsius(&self) -> f64 {
        Self::NOMINAL_CELSIUS + self.delta_celsius as f64
    }
}

impl fmt::Display for OperatingCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ΔV={:+}mV ΔT={:+}°C", self.delta_mv, self.delta_celsius)
    }
}

/// Precharge latency as a fraction of the recommended t_RP, held in
/// per-mille so it is exactly representable in dump headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TrpFraction(u16);

impl TrpFraction {
    pub const FULL: TrpFraction = TrpFraction(1000);
    pub const DEFAULT_REDUCED: TrpFraction = TrpFraction(190);

    pub fn from_fraction(fraction: f64) -> Result<Self, ModelError> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(ModelError::TrpOutOfRange(fraction));
        }
        let permille = (fraction * 1000.0).round();
        if permille < 1.0 {
            return Err(ModelError::TrpOutOfRange(fraction));
        }
        Ok(TrpFraction(permille as u16))
    }

    pub fn from_permille(permille: u16) -> Result<Self, ModelError> {
        if permille == 0 || permille > 1000 {
            return Err(ModelError::TrpOutOfRange(permille as f64 / 1000.0));
        }
        Ok(TrpFraction(permille))
    }

    pub fn permille(self) -> u16 {
        self.0
    }

    pub fn fraction(self) -> f64 {
        self.0 as f64 / 1000.0
    }
}

impl Default for TrpFraction {
    fn default() -> Self {
        TrpFraction::DEFAULT_REDUCED
    }
}

impl TryFrom<f64> for TrpFraction {
    type Error = ModelError;
    fn try_from(value: f64) -> Result<Self, Self::Error> {
        TrpFraction::from_fraction(value)
    }
}

impl From<TrpFraction> for f64 {
    fn from(value: TrpFraction) -> f64 {
        value.fraction()
    }
}

/// Settings for one read-back of the device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MeasurementSpec {
    /// Byte replicated across every page before the read.
    pub input_pattern: u8,
    pub t_rp: TrpFraction,
    pub condition: OperatingCondition,
    /// Ordinal of the read; distinct indices give fresh noisy-cell draws.
    pub measurement_index: u32,
}

impl MeasurementSpec {
    pub fn new(input_pattern: u8, t_rp: TrpFraction, condition: OperatingCondition) -> Self {
        MeasurementSpec {
            input_pattern,
            t_rp,
            condition,
            measurement_index: 0,
        }
    }

    pub fn with_index(mut self, measurement_index: u32) -> Self {
        self.measurement_index = measurement_index;
        self
    }

    pub fn with_pattern(mut self, input_pattern: u8) -> Self {
        self.input_pattern = input_pattern;
        self
    }
}

impl Default for MeasurementSpec {
    fn default() -> Self {
        MeasurementSpec::new(
            0xFF,
            TrpFraction::DEFAULT_REDUCED,
            OperatingCondition::nominal(),
        )
    }
}

/// Bit value stored at `col` when `pattern` is replicated across the page.
#[inline]
pub fn pattern_bit(pattern: u8, col: u32) -> bool {
    (pattern >> (7 - (col % 8))) & 1 == 1
}

/// Packed bit sequence, most-significant bit first within each byte.
/// Pad bits in the last byte are always zero.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitStream {
    len: usize,
    bytes: Vec<u8>,
}

impl BitStream {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(bits: usize) -> Self {
        BitStream {
            len: 0,
            bytes: Vec::with_capacity(bits.div_ceil(8)),
        }
    }

    pub fn from_bytes(bytes: Vec<u8>, len: usize) -> Result<Self, ModelError> {
        let expected = len.div_ceil(8);
        if bytes.len() != expected {
            return Err(ModelError::PayloadLength {
                len,
                bytes: bytes.len(),
                expected,
            });
        }
        if !len.is_multiple_of(8) {
            let mask = 0xFFu8 >> (len % 8);
            if bytes[expected - 1] & mask != 0 {
                return Err(ModelError::NonZeroPadding(len));
            }
        }
        Ok(BitStream { len, bytes })
    }

    /// Wraps whole bytes as a stream of `8 * bytes.len()` bits.
    pub fn from_whole_bytes(bytes: Vec<u8>) -> Self {
        BitStream {
            len: bytes.len() * 8,
            bytes,
        }
    }

    /// Parses a string of `0`/`1` characters; whitespace is ignored.
    pub fn from_ascii(s: &str) -> Result<Self, ModelError> {
        let mut out = BitStream::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '0' => out.push(false),
                '1' => out.push(true),
                c if c.is_whitespace() => {}
                c => return Err(ModelError::InvalidBitChar(c)),
            }
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    #[inline]
    pub fn get(&self, i: usize) -> Option<bool> {
        if i >= self.len {
            return None;
        }
        Some((self.bytes[i / 8] >> (7 - (i % 8))) & 1 == 1)
    }

    #[inline]
    pub fn push(&mut self, bit: bool) {
        if self.len.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if bit {
            let last = self.bytes.len() - 1;
            self.bytes[last] |= 0x80 >> (self.len % 8);
        }
        self.len += 1;
    }

    pub fn extend_from(&mut self, other: &BitStream) {
        if self.len.is_multiple_of(8) {
            self.bytes.extend_from_slice(&other.bytes);
            self.len += other.len;
        } else {
            other.iter().for_each(|b| self.push(b));
        }
    }

    /// Drops bits beyond `len`, clearing the new pad bits.
    pub fn truncate(&mut self, len: usize) {
        if len >= self.len {
            return;
        }
        self.bytes.truncate(len.div_ceil(8));
        if !len.is_multiple_of(8) {
            let last = self.bytes.len() - 1;
            self.bytes[last] &= !(0xFFu8 >> (len % 8));
        }
        self.len = len;
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| (self.bytes[i / 8] >> (7 - (i % 8))) & 1 == 1)
    }

    pub fn count_ones(&self) -> u64 {
        self.bytes.iter().map(|b| b.count_ones() as u64).sum()
    }

    /// One byte (0 or 1) per bit.
    pub fn to_unpacked(&self) -> Vec<u8> {
        self.iter().map(u8::from).collect()
    }

    pub fn to_ascii(&self) -> String {
        self.iter().map(|b| if b { '1' } else { '0' }).collect()
    }

    /// Copies `len` bits starting at bit `start`.
    pub fn slice(&self, start: usize, len: usize) -> BitStream {
        assert!(start + len <= self.len, "slice out of range");
        if start.is_multiple_of(8) {
            let mut bytes = self.bytes[start / 8..(start + len).div_ceil(8)].to_vec();
            if !len.is_multiple_of(8) {
                let last = bytes.len() - 1;
                bytes[last] &= !(0xFFu8 >> (len % 8));
            }
            return BitStream { len, bytes };
        }
        (start..start + len)
            .map(|i| (self.bytes[i / 8] >> (7 - (i % 8))) & 1 == 1)
            .collect()
    }

    /// Splits into `count` equal-length streams, dropping the remainder.
    pub fn split_equal(&self, count: usize) -> Vec<BitStream> {
        if count == 0 {
            return Vec::new();
        }
        let each = self.len / count;
        (0..count).map(|i| self.slice(i * each, each)).collect()
    }
}

impl FromIterator<bool> for BitStream {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        let iter = iter.into_iter();
        let mut out = BitStream::with_capacity(iter.size_hint().0);
        for b in iter {
            out.push(b);
        }
        out
    }
}

impl fmt::Debug for BitStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len <= 64 {
            write!(f, "BitStream({})", self.to_ascii())
        } else {
            write!(f, "BitStream({} bits)", self.len)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn page_and_cell_counts() {
        let bank = DramGeometry::DDR3_BANK;
        assert_eq!(bank.cell_count(), 1 << 30);
        assert_eq!(bank.page_count(), 1 << 14);
        assert_eq!(DramGeometry::new(1, 1, 8).unwrap().cell_count(), 8);
        assert_eq!(
            DramGeometry::new(2, 1 << 14, 1 << 16).unwrap().cell_count(),
            1 << 31
        );
    }

    #[test]
    fn geometry_rejects_bad_dimensions() {
        assert!(matches!(
            DramGeometry::new(0, 1, 8),
            Err(ModelError::ZeroDimension { field: "banks" })
        ));
        assert!(matches!(
            DramGeometry::new(1, 1, 12),
            Err(ModelError::UnpackableRow(12))
        ));
    }

    #[test]
    fn linear_index_round_trips() {
        let g = DramGeometry::new(3, 5, 16).unwrap();
        for i in 0..g.cell_count() {
            let a = g.address_of(i);
            assert!(g.contains(a));
            assert_eq!(g.linear_index(a), i);
        }
    }

    #[test]
    fn condition_bounds() {
        assert!(OperatingCondition::new(75, 20).is_ok());
        assert!(OperatingCondition::new(-201, 0).is_err());
        assert!(OperatingCondition::new(0, 61).is_err());
        let wide = ConditionBounds {
            max_abs_mv: 500,
            max_abs_celsius: 100,
        };
        assert!(OperatingCondition::with_bounds(-300, 90, wide).is_ok());
        let nominal = OperatingCondition::nominal();
        assert_eq!(nominal.volts(), 1.5);
        assert_eq!(nominal.celsius(), 25.0);
    }

    #[test]
    fn trp_fraction() {
        assert_eq!(TrpFraction::default().fraction(), 0.19);
        assert_eq!(TrpFraction::from_fraction(1.0).unwrap(), TrpFraction::FULL);
        assert!(TrpFraction::from_fraction(0.0).is_err());
        assert!(TrpFraction::from_fraction(1.2).is_err());
        assert!(TrpFraction::from_fraction(f64::NAN).is_err());
    }

    #[test]
    fn pattern_bits_expand_msb_first() {
        let aa: Vec<bool> = (0..8).map(|c| pattern_bit(0xAA, c)).collect();
        assert_eq!(aa, [true, false, true, false, true, false, true, false]);
        assert!((0..16).all(|c| pattern_bit(0xFF, c)));
        assert!((0..16).all(|c| !pattern_bit(0x00, c)));
    }

    #[test]
    fn bitstream_layout() {
        let s = BitStream::from_ascii("1011 0000 1").unwrap();
        assert_eq!(s.len(), 9);
        assert_eq!(s.as_bytes(), &[0b1011_0000, 0b1000_0000]);
        assert!(BitStream::from_bytes(vec![0xFF, 0x01], 9).is_err());
        assert!(BitStream::from_bytes(vec![0xFF], 9).is_err());
        assert_eq!(s.slice(1, 3).to_ascii(), "011");
        let mut t = s.clone();
        t.truncate(3);
        assert_eq!(t.as_bytes(), &[0b1010_0000]);
        assert_eq!(
            s.split_equal(2).iter().map(|x| x.len()).collect::<Vec<_>>(),
            [4, 4]
        );
    }

    #[test]
    fn address_order_is_bank_row_col() {
        let mut v = vec![
            CellAddress::new(1, 0, 0),
            CellAddress::new(0, 2, 1),
            CellAddress::new(0, 2, 0),
            CellAddress::new(0, 0, 9),
        ];
        v.sort();
        assert_eq!(
            v,
            [
                CellAddress::new(0, 0, 9),
                CellAddress::new(0, 2, 0),
                CellAddress::new(0, 2, 1),
                CellAddress::new(1, 0, 0),
            ]
        );
    }

    proptest! {
        #[test]
        fn pack_unpack_round_trip(bits in proptest::collection::vec(any::<bool>(), 0..4096)) {
            let s: BitStream = bits.iter().copied().collect();
            prop_assert_eq!(s.len(), bits.len());
            prop_assert_eq!(s.as_bytes().len(), bits.len().div_ceil(8));
            let back: Vec<bool> = s.iter().collect();
            prop_assert_eq!(&back, &bits);
            let reparsed = BitStream::from_bytes(s.as_bytes().to_vec(), s.len()).unwrap();
            prop_assert_eq!(reparsed, s);
        }

        #[test]
        fn address_order_matches_linear_index(
            a in (0u32..4, 0u32..16, 0u32..64),
            b in (0u32..4, 0u32..16, 0u32..64),
        ) {
            let g = DramGeometry::new(4, 16, 64).unwrap();
            let x = CellAddress::new(a.0, a.1, a.2);
            let y = CellAddress::new(b.0, b.1, b.2);
            prop_assert_eq!(x.cmp(&y), g.linear_index(x).cmp(&g.linear_index(y)));
        }
    }
}
