//! Behavioral simulator of a DRAM module read at reduced precharge latency.
//!
//! Each cell is assigned one of three behaviors (stuck at a value, a
//! function of the stored bit, or a biased coin) as a pure function of
//! `(seed, address, population)`. Noisy reads draw from a counter-based
//! stream keyed by `(seed, address, measurement_index)`, so a given read is
//! reproducible regardless of the order in which pages are visited.

mod presets;

pub use presets::{preset, PRESET_NAMES};

use crate::model::{
    pattern_bit, CellAddress, CellClass, DramGeometry, MeasurementSpec, ModelError,
    OperatingCondition, TrpFraction,
};
use crate::rng::{mix64, threshold53, CounterRng};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};
use thiserror::Error;

/// Number of quantiles used to discretize each noisy-bias component.
const QUANTILES: usize = 4096;
const QUANTILE_SHIFT: u32 = 53 - 12;

const DOMAIN_BEHAVIOR: u64 = 1;
const DOMAIN_NOISE: u64 = 2;
const SALT_STUCK: u64 = 0x5354_5543_4B00_0001;
const SALT_COMPONENT: u64 = 0x434F_4D50_0000_0002;
const SALT_QUANTILE: u64 = 0x5155_414E_5400_0003;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid population: {0}")]
    InvalidPopulation(String),
    #[error("unknown population preset `{0}`")]
    UnknownPreset(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("page ({bank}, {row}) outside {geometry}")]
    PageOutOfRange {
        bank: u32,
        row: u32,
        geometry: DramGeometry,
    },
    #[error("column {col} outside a {cols}-bit page")]
    ColumnOutOfRange { col: u32, cols: u32 },
    #[error("read requested pattern {requested:#04x} but the device holds {stored:#04x}")]
    PatternMismatch { stored: u8, requested: u8 },
}

/// Output of a pattern-dependent cell as a function of its stored bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternMap {
    Identity,
    #[default]
    Complement,
}

impl PatternMap {
    #[inline]
    pub fn apply(self, stored: bool) -> bool {
        match self {
            PatternMap::Identity => stored,
            PatternMap::Complement => !stored,
        }
    }
}

/// Ground-truth behavior of one cell at reduced t_RP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellBehavior {
    PatternIndependent {
        stuck: bool,
    },
    PatternDependent {
        map: PatternMap,
    },
    /// Probability of reading `1` at the nominal condition.
    Noisy {
        bias: f64,
    },
}

impl CellBehavior {
    pub fn class(&self) -> CellClass {
        match self {
            CellBehavior::PatternIndependent { .. } => CellClass::PatternIndependent,
            CellBehavior::PatternDependent { .. } => CellClass::PatternDependent,
            CellBehavior::Noisy { .. } => CellClass::Noisy,
        }
    }
}

/// Distribution of the nominal one-probability of noisy cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BiasDistribution {
    Beta {
        alpha: f64,
        beta: f64,
    },
    /// Point mass; used for ideal-coin control populations.
    Fixed {
        p: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub bias: BiasDistribution,
}

impl MixtureComponent {
    pub fn beta(weight: f64, alpha: f64, beta: f64) -> Self {
        MixtureComponent {
            weight,
            bias: BiasDistribution::Beta { alpha, beta },
        }
    }

    pub fn fixed(weight: f64, p: f64) -> Self {
        MixtureComponent {
            weight,
            bias: BiasDistribution::Fixed { p },
        }
    }
}

/// Logit-linear drift of noisy-cell bias with supply voltage and temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionCoefficients {
    pub per_mv: f64,
    pub per_celsius: f64,
}

impl Default for ConditionCoefficients {
    fn default() -> Self {
        ConditionCoefficients {
            per_mv: 0.002,
            per_celsius: 0.005,
        }
    }
}

impl ConditionCoefficients {
    pub fn logit_shift(&self, condition: OperatingCondition) -> f64 {
        self.per_mv * condition.delta_mv as f64 + self.per_celsius * condition.delta_celsius as f64
    }
}

/// `logistic(logit(p) + shift)`, the condition-adjusted one-probability.
pub fn shifted_bias(p: f64, shift: f64) -> f64 {
    if shift == 0.0 {
        return p;
    }
    let logit = (p / (1.0 - p)).ln();
    1.0 / (1.0 + (-(logit + shift)).exp())
}

/// Cell-class proportions and noisy-bias model of a device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub frac_pattern_independent: f64,
    pub frac_pattern_dependent: f64,
    pub frac_noisy: f64,
    /// Probability that a pattern-independent cell is stuck at `1`.
    pub stuck_value_weight: f64,
    pub noisy_bias_mixture: Vec<MixtureComponent>,
    #[serde(default)]
    pub condition_coeffs: ConditionCoefficients,
    #[serde(default)]
    pub pattern_dependent_map: PatternMap,
}

impl PopulationConfig {
    /// Every cell stuck; no noise at all.
    pub fn all_pattern_independent(stuck_value_weight: f64) -> Self {
        PopulationConfig {
            frac_pattern_independent: 1.0,
            frac_pattern_dependent: 0.0,
            frac_noisy: 0.0,
            stuck_value_weight,
            noisy_bias_mixture: vec![MixtureComponent::fixed(1.0, 0.5)],
            condition_coeffs: ConditionCoefficients::default(),
            pattern_dependent_map: PatternMap::default(),
        }
    }

    /// Every cell a noisy cell with exactly the given one-probability.
    pub fn ideal_noisy(p: f64) -> Self {
        PopulationConfig {
            frac_pattern_independent: 0.0,
            frac_pattern_dependent: 0.0,
            frac_noisy: 1.0,
            stuck_value_weight: 0.5,
            noisy_bias_mixture: vec![MixtureComponent::fixed(1.0, p)],
            condition_coeffs: ConditionCoefficients::default(),
            pattern_dependent_map: PatternMap::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidPopulation(msg));
        let fracs = [
            ("frac_pattern_independent", self.frac_pattern_independent),
            ("frac_pattern_dependent", self.frac_pattern_dependent),
            ("frac_noisy", self.frac_noisy),
        ];
        for (name, v) in fracs {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0, 1]"));
            }
        }
        let sum: f64 = fracs.iter().map(|(_, v)| v).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("class fractions sum to {sum}, not 1"));
        }
        if !(0.0..=1.0).contains(&self.stuck_value_weight) {
            return bad(format!(
                "stuck_value_weight = {} outside [0, 1]",
                self.stuck_value_weight
            ));
        }
        if self.noisy_bias_mixture.is_empty() {
            return bad("noisy_bias_mixture is empty".into());
        }
        let mut wsum = 0.0;
        for (i, c) in self.noisy_bias_mixture.iter().enumerate() {
            if !(c.weight >= 0.0 && c.weight.is_finite()) {
                return bad(format!("mixture component {i} has weight {}", c.weight));
            }
            wsum += c.weight;
            match c.bias {
                BiasDistribution::Beta { alpha, beta } => {
                    if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
                        return bad(format!(
                            "mixture component {i}: Beta({alpha}, {beta}) parameters must be > 0"
                        ));
                    }
                }
                BiasDistribution::Fixed { p } => {
                    if !(p > 0.0 && p < 1.0) {
                        return bad(format!(
                            "mixture component {i}: fixed bias {p} outside (0, 1)"
                        ));
                    }
                }
            }
        }
        if (wsum - 1.0).abs() > 1e-9 {
            return bad(format!("mixture weights sum to {wsum}, not 1"));
        }
        let k = self.condition_coeffs;
        if !(k.per_mv.is_finite() && k.per_celsius.is_finite()) {
            return bad("condition coefficients must be finite".into());
        }
        Ok(())
    }
}

/// Quantile tables for the noisy-bias mixture.
#[derive(Debug, Clone)]
struct BiasSampler {
    /// Cumulative component weights as 53-bit thresholds.
    cuts: Vec<u64>,
    tables: Vec<Vec<f64>>,
}

impl BiasSampler {
    fn new(mixture: &[MixtureComponent]) -> Result<Self, SimError> {
        let mut cuts = Vec::with_capacity(mixture.len());
        let mut tables = Vec::with_capacity(mixture.len());
        let mut acc = 0.0;
        for c in mixture {
            acc += c.weight;
            cuts.push(threshold53(acc));
            tables.push(match c.bias {
                BiasDistribution::Fixed { p } => vec![p],
                BiasDistribution::Beta { alpha, beta } => {
                    let dist = Beta::new(alpha, beta)
                        .map_err(|e| SimError::InvalidPopulation(e.to_string()))?;
                    (0..QUANTILES)
                        .map(|i| {
                            let u = (i as f64 + 0.5) / QUANTILES as f64;
                            dist.inverse_cdf(u).clamp(1e-9, 1.0 - 1e-9)
                        })
                        .collect()
                }
            });
        }
        // Guard against rounding leaving the top sliver unassigned.
        if let Some(last) = cuts.last_mut() {
            *last = 1u64 << 53;
        }
        Ok(BiasSampler { cuts, tables })
    }

    #[inline]
    fn sample(&self, h: u64) -> f64 {
        let c = (mix64(h ^ SALT_COMPONENT) >> 11).min((1u64 << 53) - 1);
        let comp = self.cuts.iter().position(|&cut| c < cut).unwrap_or(0);
        let table = &self.tables[comp];
        if table.len() == 1 {
            return table[0];
        }
        let q = (mix64(h ^ SALT_QUANTILE) >> 11 >> QUANTILE_SHIFT) as usize;
        table[q]
    }
}

/// A seeded, deterministic model of one DRAM module.
#[derive(Debug, Clone)]
pub struct SimulatedDevice {
    geometry: DramGeometry,
    seed: u64,
    population: PopulationConfig,
    /// Byte currently replicated across every page.
    stored_pattern: u8,
    /// Faults are active iff the read's t_RP is below this value.
    fault_threshold: TrpFraction,
    behavior_key: u64,
    noise_key: u64,
    independent_cut: u64,
    dependent_cut: u64,
    stuck_cut: u64,
    sampler: BiasSampler,
}

impl SimulatedDevice {
    pub fn build(
        geometry: DramGeometry,
        population: PopulationConfig,
        seed: u64,
    ) -> Result<Self, SimError> {
        geometry.validate()?;
        population.validate()?;
        let rng = CounterRng::new(seed);
        let sampler = BiasSampler::new(&population.noisy_bias_mixture)?;
        let independent = population.frac_pattern_independent;
        let dependent = independent + population.frac_pattern_dependent;
        Ok(SimulatedDevice {
            geometry,
            seed,
            stored_pattern: 0x00,
            fault_threshold: TrpFraction::FULL,
            behavior_key: rng.domain(DOMAIN_BEHAVIOR),
            noise_key: rng.domain(DOMAIN_NOISE),
            independent_cut: threshold53(independent),
            dependent_cut: if population.frac_noisy == 0.0 {
                1u64 << 53
            } else {
                threshold53(dependent)
            },
            stuck_cut: threshold53(population.stuck_value_weight),
            sampler,
            population,
        })
    }

    /// Builds a device from a named preset.
    pub fn from_preset(geometry: DramGeometry, name: &str, seed: u64) -> Result<Self, SimError> {
        let population = preset(name).ok_or_else(|| SimError::UnknownPreset(name.to_string()))?;
        Self::build(geometry, population, seed)
    }

    /// Faults are active iff t_RP is strictly below `threshold`.
    pub fn with_fault_threshold(mut self, threshold: TrpFraction) -> Self {
        self.fault_threshold = threshold;
        self
    }

    pub fn geometry(&self) -> DramGeometry {
        self.geometry
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn population(&self) -> &PopulationConfig {
        &self.population
    }

    pub fn stored_pattern(&self) -> u8 {
        self.stored_pattern
    }

    /// Replicates `pattern` across every page.
    pub fn write_pattern(&mut self, pattern: u8) {
        self.stored_pattern = pattern;
    }

    pub fn faults_active(&self, spec: &MeasurementSpec) -> bool {
        spec.t_rp < self.fault_threshold
    }

    pub fn behavior(&self, addr: CellAddress) -> Result<CellBehavior, SimError> {
        self.check_page(addr.bank, addr.row)?;
        if addr.col >= self.geometry.cols_per_row {
            return Err(SimError::ColumnOutOfRange {
                col: addr.col,
                cols: self.geometry.cols_per_row,
            });
        }
        Ok(self.behavior_at(self.geometry.linear_index(addr)))
    }

    #[inline]
    fn behavior_at(&self, linear: u64) -> CellBehavior {
        let h = CounterRng::at(self.behavior_key, linear);
        let u = h >> 11;
        if u < self.independent_cut {
            CellBehavior::PatternIndependent {
                stuck: (mix64(h ^ SALT_STUCK) >> 11) < self.stuck_cut,
            }
        } else if u < self.dependent_cut {
            CellBehavior::PatternDependent {
                map: self.population.pattern_dependent_map,
            }
        } else {
            CellBehavior::Noisy {
                bias: self.sampler.sample(h),
            }
        }
    }

    #[inline]
    fn faulty_bit(&self, linear: u64, stored: bool, index: u32, shift: f64) -> bool {
        match self.behavior_at(linear) {
            CellBehavior::PatternIndependent { stuck } => stuck,
            CellBehavior::PatternDependent { map } => map.apply(stored),
            CellBehavior::Noisy { bias } => {
                let p = shifted_bias(bias, shift);
                let draw = CounterRng::at2(self.noise_key, linear, index as u64);
                (draw >> 11) < threshold53(p)
            }
        }
    }

    fn check_page(&self, bank: u32, row: u32) -> Result<(), SimError> {
        if !self.geometry.contains_page(bank, row) {
            return Err(SimError::PageOutOfRange {
                bank,
                row,
                geometry: self.geometry,
            });
        }
        Ok(())
    }

    fn check_spec(&self, spec: &MeasurementSpec) -> Result<(), SimError> {
        if spec.input_pattern != self.stored_pattern {
            return Err(SimError::PatternMismatch {
                stored: self.stored_pattern,
                requested: spec.input_pattern,
            });
        }
        Ok(())
    }

    /// Reads one page, bit-packed MSB-first.
    pub fn read_page(
        &self,
        bank: u32,
        row: u32,
        spec: &MeasurementSpec,
    ) -> Result<Vec<u8>, SimError> {
        self.check_page(bank, row)?;
        self.check_spec(spec)?;
        let page_bytes = self.geometry.page_bytes();
        let pattern = self.stored_pattern;
        if !self.faults_active(spec) {
            return Ok(vec![pattern; page_bytes]);
        }
        let shift = self.population.condition_coeffs.logit_shift(spec.condition);
        let base = self.geometry.page_index(bank, row) * self.geometry.cols_per_row as u64;
        let mut page = vec![0u8; page_bytes];
        for (byte_idx, byte) in page.iter_mut().enumerate() {
            let mut acc = 0u8;
            for bit in 0..8u32 {
                let col = byte_idx as u32 * 8 + bit;
                let stored = pattern_bit(pattern, col);
                let v = self.faulty_bit(base + col as u64, stored, spec.measurement_index, shift);
                acc |= (v as u8) << (7 - bit);
            }
            *byte = acc;
        }
        Ok(page)
    }

    /// Reads selected columns of one page, in the order given.
    pub fn read_cells(
        &self,
        bank: u32,
        row: u32,
        cols: &[u32],
        spec: &MeasurementSpec,
    ) -> Result<Vec<bool>, SimError> {
        self.check_page(bank, row)?;
        self.check_spec(spec)?;
        let cols_per_row = self.geometry.cols_per_row;
        if let Some(&col) = cols.iter().find(|&&c| c >= cols_per_row) {
            return Err(SimError::ColumnOutOfRange {
                col,
                cols: cols_per_row,
            });
        }
        let pattern = self.stored_pattern;
        if !self.faults_active(spec) {
            return Ok(cols.iter().map(|&c| pattern_bit(pattern, c)).collect());
        }
        let shift = self.population.condition_coeffs.logit_shift(spec.condition);
        let base = self.geometry.page_index(bank, row) * cols_per_row as u64;
        Ok(cols
            .iter()
            .map(|&c| {
                self.faulty_bit(
                    base + c as u64,
                    pattern_bit(pattern, c),
                    spec.measurement_index,
                    shift,
                )
            })
            .collect())
    }

    /// Ground-truth class counts over every cell of the device.
    pub fn class_census(&self) -> [u64; 3] {
        let mut counts = [0u64; 3];
        for i in 0..self.geometry.cell_count() {
            counts[self.behavior_at(i).class() as usize] += 1;
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DramGeometry {
        DramGeometry::new(2, 16, 256).unwrap()
    }

    #[test]
    fn micron_preset_fractions_match_configuration() {
        let g = DramGeometry::new(1, 32, 1 << 15).unwrap();
        let dev = SimulatedDevice::from_preset(g, "micron", 11).unwrap();
        let [pi, pd, noisy] = dev.class_census();
        let n = g.cell_count() as f64;
        assert!(g.cell_count() >= 1 << 20);
        assert!((pi as f64 / n - 0.82).abs() < 0.005);
        assert!((pd as f64 / n - 0.005).abs() < 0.005);
        assert!((noisy as f64 / n - 0.175).abs() < 0.005);
    }

    #[test]
    fn degenerate_population_is_all_stuck() {
        let dev =
            SimulatedDevice::build(small(), PopulationConfig::all_pattern_independent(0.3), 1)
                .unwrap();
        assert_eq!(dev.class_census(), [small().cell_count(), 0, 0]);
    }

    #[test]
    fn rejects_bad_population() {
        let mut p = preset("micron").unwrap();
        p.frac_noisy += 0.01;
        assert!(matches!(
            SimulatedDevice::build(small(), p, 0),
            Err(SimError::InvalidPopulation(_))
        ));
        let mut p = preset("micron").unwrap();
        p.noisy_bias_mixture[0].weight = 0.5;
        assert!(p.validate().is_err());
        let mut p = preset("micron").unwrap();
        p.noisy_bias_mixture[0].bias = BiasDistribution::Beta {
            alpha: 0.0,
            beta: 1.0,
        };
        assert!(p.validate().is_err());
        assert!(PopulationConfig::ideal_noisy(1.0).validate().is_err());
        assert!(matches!(
            SimulatedDevice::from_preset(small(), "hynix", 0),
            Err(SimError::UnknownPreset(_))
        ));
    }

    #[test]
    fn write_pattern_expands_bits() {
        let mut dev = SimulatedDevice::from_preset(small(), "micron", 3).unwrap();
        let full = MeasurementSpec::new(0xAA, TrpFraction::FULL, OperatingCondition::nominal());
        for pattern in [0xFFu8, 0x00, 0xAA, 0x55] {
            dev.write_pattern(pattern);
            let page = dev.read_page(1, 3, &full.with_pattern(pattern)).unwrap();
            assert!(page.iter().all(|&b| b == pattern));
        }
        dev.write_pattern(0xAA);
        let bits = dev
            .read_cells(0, 0, &[0, 1, 2, 3], &full.with_pattern(0xAA))
            .unwrap();
        assert_eq!(bits, [true, false, true, false]);
    }

    #[test]
    fn read_requires_matching_pattern_and_valid_address() {
        let dev = SimulatedDevice::from_preset(small(), "micron", 3).unwrap();
        let spec = MeasurementSpec::default().with_pattern(0x00);
        assert!(matches!(
            dev.read_page(2, 0, &spec),
            Err(SimError::PageOutOfRange { .. })
        ));
        assert!(matches!(
            dev.read_cells(0, 0, &[256], &spec),
            Err(SimError::ColumnOutOfRange { .. })
        ));
        assert!(matches!(
            dev.read_page(0, 0, &spec.with_pattern(0xFF)),
            Err(SimError::PatternMismatch { .. })
        ));
    }

    #[test]
    fn reads_are_deterministic_and_order_independent() {
        let a = SimulatedDevice::from_preset(small(), "samsung-b", 77).unwrap();
        let b = SimulatedDevice::from_preset(small(), "samsung-b", 77).unwrap();
        let spec = MeasurementSpec::default().with_pattern(0x00).with_index(5);
        let g = small();
        let forward: Vec<_> = g
            .pages()
            .map(|(bk, r)| a.read_page(bk, r, &spec).unwrap())
            .collect();
        let mut backward: Vec<_> = g
            .pages()
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .map(|(bk, r)| b.read_page(bk, r, &spec).unwrap())
            .collect();
        backward.reverse();
        assert_eq!(forward, backward);
        let cols: Vec<u32> = (0..256).rev().collect();
        let picked = a.read_cells(1, 7, &cols, &spec).unwrap();
        let page = a.read_page(1, 7, &spec).unwrap();
        for (i, &c) in cols.iter().enumerate() {
            assert_eq!(picked[i], pattern_bit(page[c as usize / 8], c % 8));
        }
    }

    #[test]
    fn invariant_cells_follow_their_class() {
        let mut dev = SimulatedDevice::from_preset(small(), "micron", 5).unwrap();
        let spec = MeasurementSpec::default();
        let mut reads = Vec::new();
        for (k, pattern) in [0xFFu8, 0xAA, 0x55, 0x00].into_iter().enumerate() {
            dev.write_pattern(pattern);
            for rep in 0..3u32 {
                let s = spec.with_pattern(pattern).with_index(k as u32 * 3 + rep);
                reads.push((pattern, dev.read_page(0, 4, &s).unwrap()));
            }
        }
        let bit = |page: &[u8], c: u32| pattern_bit(page[c as usize / 8], c % 8);
        for col in 0..256u32 {
            match dev.behavior(CellAddress::new(0, 4, col)).unwrap() {
                CellBehavior::PatternIndependent { stuck } => {
                    assert!(reads.iter().all(|(_, p)| bit(p, col) == stuck));
                }
                CellBehavior::PatternDependent { map } => {
                    for (pattern, p) in &reads {
                        assert_eq!(bit(p, col), map.apply(pattern_bit(*pattern, col)));
                    }
                }
                CellBehavior::Noisy { bias } => assert!(bias > 0.0 && bias < 1.0),
            }
        }
    }

    #[test]
    fn fair_noisy_cell_is_a_fair_coin() {
        let g = DramGeometry::new(1, 1, 8).unwrap();
        let dev = SimulatedDevice::build(g, PopulationConfig::ideal_noisy(0.5), 9).unwrap();
        let spec = MeasurementSpec::default().with_pattern(0x00);
        let reads = 100_000u32;
        let ones = (0..reads)
            .filter(|&i| dev.read_cells(0, 0, &[3], &spec.with_index(i)).unwrap()[0])
            .count();
        let frac = ones as f64 / reads as f64;
        assert!((frac - 0.5).abs() < 0.005, "{frac}");
    }

    #[test]
    fn condition_shift_is_monotone() {
        let coeffs = ConditionCoefficients::default();
        for p in [0.1, 0.45, 0.5, 0.8] {
            let mut last = 0.0;
            for dv in [-200, -75, -20, 0, 20, 75, 200] {
                let c = OperatingCondition::new(dv, 0).unwrap();
                let q = shifted_bias(p, coeffs.logit_shift(c));
                assert!(q > last);
                last = q;
            }
            let mut last = 0.0;
            for dt in [-60, -20, 0, 20, 60] {
                let c = OperatingCondition::new(0, dt).unwrap();
                let q = shifted_bias(p, coeffs.logit_shift(c));
                assert!(q > last);
                last = q;
            }
        }
        assert_eq!(shifted_bias(0.3, 0.0), 0.3);
        let inverted = ConditionCoefficients {
            per_mv: -0.01,
            per_celsius: 0.0,
        };
        let up = OperatingCondition::new(50, 0).unwrap();
        assert!(shifted_bias(0.5, inverted.logit_shift(up)) < 0.5);
    }

    #[test]
    fn fixed_component_yields_exact_bias() {
        let dev = SimulatedDevice::build(small(), PopulationConfig::ideal_noisy(0.25), 2).unwrap();
        for i in 0..100 {
            let a = small().address_of(i * 13);
            assert_eq!(dev.behavior(a).unwrap(), CellBehavior::Noisy { bias: 0.25 });
        }
    }
}
