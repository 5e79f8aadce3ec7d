//! Versioned TOML pipeline configuration.

use dlt_core::extract::ConditionerConfig;
use dlt_core::filter::{BiasWindow, WindowMode};
use dlt_core::model::{DramGeometry, MeasurementSpec, OperatingCondition, TrpFraction};
use dlt_core::sim::{preset, PopulationConfig, SimulatedDevice, PRESET_NAMES};
use dlt_stats::{ProportionRule, SuiteConfig, TestParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const CONFIG_VERSION: u32 = 1;
/// Names a config file, or a directory holding `dltrng.toml`.
pub const CONFIG_ENV: &str = "DLTRNG_CONFIG_PATH";
pub const DEFAULT_CONFIG_NAME: &str = "dltrng.toml";

/// Every violated constraint, reported together.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid configuration:{}", list(.0))]
pub struct ValidationError(pub Vec<String>);

fn list(items: &[String]) -> String {
    items.iter().map(|e| format!("\n  - {e}")).collect()
}

impl ValidationError {
    pub fn single(msg: impl Into<String>) -> Self {
        ValidationError(vec![msg.into()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    pub device: DeviceConfig,
    #[serde(default)]
    pub campaign: CampaignConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub conditioner: ConditionerConfig,
    #[serde(default)]
    pub generate: GenerateConfig,
    #[serde(default)]
    pub suite: SuiteSettings,
    /// Operating condition for generation and testing.
    #[serde(default)]
    pub condition: ConditionConfig,
    /// Conditions swept by `test --inline`; empty means `condition` only.
    #[serde(default)]
    pub sweep: Vec<NamedCondition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub banks: u32,
    pub rows: u32,
    pub cols: u32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<PopulationConfig>,
    #[serde(default = "default_trp")]
    pub t_rp_fraction: f64,
}

fn default_trp() -> f64 {
    TrpFraction::DEFAULT_REDUCED.fraction()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub patterns: Vec<u8>,
    pub repeats: u32,
    pub condition: ConditionConfig,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            patterns: vec![0xFF, 0xAA, 0x55, 0x00],
            repeats: 5,
            condition: ConditionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub window: [f64; 2],
    pub mode: WindowMode,
}

impl Default for FilterConfig {
    fn default() -> Self {
        let w = BiasWindow::default();
        FilterConfig {
            window: [w.lo, w.hi],
            mode: WindowMode::Pooled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    /// Pattern written before harvesting.
    pub pattern: u8,
    pub bits: u64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            pattern: 0x00,
            bits: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProportionChoice {
    /// At least 80 % of p-values pass.
    #[default]
    MinFraction,
    NistInterval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteSettings {
    pub streams: usize,
    pub stream_bits: usize,
    pub alpha: f64,
    pub proportion: ProportionChoice,
    pub min_fraction: f64,
    pub clt_reads: u32,
}

impl Default for SuiteSettings {
    fn default() -> Self {
        SuiteSettings {
            streams: 10,
            stream_bits: 1_000_000,
            alpha: 0.01,
            proportion: ProportionChoice::MinFraction,
            min_fraction: 0.8,
            clt_reads: 8,
        }
    }
}

impl SuiteSettings {
    pub fn suite_config(&self) -> SuiteConfig {
        SuiteConfig {
            params: TestParams {
                alpha: self.alpha,
                ..TestParams::default()
            },
            proportion: match self.proportion {
                ProportionChoice::MinFraction => ProportionRule::MinFraction {
                    fraction: self.min_fraction,
                },
                ProportionChoice::NistInterval => ProportionRule::NistInterval,
            },
            ..SuiteConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditionConfig {
    pub delta_mv: i32,
    pub delta_celsius: i32,
}

impl ConditionConfig {
    pub fn to_condition(self) -> Result<OperatingCondition, String> {
        OperatingCondition::new(self.delta_mv, self.delta_celsius).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedCondition {
    pub name: String,
    #[serde(default)]
    pub delta_mv: i32,
    #[serde(default)]
    pub delta_celsius: i32,
}

impl NamedCondition {
    pub fn condition(&self) -> ConditionConfig {
        ConditionConfig {
            delta_mv: self.delta_mv,
            delta_celsius: self.delta_celsius,
        }
    }

    /// Parses `nominal`, `+20C`, `-20mV` or `+75mV+20C`.
    pub fn parse(token: &str) -> Result<Self, String> {
        let t = token.trim();
        if t.eq_ignore_ascii_case("nominal") {
            return Ok(NamedCondition {
                name: "nominal".into(),
                delta_mv: 0,
                delta_celsius: 0,
            });
        }
        let (mut mv, mut c) = (None, None);
        let mut rest = t;
        while !rest.is_empty() {
            let sign_len = usize::from(rest.starts_with(['+', '-']));
            let digits = rest[sign_len..]
                .find(|ch: char| !ch.is_ascii_digit())
                .ok_or_else(|| format!("condition `{t}`: missing unit (mV or C)"))?;
            if digits == 0 {
                return Err(format!("condition `{t}`: expected a number"));
            }
            let num_end = sign_len + digits;
            let value: i32 = rest[..num_end]
                .parse()
                .map_err(|_| format!("condition `{t}`: bad number"))?;
            rest = &rest[num_end..];
            let lower = rest.to_ascii_lowercase();
            let (slot, unit_len) = if lower.starts_with("mv") {
                (&mut mv, 2)
            } else if lower.starts_with('c') {
                (&mut c, 1)
            } else {
                return Err(format!("condition `{t}`: unit must be mV or C"));
            };
            if slot.replace(value).is_some() {
                return Err(format!("condition `{t}`: unit given twice"));
            }
            rest = &rest[unit_len..];
        }
        Ok(NamedCondition {
            name: t.to_string(),
            delta_mv: mv.unwrap_or(0),
            delta_celsius: c.unwrap_or(0),
        })
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ValidationError> {
        toml::from_str(text).map_err(|e| ValidationError::single(format!("parse error: {e}")))
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        Ok(Self::from_toml(&text)?)
    }

    /// Checks every constraint and reports all violations at once.
    pub fn validate(&self) -> Result<(), ValidationError> {
        let mut errs = Vec::new();
        if self.version != CONFIG_VERSION {
            errs.push(format!(
                "version: unsupported version {} (expected {CONFIG_VERSION})",
                self.version
            ));
        }
        let d = &self.device;
        if let Err(e) = DramGeometry::new(d.banks, d.rows, d.cols) {
            errs.push(format!("device: {e}"));
        }
        match (&d.preset, &d.population) {
            (Some(_), Some(_)) => {
                errs.push("device: give either preset or population, not both".into())
            }
            (None, None) => errs.push("device: one of preset or population is required".into()),
            (Some(name), None) if preset(name).is_none() => errs.push(format!(
                "device.preset: unknown preset `{name}` (known: {})",
                PRESET_NAMES.join(", ")
            )),
            (None, Some(pop)) => {
                if let Err(e) = pop.validate() {
                    errs.push(format!("device.population: {e}"));
                }
            }
            _ => {}
        }
        if let Err(e) = TrpFraction::from_fraction(d.t_rp_fraction) {
            errs.push(format!("device.t_rp_fraction: {e}"));
        }
        let c = &self.campaign;
        if c.patterns.is_empty() {
            errs.push("campaign.patterns: at least one pattern is required".into());
        }
        let mut sorted = c.patterns.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != c.patterns.len() {
            errs.push("campaign.patterns: patterns must be distinct".into());
        }
        if c.repeats == 0 {
            errs.push("campaign.repeats: must be at least 1".into());
        }
        if c.patterns.len() as u64 * c.repeats as u64 > u16::MAX as u64 + 1 {
            errs.push("campaign: more than 65536 measurements".into());
        }
        if let Err(e) = c.condition.to_condition() {
            errs.push(format!("campaign.condition: {e}"));
        }
        if let Err(e) = BiasWindow::new(self.filter.window[0], self.filter.window[1]) {
            errs.push(format!("filter.window: {e}"));
        }
        if self.generate.bits == 0 {
            errs.push("generate.bits: must be positive".into());
        }
        let s = &self.suite;
        if s.streams < 2 {
            errs.push("suite.streams: need at least 2".into());
        }
        if s.stream_bits < 100 {
            errs.push("suite.stream_bits: need at least 100".into());
        }
        if !(s.alpha > 0.0 && s.alpha < 1.0) {
            errs.push("suite.alpha: must be in (0, 1)".into());
        }
        if !(s.min_fraction > 0.0 && s.min_fraction <= 1.0) {
            errs.push("suite.min_fraction: must be in (0, 1]".into());
        }
        if s.clt_reads < 2 {
            errs.push("suite.clt_reads: need at least 2".into());
        }
        if let Err(e) = self.condition.to_condition() {
            errs.push(format!("condition: {e}"));
        }
        let mut names = Vec::new();
        for (i, nc) in self.sweep.iter().enumerate() {
            if nc.name.is_empty() {
                errs.push(format!("sweep[{i}]: empty name"));
            }
            if names.contains(&&nc.name) {
                errs.push(format!("sweep[{i}]: duplicate name `{}`", nc.name));
            }
            names.push(&nc.name);
            if let Err(e) = nc.condition().to_condition() {
                errs.push(format!("sweep[{i}] ({}): {e}", nc.name));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ValidationError(errs))
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    pub fn geometry(&self) -> DramGeometry {
        DramGeometry::new(self.device.banks, self.device.rows, self.device.cols)
            .expect("validated geometry")
    }

    pub fn population(&self) -> PopulationConfig {
        match (&self.device.preset, &self.device.population) {
            (_, Some(p)) => p.clone(),
            (Some(name), None) => preset(name).expect("validated preset"),
            (None, None) => unreachable!("validated device"),
        }
    }

    pub fn build_device(&self) -> anyhow::Result<SimulatedDevice> {
        Ok(SimulatedDevice::build(
            self.geometry(),
            self.population(),
            self.device.seed,
        )?)
    }

    pub fn t_rp(&self) -> TrpFraction {
        TrpFraction::from_fraction(self.device.t_rp_fraction).expect("validated t_rp")
    }

    pub fn window(&self) -> BiasWindow {
        BiasWindow::new(self.filter.window[0], self.filter.window[1]).expect("validated window")
    }

    pub fn campaign_spec(&self) -> MeasurementSpec {
        let cond = self
            .campaign
            .condition
            .to_condition()
            .expect("validated condition");
        MeasurementSpec::new(self.campaign.patterns[0], self.t_rp(), cond)
    }

    pub fn generation_spec(&self, condition: ConditionConfig) -> MeasurementSpec {
        let cond = condition.to_condition().expect("validated condition");
        MeasurementSpec::new(self.generate.pattern, self.t_rp(), cond)
    }

    /// Conditions for a sweep: the configured list, else the single condition.
    pub fn sweep_conditions(&self) -> Vec<NamedCondition> {
        if self.sweep.is_empty() {
            vec![NamedCondition {
                name: if self.condition == ConditionConfig::default() {
                    "nominal".into()
                } else {
                    format!(
                        "{:+}mV{:+}C",
                        self.condition.delta_mv, self.condition.delta_celsius
                    )
                },
                delta_mv: self.condition.delta_mv,
                delta_celsius: self.condition.delta_celsius,
            }]
        } else {
            self.sweep.clone()
        }
    }
}

/// Explicit path, else the path named by [`CONFIG_ENV`].
pub fn resolve_config_path(explicit: Option<&Path>) -> Result<PathBuf, ValidationError> {
    if let Some(p) = explicit {
        return Ok(p.to_path_buf());
    }
    match std::env::var_os(CONFIG_ENV) {
        Some(v) if !v.is_empty() => {
            let p = PathBuf::from(v);
            Ok(if p.is_dir() {
                p.join(DEFAULT_CONFIG_NAME)
            } else {
                p
            })
        }
        _ => Err(ValidationError::single(format!(
            "no config given: pass --config or set {CONFIG_ENV}"
        ))),
    }
}
