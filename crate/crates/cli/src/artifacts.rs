//! JSON manifests and sidecars written next to pipeline outputs.

use crate::config::ConditionConfig;
use anyhow::Context;
use dlt_core::extract::ConditionerConfig;
use dlt_core::model::DramGeometry;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const DUMP_LABEL_PREFIX: &str = "config:";
pub const STREAM_FORMAT: &str = "dltrng-bits v1";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// `stream.bin` -> `stream.bin.json`.
pub fn sidecar_path(stream: &Path) -> PathBuf {
    let mut name = stream.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpEntry {
    pub file: String,
    pub pattern: u8,
    pub measurement_index: u32,
    pub sha256: String,
}

/// `campaign.json`, written by `measure`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignManifest {
    pub config_digest: String,
    pub seed: u64,
    pub preset: Option<String>,
    pub geometry: DramGeometry,
    pub patterns: Vec<u8>,
    pub repeats: u32,
    pub dumps: Vec<DumpEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterizationSummary {
    pub config_digest: Option<String>,
    pub campaign_id: String,
    pub geometry: DramGeometry,
    pub total_measurements: u32,
    pub patterns: Vec<(u8, u32)>,
    pub pattern_independent: u64,
    pub pattern_dependent: u64,
    pub noisy: u64,
    pub fraction_pattern_independent: f64,
    pub fraction_pattern_dependent: f64,
    pub fraction_noisy: f64,
    /// Per bank: pattern-independent, pattern-dependent, noisy fractions.
    pub bank_fractions: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrollmentSummary {
    pub config_digest: Option<String>,
    pub campaign_id: String,
    pub enrollment_sha256: String,
    pub window: [f64; 2],
    pub mode: String,
    pub noisy_cells: u64,
    pub enrolled_cells: u64,
    pub enrolled_over_noisy: f64,
    pub occupied_pages: u64,
    pub total_pages: u64,
    pub occupied_fraction: f64,
    pub avg_bits_per_occupied_page: f64,
}

/// Sidecar describing a packed bitstream file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSidecar {
    pub format: String,
    pub bits: u64,
    pub sha256: String,
    pub config_digest: String,
    pub enrollment_sha256: String,
    pub condition: ConditionConfig,
    pub conditioner: ConditionerConfig,
    pub pattern: u8,
    pub first_measurement_index: u32,
}
