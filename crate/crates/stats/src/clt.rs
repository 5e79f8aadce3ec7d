//! Per-cell frequency analysis of the enrolled cells.
//!
//! Every enrolled cell is read `n` times; the ones fraction of each cell
//! should follow a normal law with mean 50 % and standard deviation
//! `50 / sqrt(n)` % if the cells are unbiased and independent.

use dlt_core::filter::FilterSet;
use dlt_core::io::{MeasurementSource, SourceError};
use dlt_core::model::MeasurementSpec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CltError {
    #[error("enrollment set is empty")]
    EmptyFilterSet,
    #[error("need at least two reads per cell, got {0}")]
    TooFewReads(u32),
    #[error("measurement index overflow")]
    IndexOverflow,
    #[error(transparent)]
    Source(#[from] SourceError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub reads_per_cell: u32,
    pub cells: u64,
    /// `histogram[k]` cells read `k` ones.
    pub histogram: Vec<u64>,
    pub mean_percent: f64,
    pub std_percent: f64,
    pub ideal_mean_percent: f64,
    pub ideal_std_percent: f64,
}

impl CltReport {
    /// Builds the report from per-cell ones counts.
    pub fn from_counts(ones: &[u32], reads: u32) -> Self {
        let mut histogram = vec![0u64; reads as usize + 1];
        for &k in ones {
            histogram[k as usize] += 1;
        }
        Self::from_histogram(histogram)
    }

    pub fn from_histogram(histogram: Vec<u64>) -> Self {
        let reads = (histogram.len() - 1) as u32;
        let cells: u64 = histogram.iter().sum();
        let pct = |k: usize| 100.0 * k as f64 / reads as f64;
        let (mut mean, mut std) = (f64::NAN, f64::NAN);
        if cells > 0 {
            let c = cells as f64;
            mean = histogram
                .iter()
                .enumerate()
                .map(|(k, &h)| h as f64 * pct(k))
                .sum::<f64>()
                / c;
            let var = histogram
                .iter()
                .enumerate()
                .map(|(k, &h)| h as f64 * (pct(k) - mean).powi(2))
                .sum::<f64>()
                / c;
            std = var.sqrt();
        }
        CltReport {
            reads_per_cell: reads,
            cells,
            histogram,
            mean_percent: mean,
            std_percent: std,
            ideal_mean_percent: 50.0,
            ideal_std_percent: 50.0 / (reads as f64).sqrt(),
        }
    }

    /// Histogram as `ones,fraction_percent,cells` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("ones,fraction_percent,cells\n");
        for (k, h) in self.histogram.iter().enumerate() {
            let pct = 100.0 * k as f64 / self.reads_per_cell as f64;
            out.push_str(&format!("{k},{pct:.3},{h}\n"));
        }
        out
    }
}

/// Reads every enrolled cell `reads` times at consecutive measurement
/// indices starting from `spec.measurement_index`.
pub fn clt_frequency_test<S: MeasurementSource + ?Sized>(
    source: &mut S,
    fset: &FilterSet,
    reads: u32,
    spec: &MeasurementSpec,
) -> Result<CltReport, CltError> {
    if fset.is_empty() {
        return Err(CltError::EmptyFilterSet);
    }
    if reads < 2 {
        return Err(CltError::TooFewReads(reads));
    }
    source.write_pattern(spec.input_pattern)?;
    let pages = fset.pages();
    let mut ones = vec![0u32; fset.len()];
    for r in 0..reads {
        let index = spec
            .measurement_index
            .checked_add(r)
            .ok_or(CltError::IndexOverflow)?;
        let read = spec.with_index(index);
        let mut slot = 0;
        for ((bank, row), cols) in &pages {
            for bit in source.acquire_cells(&read, *bank, *row, cols)? {
                ones[slot] += bit as u32;
                slot += 1;
            }
        }
    }
    Ok(CltReport::from_counts(&ones, reads))
}
