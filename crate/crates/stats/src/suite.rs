//! Batch scoring of several streams with second-level uniformity and
//! proportion checks.

use crate::nist::{run_test_unpacked, TestId, TestParams, TestResult, TestStatus};
use crate::special::igamc;
use dlt_core::model::BitStream;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("need at least two streams, got {0}")]
    TooFewStreams(usize),
    #[error("streams differ in length: {shortest} to {longest} bits")]
    UnequalLengths { shortest: usize, longest: usize },
    #[error("no tests selected")]
    NoTests,
    #[error("invalid test parameters: {0}")]
    InvalidParams(String),
}

/// Minimum share of passing p-values for a test to pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum ProportionRule {
    MinFraction {
        fraction: f64,
    },
    /// `(1 - alpha) - 3 sqrt(alpha (1 - alpha) / k)` for `k` p-values.
    NistInterval,
}

impl Default for ProportionRule {
    fn default() -> Self {
        ProportionRule::MinFraction { fraction: 0.8 }
    }
}

impl ProportionRule {
    pub fn threshold(&self, alpha: f64, count: usize) -> f64 {
        match *self {
            ProportionRule::MinFraction { fraction } => fraction,
            ProportionRule::NistInterval => {
                let p = 1.0 - alpha;
                p - 3.0 * (p * alpha / count as f64).sqrt()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub params: TestParams,
    pub tests: Vec<TestId>,
    pub proportion: ProportionRule,
    /// Uniformity p-values below this fail the test.
    pub uniformity_threshold: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            params: TestParams::default(),
            tests: TestId::ALL.to_vec(),
            proportion: ProportionRule::default(),
            uniformity_threshold: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    NotPerformed,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::NotPerformed => "N/A",
        })
    }
}

/// Aggregate outcome of one test across all streams.
///
/// For tests reporting several p-values per stream, the proportion is taken
/// over all p-values, and uniformity is computed per sub-test across streams
/// and combined as `min(1, k * min P)` over the `k` sub-tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSummary {
    pub id: TestId,
    pub name: String,
    pub streams_tested: usize,
    pub streams_insufficient: usize,
    pub sub_tests: usize,
    pub p_value_count: usize,
    pub p_values_passed: usize,
    pub proportion: Option<f64>,
    pub proportion_threshold: Option<f64>,
    pub uniformity_p: Option<f64>,
    /// Sub-test with the smallest uniformity p-value.
    pub worst_sub_test: Option<usize>,
    pub verdict: Verdict,
    /// Distinct unmet prerequisites among insufficient streams.
    pub insufficient_reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub streams: usize,
    pub stream_bits: usize,
    pub alpha: f64,
    pub proportion_rule: ProportionRule,
    pub uniformity_threshold: f64,
    pub tests: Vec<TestSummary>,
    /// Per stream, one result per selected test.
    pub stream_results: Vec<Vec<TestResult>>,
}

impl TestReport {
    /// True when no performed test failed.
    pub fn all_passed(&self) -> bool {
        self.tests.iter().all(|t| t.verdict != Verdict::Fail)
    }

    pub fn summary(&self, id: TestId) -> Option<&TestSummary> {
        self.tests.iter().find(|t| t.id == id)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} streams of {} bits, alpha = {}",
            self.streams, self.stream_bits, self.alpha
        );
        let _ = writeln!(
            out,
            "{:<25} {:>8} {:>11} {:>10} {:>12}  verdict",
            "test", "streams", "passed", "proportion", "uniformity"
        );
        for t in &self.tests {
            let prop = t.proportion.map_or("-".into(), |p| format!("{p:.4}"));
            let unif = t.uniformity_p.map_or("-".into(), |p| format!("{p:.6}"));
            let _ = writeln!(
                out,
                "{:<25} {:>8} {:>11} {:>10} {:>12}  {}",
                t.name,
                format!(
                    "{}/{}",
                    t.streams_tested,
                    t.streams_tested + t.streams_insufficient
                ),
                format!("{}/{}", t.p_values_passed, t.p_value_count),
                prop,
                unif,
                t.verdict
            );
            for reason in &t.insufficient_reasons {
                let _ = writeln!(out, "{:<25}   insufficient: {reason}", "");
            }
        }
        out
    }
}

/// Chi-square uniformity of p-values over ten equal bins.
pub fn uniformity_p(p_values: &[f64]) -> f64 {
    let mut bins = [0usize; 10];
    for &p in p_values {
        bins[((p * 10.0) as usize).min(9)] += 1;
    }
    let expected = p_values.len() as f64 / 10.0;
    let chi: f64 = bins
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    igamc(4.5, chi / 2.0)
}

pub fn run_suite(streams: &[BitStream], cfg: &SuiteConfig) -> Result<TestReport, SuiteError> {
    if streams.len() < 2 {
        return Err(SuiteError::TooFewStreams(streams.len()));
    }
    let shortest = streams.iter().map(|s| s.len()).min().unwrap_or(0);
    let longest = streams.iter().map(|s| s.len()).max().unwrap_or(0);
    if shortest != longest {
        return Err(SuiteError::UnequalLengths { shortest, longest });
    }
    if cfg.tests.is_empty() {
        return Err(SuiteError::NoTests);
    }
    cfg.params.validate().map_err(SuiteError::InvalidParams)?;
    let unpacked: Vec<Vec<u8>> = streams.par_iter().map(|s| s.to_unpacked()).collect();
    let jobs: Vec<(usize, TestId)> = (0..streams.len())
        .flat_map(|s| cfg.tests.iter().map(move |&t| (s, t)))
        .collect();
    let results: Vec<TestResult> = jobs
        .par_iter()
        .map(|&(s, id)| run_test_unpacked(id, &unpacked[s], &cfg.params))
        .collect();
    let per_stream: Vec<Vec<TestResult>> = results
        .chunks(cfg.tests.len())
        .map(|c| c.to_vec())
        .collect();

    let alpha = cfg.params.alpha;
    let tests = cfg
        .tests
        .iter()
        .enumerate()
        .map(|(col, &id)| {
            let column: Vec<&TestResult> = per_stream.iter().map(|r| &r[col]).collect();
            summarize(id, &column, alpha, cfg)
        })
        .collect();
    Ok(TestReport {
        streams: streams.len(),
        stream_bits: shortest,
        alpha,
        proportion_rule: cfg.proportion,
        uniformity_threshold: cfg.uniformity_threshold,
        tests,
        stream_results: per_stream,
    })
}

fn summarize(id: TestId, column: &[&TestResult], alpha: f64, cfg: &SuiteConfig) -> TestSummary {
    let mut reasons: Vec<String> = Vec::new();
    let mut pooled = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut tested = 0;
    for r in column {
        if r.status == TestStatus::InsufficientData {
            if let Some(req) = &r.requirement {
                if !reasons.contains(req) {
                    reasons.push(req.clone());
                }
            }
        } else {
            tested += 1;
            pooled.extend_from_slice(&r.p_values);
            if rows.len() < r.p_values.len() {
                rows.resize(r.p_values.len(), Vec::new());
            }
            for (row, &p) in rows.iter_mut().zip(&r.p_values) {
                row.push(p);
            }
        }
    }
    let passed = pooled.iter().filter(|&&p| p >= alpha).count();
    let (proportion, threshold, uniformity, worst, verdict) = if pooled.is_empty() {
        (None, None, None, None, Verdict::NotPerformed)
    } else {
        let prop = passed as f64 / pooled.len() as f64;
        let thr = cfg.proportion.threshold(alpha, pooled.len());
        let (worst, min_p) = rows
            .iter()
            .map(|row| uniformity_p(row))
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least one sub-test");
        let unif = (min_p * rows.len() as f64).min(1.0);
        let ok = prop >= thr && unif >= cfg.uniformity_threshold;
        (
            Some(prop),
            Some(thr),
            Some(unif),
            Some(worst),
            if ok { Verdict::Pass } else { Verdict::Fail },
        )
    };
    TestSummary {
        id,
        name: id.name().to_string(),
        streams_tested: tested,
        streams_insufficient: column.len() - tested,
        sub_tests: rows.len(),
        p_value_count: pooled.len(),
        p_values_passed: passed,
        proportion,
        proportion_threshold: threshold,
        uniformity_p: uniformity,
        worst_sub_test: worst,
        verdict,
        insufficient_reasons: reasons,
    }
}
