//! The fifteen NIST SP 800-22 statistical tests.
//!
//! Each test has a raw function operating on unpacked bits (`0`/`1` bytes)
//! with no length checks, used directly by known-answer tests, and an entry
//! in [`run_test`] that enforces the recommended minimum input sizes.

use crate::special::{erfc, igamc, normal_cdf};
use dlt_core::model::BitStream;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, SQRT_2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestId {
    Frequency,
    BlockFrequency,
    CumulativeSums,
    Runs,
    LongestRun,
    Rank,
    Fft,
    NonOverlappingTemplate,
    OverlappingTemplate,
    Universal,
    ApproximateEntropy,
    RandomExcursions,
    RandomExcursionsVariant,
    Serial,
    LinearComplexity,
}

impl TestId {
    pub const ALL: [TestId; 15] = [
        TestId::Frequency,
        TestId::BlockFrequency,
        TestId::CumulativeSums,
        TestId::Runs,
        TestId::LongestRun,
        TestId::Rank,
        TestId::Fft,
        TestId::NonOverlappingTemplate,
        TestId::OverlappingTemplate,
        TestId::Universal,
        TestId::ApproximateEntropy,
        TestId::RandomExcursions,
        TestId::RandomExcursionsVariant,
        TestId::Serial,
        TestId::LinearComplexity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestId::Frequency => "Frequency",
            TestId::BlockFrequency => "BlockFrequency",
            TestId::CumulativeSums => "CumulativeSums",
            TestId::Runs => "Runs",
            TestId::LongestRun => "LongestRun",
            TestId::Rank => "Rank",
            TestId::Fft => "FFT",
            TestId::NonOverlappingTemplate => "NonOverlappingTemplate",
            TestId::OverlappingTemplate => "OverlappingTemplate",
            TestId::Universal => "Universal",
            TestId::ApproximateEntropy => "ApproximateEntropy",
            TestId::RandomExcursions => "RandomExcursions",
            TestId::RandomExcursionsVariant => "RandomExcursionsVariant",
            TestId::Serial => "Serial",
            TestId::LinearComplexity => "LinearComplexity",
        }
    }
}

impl std::fmt::Display for TestId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Tunable test parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestParams {
    pub block_frequency_block: usize,
    pub non_overlapping_template_len: usize,
    pub approximate_entropy_m: usize,
    pub serial_m: usize,
    pub linear_complexity_block: usize,
    /// Per-stream significance level.
    pub alpha: f64,
}

impl Default for TestParams {
    fn default() -> Self {
        TestParams {
            block_frequency_block: 128,
            non_overlapping_template_len: 9,
            approximate_entropy_m: 2,
            serial_m: 16,
            linear_complexity_block: 500,
            alpha: 0.01,
        }
    }
}

impl TestParams {
    pub fn validate(&self) -> Result<(), String> {
        let mut errs = Vec::new();
        if self.block_frequency_block < 2 {
            errs.push("block_frequency_block must be at least 2".to_string());
        }
        if !(2..=16).contains(&self.non_overlapping_template_len) {
            errs.push("non_overlapping_template_len must be in 2..=16".to_string());
        }
        if !(1..=20).contains(&self.approximate_entropy_m) {
            errs.push("approximate_entropy_m must be in 1..=20".to_string());
        }
        if !(3..=24).contains(&self.serial_m) {
            errs.push("serial_m must be in 3..=24".to_string());
        }
        if !(2..=5000).contains(&self.linear_complexity_block) {
            errs.push("linear_complexity_block must be in 2..=5000".to_string());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            errs.push("alpha must be in (0, 1)".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs.join("; "))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestStatus {
    Pass,
    Fail,
    InsufficientData,
}

/// Outcome of one test on one stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub id: TestId,
    pub p_values: Vec<f64>,
    pub status: TestStatus,
    /// The unmet prerequisite when `status` is insufficient-data.
    pub requirement: Option<String>,
}

impl TestResult {
    fn scored(id: TestId, p_values: Vec<f64>, alpha: f64) -> Self {
        let pass = p_values.iter().all(|&p| p >= alpha);
        TestResult {
            id,
            p_values,
            status: if pass {
                TestStatus::Pass
            } else {
                TestStatus::Fail
            },
            requirement: None,
        }
    }

    fn insufficient(id: TestId, requirement: String) -> Self {
        TestResult {
            id,
            p_values: Vec::new(),
            status: TestStatus::InsufficientData,
            requirement: Some(requirement),
        }
    }
}

/// Recommended minimum stream length of a test.
pub fn minimum_length(id: TestId, params: &TestParams) -> usize {
    match id {
        TestId::Frequency | TestId::CumulativeSums | TestId::Runs => 100,
        TestId::BlockFrequency => 100.max(params.block_frequency_block),
        TestId::LongestRun => 128,
        TestId::Rank => 38 * 32 * 32,
        TestId::Fft => 1000,
        TestId::NonOverlappingTemplate => {
            // At least five expected matches per block.
            let m = params.non_overlapping_template_len;
            NON_OVERLAPPING_BLOCKS * (5 * (1 << m) + m - 1)
        }
        TestId::OverlappingTemplate => 1_000_000,
        TestId::Universal => UNIVERSAL_MIN_LEN,
        TestId::ApproximateEntropy => 1 << (params.approximate_entropy_m + 6),
        TestId::RandomExcursions | TestId::RandomExcursionsVariant => 1_000_000,
        TestId::Serial => 1 << (params.serial_m + 3),
        TestId::LinearComplexity => 200 * params.linear_complexity_block,
    }
}

/// Runs one test on a packed stream.
pub fn run_test(id: TestId, stream: &BitStream, params: &TestParams) -> TestResult {
    run_test_unpacked(id, &stream.to_unpacked(), params)
}

/// Runs one test on unpacked bits.
pub fn run_test_unpacked(id: TestId, bits: &[u8], params: &TestParams) -> TestResult {
    let n = bits.len();
    let min = minimum_length(id, params);
    if n < min {
        return TestResult::insufficient(id, format!("stream length {n} < {min}"));
    }
    let alpha = params.alpha;
    let p = match id {
        TestId::Frequency => vec![frequency(bits)],
        TestId::BlockFrequency => vec![block_frequency(bits, params.block_frequency_block)],
        TestId::CumulativeSums => cumulative_sums(bits).to_vec(),
        TestId::Runs => vec![runs(bits)],
        TestId::LongestRun => vec![longest_run(bits)],
        TestId::Rank => vec![rank(bits, 32, 32)],
        TestId::Fft => vec![dft(bits)],
        TestId::NonOverlappingTemplate => non_overlapping_template(
            bits,
            params.non_overlapping_template_len,
            NON_OVERLAPPING_BLOCKS,
        ),
        TestId::OverlappingTemplate => vec![overlapping_template(bits)],
        TestId::Universal => {
            let (l, q) = universal_params(n).expect("length checked above");
            vec![universal(bits, l, q).0]
        }
        TestId::ApproximateEntropy => vec![approximate_entropy(bits, params.approximate_entropy_m)],
        TestId::RandomExcursions | TestId::RandomExcursionsVariant => {
            let ex = if id == TestId::RandomExcursions {
                random_excursions(bits)
            } else {
                random_excursions_variant(bits)
            };
            let need = excursion_cycle_minimum(n);
            if (ex.cycles as f64) < need {
                return TestResult::insufficient(id, format!("{} cycles < {need}", ex.cycles));
            }
            ex.p_values
        }
        TestId::Serial => serial(bits, params.serial_m).to_vec(),
        TestId::LinearComplexity => vec![linear_complexity(bits, params.linear_complexity_block)],
    };
    TestResult::scored(id, p, alpha)
}

pub fn frequency(bits: &[u8]) -> f64 {
    let n = bits.len() as f64;
    let ones = bits.iter().map(|&b| b as i64).sum::<i64>();
    let s = 2 * ones - bits.len() as i64;
    erfc((s.abs() as f64 / n.sqrt()) / SQRT_2)
}

pub fn block_frequency(bits: &[u8], m: usize) -> f64 {
    let blocks = bits.len() / m;
    let chi: f64 = bits
        .chunks_exact(m)
        .take(blocks)
        .map(|b| {
            let pi = b.iter().map(|&x| x as usize).sum::<usize>() as f64 / m as f64;
            (pi - 0.5).powi(2)
        })
        .sum::<f64>()
        * 4.0
        * m as f64;
    igamc(blocks as f64 / 2.0, chi / 2.0)
}

/// Forward and backward p-values.
pub fn cumulative_sums(bits: &[u8]) -> [f64; 2] {
    let max_excursion = |iter: &mut dyn Iterator<Item = &u8>| {
        let (mut s, mut z) = (0i64, 0i64);
        for &b in iter {
            s += 2 * b as i64 - 1;
            z = z.max(s.abs());
        }
        z
    };
    let n = bits.len() as i64;
    let forward = max_excursion(&mut bits.iter());
    let backward = max_excursion(&mut bits.iter().rev());
    [cusum_p(n, forward), cusum_p(n, backward)]
}

fn cusum_p(n: i64, z: i64) -> f64 {
    let sqrt_n = (n as f64).sqrt();
    let zf = z as f64;
    let mut sum1 = 0.0;
    let mut k = (-n / z + 1) / 4;
    while k <= (n / z - 1) / 4 {
        let kf = k as f64;
        sum1 +=
            normal_cdf((4.0 * kf + 1.0) * zf / sqrt_n) - normal_cdf((4.0 * kf - 1.0) * zf / sqrt_n);
        k += 1;
    }
    let mut sum2 = 0.0;
    let mut k = (-n / z - 3) / 4;
    while k <= (n / z - 1) / 4 {
        let kf = k as f64;
        sum2 +=
            normal_cdf((4.0 * kf + 3.0) * zf / sqrt_n) - normal_cdf((4.0 * kf + 1.0) * zf / sqrt_n);
        k += 1;
    }
    (1.0 - sum1 + sum2).clamp(0.0, 1.0)
}

/// Returns 0 when the frequency prerequisite fails.
pub fn runs(bits: &[u8]) -> f64 {
    let n = bits.len() as f64;
    let ones = bits.iter().map(|&b| b as usize).sum::<usize>() as f64;
    // Integer-count form keeps the statistic exactly complement symmetric.
    if (2.0 * ones - n).abs() / (2.0 * n) >= 2.0 / n.sqrt() {
        return 0.0;
    }
    let spread = ones * (n - ones) / (n * n);
    let v = 1 + bits.windows(2).filter(|w| w[0] != w[1]).count();
    let num = (v as f64 - 2.0 * n * spread).abs();
    erfc(num / (2.0 * (2.0 * n).sqrt() * spread))
}

struct LongestRunTable {
    block: usize,
    /// Longest-run value mapped to class 0.
    floor: usize,
    probs: &'static [f64],
}

const LONGEST_RUN_8: LongestRunTable = LongestRunTable {
    block: 8,
    floor: 1,
    probs: &[0.2148, 0.3672, 0.2305, 0.1875],
};
const LONGEST_RUN_128: LongestRunTable = LongestRunTable {
    block: 128,
    floor: 4,
    probs: &[0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124],
};
const LONGEST_RUN_10K: LongestRunTable = LongestRunTable {
    block: 10_000,
    floor: 10,
    probs: &[0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727],
};

pub fn longest_run(bits: &[u8]) -> f64 {
    let n = bits.len();
    let table = if n < 6272 {
        &LONGEST_RUN_8
    } else if n < 750_000 {
        &LONGEST_RUN_128
    } else {
        &LONGEST_RUN_10K
    };
    let k = table.probs.len() - 1;
    let blocks = n / table.block;
    let mut counts = vec![0usize; k + 1];
    for block in bits.chunks_exact(table.block).take(blocks) {
        let (mut best, mut cur) = (0usize, 0usize);
        for &b in block {
            cur = if b == 1 { cur + 1 } else { 0 };
            best = best.max(cur);
        }
        counts[best.saturating_sub(table.floor).min(k)] += 1;
    }
    let nf = blocks as f64;
    let chi: f64 = counts
        .iter()
        .zip(table.probs)
        .map(|(&c, &p)| (c as f64 - nf * p).powi(2) / (nf * p))
        .sum();
    igamc(k as f64 / 2.0, chi / 2.0)
}

/// Probability that a random `rows × cols` binary matrix has rank `r`.
pub fn rank_probability(r: u32, rows: u32, cols: u32) -> f64 {
    let (m, q) = (rows as i32, cols as i32);
    let r = r as i32;
    let mut p = 2f64.powi(r * (q + m - r) - m * q);
    for i in 0..r {
        p *= (1.0 - 2f64.powi(i - q)) * (1.0 - 2f64.powi(i - m)) / (1.0 - 2f64.powi(i - r));
    }
    p
}

/// Rank of a binary matrix whose rows are the low `cols` bits of each word.
pub fn gf2_rank(rows: &mut [u64], cols: u32) -> u32 {
    let mut rank = 0usize;
    for c in (0..cols).rev() {
        let bit = 1u64 << c;
        let Some(pivot) = (rank..rows.len()).find(|&i| rows[i] & bit != 0) else {
            continue;
        };
        rows.swap(rank, pivot);
        let pr = rows[rank];
        for (i, row) in rows.iter_mut().enumerate() {
            if i != rank && *row & bit != 0 {
                *row ^= pr;
            }
        }
        rank += 1;
    }
    rank as u32
}

pub fn rank(bits: &[u8], rows: u32, cols: u32) -> f64 {
    let size = (rows * cols) as usize;
    let blocks = bits.len() / size;
    let full = rows.min(cols);
    let mut counts = [0usize; 3];
    let mut matrix = vec![0u64; rows as usize];
    for block in bits.chunks_exact(size).take(blocks) {
        for (r, row) in block.chunks_exact(cols as usize).enumerate() {
            matrix[r] = row.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64);
        }
        let rk = gf2_rank(&mut matrix, cols);
        let class = if rk == full {
            0
        } else if rk + 1 == full {
            1
        } else {
            2
        };
        counts[class] += 1;
    }
    let p0 = rank_probability(full, rows, cols);
    let p1 = rank_probability(full - 1, rows, cols);
    let probs = [p0, p1, 1.0 - p0 - p1];
    let nf = blocks as f64;
    let chi: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, p)| (c as f64 - nf * p).powi(2) / (nf * p))
        .sum();
    (-chi / 2.0).exp()
}

pub fn dft(bits: &[u8]) -> f64 {
    let n = bits.len();
    let mut buf: Vec<Complex<f64>> = bits
        .iter()
        .map(|&b| Complex::new(2.0 * b as f64 - 1.0, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let nf = n as f64;
    let threshold = ((1.0f64 / 0.05).ln() * nf).sqrt();
    let below = buf[..n / 2].iter().filter(|c| c.norm() < threshold).count();
    let expected = 0.95 * nf / 2.0;
    let d = (below as f64 - expected) / (nf * 0.95 * 0.05 / 4.0).sqrt();
    erfc(d.abs() / SQRT_2)
}

pub const NON_OVERLAPPING_BLOCKS: usize = 8;

/// `m`-bit templates that cannot overlap a shifted copy of themselves,
/// ascending by value (MSB first).
pub fn aperiodic_templates(m: usize) -> Vec<u32> {
    (0u32..1 << m)
        .filter(|&t| {
            (1..m).all(|s| {
                let mask = (1u32 << (m - s)) - 1;
                (t >> s) & mask != t & mask
            })
        })
        .collect()
}

/// One p-value per aperiodic template of length `m`.
pub fn non_overlapping_template(bits: &[u8], m: usize, blocks: usize) -> Vec<f64> {
    let templates = aperiodic_templates(m);
    let mut slot = vec![usize::MAX; 1 << m];
    for (i, &t) in templates.iter().enumerate() {
        slot[t as usize] = i;
    }
    let counts = count_non_overlapping(bits, m, blocks, &slot, templates.len());
    templates
        .iter()
        .enumerate()
        .map(|(i, _)| non_overlapping_p(&counts[i], bits.len() / blocks, m))
        .collect()
}

/// P-value for a single template given as bits.
pub fn non_overlapping_single(bits: &[u8], template: &[u8], blocks: usize) -> f64 {
    let m = template.len();
    let value = template
        .iter()
        .fold(0usize, |acc, &b| (acc << 1) | b as usize);
    let mut slot = vec![usize::MAX; 1 << m];
    slot[value] = 0;
    let counts = count_non_overlapping(bits, m, blocks, &slot, 1);
    non_overlapping_p(&counts[0], bits.len() / blocks, m)
}

fn count_non_overlapping(
    bits: &[u8],
    m: usize,
    blocks: usize,
    slot: &[usize],
    templates: usize,
) -> Vec<Vec<u32>> {
    let block_len = bits.len() / blocks;
    let mask = (1usize << m) - 1;
    let mut counts = vec![vec![0u32; blocks]; templates];
    let mut next = vec![0usize; templates];
    for (j, block) in bits.chunks_exact(block_len).take(blocks).enumerate() {
        next.iter_mut().for_each(|x| *x = 0);
        let mut window = 0usize;
        for (i, &b) in block.iter().enumerate() {
            window = ((window << 1) | b as usize) & mask;
            if i + 1 < m {
                continue;
            }
            let start = i + 1 - m;
            let t = slot[window];
            if t != usize::MAX && start >= next[t] {
                counts[t][j] += 1;
                next[t] = start + m;
            }
        }
    }
    counts
}

fn non_overlapping_p(counts: &[u32], block_len: usize, m: usize) -> f64 {
    let two_m = (1u64 << m) as f64;
    let mu = (block_len - m + 1) as f64 / two_m;
    let var = block_len as f64 * (1.0 / two_m - (2.0 * m as f64 - 1.0) / (two_m * two_m));
    let chi: f64 = counts.iter().map(|&w| (w as f64 - mu).powi(2) / var).sum();
    igamc(counts.len() as f64 / 2.0, chi / 2.0)
}

const OVERLAPPING_M: usize = 9;
const OVERLAPPING_BLOCK: usize = 1032;
/// Class probabilities for 0..4 and >= 5 matches of nine ones in 1032 bits.
const OVERLAPPING_PROBS: [f64; 6] = [0.364091, 0.185659, 0.139381, 0.100571, 0.0704323, 0.139865];

/// Counts overlapping runs of nine ones in 1032-bit blocks.
pub fn overlapping_template(bits: &[u8]) -> f64 {
    let blocks = bits.len() / OVERLAPPING_BLOCK;
    let mut classes = [0usize; 6];
    for block in bits.chunks_exact(OVERLAPPING_BLOCK).take(blocks) {
        let mut run = 0usize;
        let mut hits = 0usize;
        for &b in block {
            run = if b == 1 { run + 1 } else { 0 };
            if run >= OVERLAPPING_M {
                hits += 1;
            }
        }
        classes[hits.min(5)] += 1;
    }
    let nf = blocks as f64;
    let chi: f64 = classes
        .iter()
        .zip(OVERLAPPING_PROBS)
        .map(|(&c, p)| (c as f64 - nf * p).powi(2) / (nf * p))
        .sum();
    igamc(5.0 / 2.0, chi / 2.0)
}

const UNIVERSAL_MIN_LEN: usize = 387_840;
const UNIVERSAL_THRESHOLDS: [(usize, usize); 11] = [
    (387_840, 6),
    (904_960, 7),
    (2_068_480, 8),
    (4_654_080, 9),
    (10_342_400, 10),
    (22_753_280, 11),
    (49_643_520, 12),
    (107_560_960, 13),
    (231_669_760, 14),
    (496_435_200, 15),
    (1_059_061_760, 16),
];
const UNIVERSAL_EXPECTED: [f64; 17] = [
    0.0, 0.7326495, 1.5374383, 2.4016068, 3.3112247, 4.2534266, 5.2177052, 6.1962507, 7.1836656,
    8.1764248, 9.1723243, 10.170032, 11.168765, 12.168070, 13.167693, 14.167488, 15.167379,
];
const UNIVERSAL_VARIANCE: [f64; 17] = [
    0.0, 0.690, 1.338, 1.901, 2.358, 2.705, 2.954, 3.125, 3.238, 3.311, 3.356, 3.384, 3.401, 3.410,
    3.416, 3.419, 3.421,
];

/// Block length `L` and initialization blocks `Q` for a stream of length `n`.
pub fn universal_params(n: usize) -> Option<(usize, usize)> {
    let l = UNIVERSAL_THRESHOLDS
        .iter()
        .rev()
        .find(|&&(min, _)| n >= min)?
        .1;
    Some((l, 10 << l))
}

/// Returns the p-value and the test statistic.
pub fn universal(bits: &[u8], l: usize, q: usize) -> (f64, f64) {
    let k = bits.len() / l - q;
    let mut last = vec![0usize; 1 << l];
    let value = |i: usize| {
        bits[i * l..(i + 1) * l]
            .iter()
            .fold(0usize, |acc, &b| (acc << 1) | b as usize)
    };
    for i in 0..q {
        last[value(i)] = i + 1;
    }
    let mut sum = 0.0;
    for i in q..q + k {
        let v = value(i);
        sum += ((i + 1 - last[v]) as f64).log2();
        last[v] = i + 1;
    }
    let kf = k as f64;
    let lf = l as f64;
    let f_n = sum / kf;
    let c = 0.7 - 0.8 / lf + (4.0 + 32.0 / lf) * kf.powf(-3.0 / lf) / 15.0;
    let sigma = c * (UNIVERSAL_VARIANCE[l] / kf).sqrt();
    let p = erfc(((f_n - UNIVERSAL_EXPECTED[l]) / (SQRT_2 * sigma)).abs());
    (p, f_n)
}

/// Counts of every `m`-bit window, wrapping around the end of the stream.
fn pattern_counts(bits: &[u8], m: usize) -> Vec<u64> {
    let mut counts = vec![0u64; 1 << m];
    if m == 0 {
        return counts;
    }
    let n = bits.len();
    let mask = (1usize << m) - 1;
    let mut window = 0usize;
    for j in 0..n + m - 1 {
        window = ((window << 1) | bits[j % n] as usize) & mask;
        if j + 1 >= m {
            counts[window] += 1;
        }
    }
    counts
}

pub fn approximate_entropy(bits: &[u8], m: usize) -> f64 {
    let n = bits.len() as f64;
    let phi = |m: usize| -> f64 {
        if m == 0 {
            return 0.0;
        }
        pattern_counts(bits, m)
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let f = c as f64 / n;
                f * f.ln()
            })
            .sum()
    };
    let apen = phi(m) - phi(m + 1);
    let chi = 2.0 * n * (LN_2 - apen);
    igamc((1u64 << (m - 1)) as f64, chi / 2.0)
}

/// Per-state p-values plus the number of zero-return cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct Excursions {
    pub cycles: usize,
    pub p_values: Vec<f64>,
}

/// Cycles needed before the excursion tests apply.
pub fn excursion_cycle_minimum(n: usize) -> f64 {
    (0.005 * (n as f64).sqrt()).max(500.0)
}

pub const EXCURSION_STATES: [i64; 8] = [-4, -3, -2, -1, 1, 2, 3, 4];
pub const VARIANT_STATES: [i64; 18] = [
    -9, -8, -7, -6, -5, -4, -3, -2, -1, 1, 2, 3, 4, 5, 6, 7, 8, 9,
];

fn excursion_probs(x: i64) -> [f64; 6] {
    let ax = x.unsigned_abs() as f64;
    let q = 1.0 - 1.0 / (2.0 * ax);
    let mut p = [0.0; 6];
    p[0] = q;
    for (k, slot) in p.iter_mut().enumerate().take(5).skip(1) {
        *slot = 1.0 / (4.0 * ax * ax) * q.powi(k as i32 - 1);
    }
    p[5] = 1.0 / (2.0 * ax) * q.powi(4);
    p
}

pub fn random_excursions(bits: &[u8]) -> Excursions {
    // visits[state][k] = cycles with k visits (k capped at 5).
    let mut visits = [[0u64; 6]; 8];
    let mut current = [0u32; 8];
    let mut cycles = 0usize;
    let mut s = 0i64;
    let close = |current: &mut [u32; 8], visits: &mut [[u64; 6]; 8]| {
        for (v, c) in visits.iter_mut().zip(current.iter_mut()) {
            v[(*c).min(5) as usize] += 1;
            *c = 0;
        }
    };
    for &b in bits {
        s += 2 * b as i64 - 1;
        if s == 0 {
            close(&mut current, &mut visits);
            cycles += 1;
        } else if (-4..=4).contains(&s) {
            let idx = if s < 0 {
                (s + 4) as usize
            } else {
                (s + 3) as usize
            };
            current[idx] += 1;
        }
    }
    if s != 0 {
        close(&mut current, &mut visits);
        cycles += 1;
    }
    let j = cycles as f64;
    let p_values = EXCURSION_STATES
        .iter()
        .zip(&visits)
        .map(|(&x, nu)| {
            let chi: f64 = nu
                .iter()
                .zip(excursion_probs(x))
                .map(|(&c, p)| (c as f64 - j * p).powi(2) / (j * p))
                .sum();
            igamc(2.5, chi / 2.0)
        })
        .collect();
    Excursions { cycles, p_values }
}

pub fn random_excursions_variant(bits: &[u8]) -> Excursions {
    let mut visits = [0u64; 19];
    let mut zeros = 0usize;
    let mut s = 0i64;
    for &b in bits {
        s += 2 * b as i64 - 1;
        if s == 0 {
            zeros += 1;
        } else if (-9..=9).contains(&s) {
            visits[(s + 9) as usize] += 1;
        }
    }
    let cycles = zeros + (s != 0) as usize;
    let j = cycles as f64;
    let p_values = VARIANT_STATES
        .iter()
        .map(|&x| {
            let xi = visits[(x + 9) as usize] as f64;
            erfc((xi - j).abs() / (2.0 * j * (4.0 * x.unsigned_abs() as f64 - 2.0)).sqrt())
        })
        .collect();
    Excursions { cycles, p_values }
}

fn psi_squared(bits: &[u8], m: usize) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let n = bits.len() as f64;
    let sum: f64 = pattern_counts(bits, m)
        .iter()
        .map(|&c| (c * c) as f64)
        .sum();
    (1u64 << m) as f64 / n * sum - n
}

pub fn serial(bits: &[u8], m: usize) -> [f64; 2] {
    let (a, b, c) = (
        psi_squared(bits, m),
        psi_squared(bits, m - 1),
        psi_squared(bits, m - 2),
    );
    let del1 = a - b;
    let del2 = a - 2.0 * b + c;
    [
        igamc((1u64 << (m - 2)) as f64, del1 / 2.0),
        igamc((1u64 << (m - 3)) as f64, del2 / 2.0),
    ]
}

/// Length of the shortest LFSR generating `seq`.
pub fn berlekamp_massey(seq: &[u8]) -> usize {
    let words = seq.len() / 64 + 1;
    let mut c = vec![0u64; words];
    let mut b = vec![0u64; words];
    let mut spare = vec![0u64; words];
    // window[i] = seq[n - i] at step n.
    let mut window = vec![0u64; words];
    c[0] = 1;
    b[0] = 1;
    let mut len = 0usize;
    let mut m: isize = -1;
    for (n, &bit) in seq.iter().enumerate() {
        let mut carry = bit as u64;
        for w in window.iter_mut() {
            let out = *w >> 63;
            *w = (*w << 1) | carry;
            carry = out;
        }
        let d = c
            .iter()
            .zip(&window)
            .fold(0u32, |acc, (x, y)| acc ^ (x & y).count_ones())
            & 1;
        if d == 0 {
            continue;
        }
        let shift = (n as isize - m) as usize;
        if 2 * len <= n {
            spare.copy_from_slice(&c);
            xor_shifted(&mut c, &b, shift);
            std::mem::swap(&mut b, &mut spare);
            len = n + 1 - len;
            m = n as isize;
        } else {
            xor_shifted(&mut c, &b, shift);
        }
    }
    len
}

/// `dst ^= src << shift` on little-endian bit vectors.
fn xor_shifted(dst: &mut [u64], src: &[u64], shift: usize) {
    let (word, bit) = (shift / 64, shift % 64);
    for i in (word..dst.len()).rev() {
        let j = i - word;
        let mut v = src[j] << bit;
        if bit != 0 && j > 0 {
            v |= src[j - 1] >> (64 - bit);
        }
        dst[i] ^= v;
    }
}

const LINEAR_COMPLEXITY_PROBS: [f64; 7] = [
    1.0 / 96.0,
    1.0 / 32.0,
    1.0 / 8.0,
    1.0 / 2.0,
    1.0 / 4.0,
    1.0 / 16.0,
    1.0 / 48.0,
];

pub fn linear_complexity(bits: &[u8], m: usize) -> f64 {
    let blocks = bits.len() / m;
    let mf = m as f64;
    let sign = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
    let mu = mf / 2.0 + (9.0 - sign) / 36.0 - (mf / 3.0 + 2.0 / 9.0) / 2f64.powi(m as i32);
    let mut classes = [0usize; 7];
    for block in bits.chunks_exact(m).take(blocks) {
        let l = berlekamp_massey(block) as f64;
        let t = sign * (l - mu) + 2.0 / 9.0;
        let class = if t <= -2.5 {
            0
        } else if t <= -1.5 {
            1
        } else if t <= -0.5 {
            2
        } else if t <= 0.5 {
            3
        } else if t <= 1.5 {
            4
        } else if t <= 2.5 {
            5
        } else {
            6
        };
        classes[class] += 1;
    }
    let nf = blocks as f64;
    let chi: f64 = classes
        .iter()
        .zip(LINEAR_COMPLEXITY_PROBS)
        .map(|(&c, p)| (c as f64 - nf * p).powi(2) / (nf * p))
        .sum();
    igamc(3.0, chi / 2.0)
}
