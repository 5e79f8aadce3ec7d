//! Pipeline stages behind each subcommand.

use crate::artifacts::*;
use crate::config::{ConditionConfig, NamedCondition, PipelineConfig, ValidationError};
use anyhow::{bail, Context, Result};
use dlt_core::characterize::{CharacterizationMap, Classifier};
use dlt_core::extract::{
    generate as generate_bits, hash_bound_throughput, throughput as model_throughput,
    ConditionerConfig, HashAlgorithm, ThroughputParams, GENERATION_BASE_INDEX,
};
use dlt_core::filter::{select_unbiased, BiasWindow, FilterSet, WindowMode};
use dlt_core::io::{capture_campaign, read_dump, write_dump};
use dlt_core::model::BitStream;
use dlt_stats::{clt_frequency_test, run_suite, CltReport, TestId, TestReport, Verdict};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

/// First measurement index of the CLT reads, clear of generation rounds.
pub const CLT_BASE_INDEX: u32 = 1 << 31;

pub const CHARMAP_FILE: &str = "charmap.dlc";
pub const MANIFEST_FILE: &str = "campaign.json";

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub struct MeasureOutcome {
    pub manifest: CampaignManifest,
    pub manifest_path: PathBuf,
}

/// Runs the characterization campaign and writes one dump per read.
pub fn measure(cfg: &PipelineConfig, out_dir: &Path) -> Result<MeasureOutcome> {
    cfg.validate()?;
    let digest = cfg.digest();
    let mut device = cfg.build_device()?;
    let mut dumps = capture_campaign(
        &mut device,
        &cfg.campaign.patterns,
        cfg.campaign.repeats,
        &cfg.campaign_spec(),
    )?;
    ensure_dir(out_dir)?;
    let mut entries = Vec::with_capacity(dumps.len());
    for (i, dump) in dumps.iter_mut().enumerate() {
        dump.header.label = format!("{DUMP_LABEL_PREFIX}{digest}");
        let spec = dump.header.spec;
        let name = format!("dump-{i:04}-p{:02x}.dlt", spec.input_pattern);
        let path = out_dir.join(&name);
        write_dump(&path, dump)?;
        entries.push(DumpEntry {
            file: name,
            pattern: spec.input_pattern,
            measurement_index: spec.measurement_index,
            sha256: file_sha256(&path)?,
        });
    }
    let manifest = CampaignManifest {
        config_digest: digest,
        seed: cfg.device.seed,
        preset: cfg.device.preset.clone(),
        geometry: cfg.geometry(),
        patterns: cfg.campaign.patterns.clone(),
        repeats: cfg.campaign.repeats,
        dumps: entries,
    };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    write_json(&manifest_path, &manifest)?;
    Ok(MeasureOutcome {
        manifest,
        manifest_path,
    })
}

fn dump_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "dlt"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!(ValidationError::single(format!(
            "no .dlt dumps in {}",
            dir.display()
        )));
    }
    Ok(files)
}

/// Classifies cells from the dumps in `dump_dir`, streaming each file twice.
pub fn characterize(dump_dir: &Path, out_dir: &Path) -> Result<CharacterizationSummary> {
    let files = dump_files(dump_dir)?;
    let mut classifier = Classifier::new();
    let mut labels = Vec::new();
    for f in &files {
        let dump = read_dump(f).with_context(|| format!("reading {}", f.display()))?;
        labels.push(dump.header.label.clone());
        classifier.observe(&dump)?;
    }
    let mut counter = classifier.into_counter()?;
    for f in &files {
        counter.count(&read_dump(f)?)?;
    }
    let mut map = counter.finish()?;
    let digest = labels
        .first()
        .filter(|l| labels.iter().all(|x| x == *l))
        .and_then(|l| l.strip_prefix(DUMP_LABEL_PREFIX))
        .map(str::to_string);
    if let Some(d) = &digest {
        map.set_config_digest(d.clone());
    }

    ensure_dir(out_dir)?;
    map.save(out_dir.join(CHARMAP_FILE))?;
    let summary = summarize_map(&map);
    write_json(&out_dir.join("characterization.json"), &summary)?;
    let hist = map.ones_histogram()?;
    let mut csv = digest_comment(digest.as_deref());
    csv.push_str("ones,fraction_percent,noisy_cells\n");
    let total = map.total_measurements() as f64;
    for (k, h) in hist.iter().enumerate() {
        let _ = writeln!(csv, "{k},{:.3},{h}", 100.0 * k as f64 / total);
    }
    fs::write(out_dir.join("ones_histogram.csv"), csv)?;
    Ok(summary)
}

fn digest_comment(digest: Option<&str>) -> String {
    format!("# config_digest={}\n", digest.unwrap_or("unknown"))
}

pub fn summarize_map(map: &CharacterizationMap) -> CharacterizationSummary {
    let [pi, pd, noisy] = map.class_counts();
    let [fpi, fpd, fnoisy] = map.class_fractions();
    CharacterizationSummary {
        config_digest: map.config_digest().map(str::to_string),
        campaign_id: map.campaign_id().to_string(),
        geometry: map.geometry(),
        total_measurements: map.total_measurements(),
        patterns: map.patterns().to_vec(),
        pattern_independent: pi,
        pattern_dependent: pd,
        noisy,
        fraction_pattern_independent: fpi,
        fraction_pattern_dependent: fpd,
        fraction_noisy: fnoisy,
        bank_fractions: map.bank_fractions(),
    }
}

/// Selects the enrolled cells and writes the enrollment database.
pub fn enroll(
    charmap: &Path,
    window: BiasWindow,
    mode: WindowMode,
    out: &Path,
) -> Result<EnrollmentSummary> {
    window
        .validate()
        .map_err(|e| ValidationError::single(e.to_string()))?;
    let map = CharacterizationMap::load(charmap)
        .with_context(|| format!("loading {}", charmap.display()))?;
    let set = select_unbiased(&map, window, mode)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    set.save(out)?;
    let stats = set.page_stats();
    let summary = EnrollmentSummary {
        config_digest: set.config_digest.clone(),
        campaign_id: set.campaign_id.clone(),
        enrollment_sha256: file_sha256(out)?,
        window: [window.lo, window.hi],
        mode: mode.to_string(),
        noisy_cells: map.noisy_count() as u64,
        enrolled_cells: set.len() as u64,
        enrolled_over_noisy: set.len() as f64 / map.noisy_count().max(1) as f64,
        occupied_pages: stats.occupied_pages,
        total_pages: stats.total_pages,
        occupied_fraction: stats.occupied_fraction,
        avg_bits_per_occupied_page: stats.avg_bits_per_occupied_page,
    };
    write_json(&sidecar_path(out), &summary)?;
    Ok(summary)
}

fn load_enrollment(cfg: &PipelineConfig, path: &Path) -> Result<(FilterSet, String)> {
    let set = FilterSet::load(path).with_context(|| format!("loading {}", path.display()))?;
    if set.geometry != cfg.geometry() {
        bail!(ValidationError::single(format!(
            "enrollment geometry {:?} does not match the configured device {:?}",
            set.geometry,
            cfg.geometry()
        )));
    }
    if set.is_empty() {
        bail!(ValidationError::single("enrollment set is empty"));
    }
    Ok((set, file_sha256(path)?))
}

/// Generates `bits` conditioned bits into a packed file plus sidecar.
pub fn generate(
    cfg: &PipelineConfig,
    enrollment: &Path,
    bits: u64,
    condition: ConditionConfig,
    out: &Path,
) -> Result<StreamSidecar> {
    if bits == 0 {
        bail!(ValidationError::single("bits: must be positive"));
    }
    cfg.validate()?;
    if let Err(e) = condition.to_condition() {
        bail!(ValidationError::single(format!("condition: {e}")));
    }
    let (set, enrollment_sha256) = load_enrollment(cfg, enrollment)?;
    let mut device = cfg.build_device()?;
    let spec = cfg
        .generation_spec(condition)
        .with_index(GENERATION_BASE_INDEX);
    let stream = generate_bits(&mut device, &set, &cfg.conditioner, bits as usize, &spec)?;
    let bytes = stream.into_bytes();
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    fs::write(out, &bytes).with_context(|| format!("writing {}", out.display()))?;
    let sidecar = StreamSidecar {
        format: STREAM_FORMAT.into(),
        bits,
        sha256: sha256_hex(&bytes),
        config_digest: cfg.digest(),
        enrollment_sha256,
        condition,
        conditioner: cfg.conditioner,
        pattern: cfg.generate.pattern,
        first_measurement_index: GENERATION_BASE_INDEX,
    };
    write_json(&sidecar_path(out), &sidecar)?;
    Ok(sidecar)
}

/// One column of a test run: a batch of streams under one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestColumn {
    pub name: String,
    pub condition: ConditionConfig,
    pub report: TestReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clt: Option<CltReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestBundle {
    pub config_digest: String,
    pub enrollment_sha256: Option<String>,
    pub columns: Vec<TestColumn>,
}

impl TestBundle {
    pub fn all_passed(&self) -> bool {
        self.columns.iter().all(|c| c.report.all_passed())
    }

    /// One row per test, one `uniformity / passed` column per condition.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "config {}", self.config_digest);
        let _ = write!(out, "{:<25}", "test");
        for c in &self.columns {
            let _ = write!(out, " | {:^24}", c.name);
        }
        out.push('\n');
        let _ = write!(out, "{:<25}", "");
        for _ in &self.columns {
            let _ = write!(out, " | {:>10} {:>8} {:>4}", "p", "S", "");
        }
        out.push('\n');
        for id in TestId::ALL {
            let _ = write!(out, "{:<25}", id.name());
            for c in &self.columns {
                match c.report.summary(id) {
                    Some(s) if s.verdict != Verdict::NotPerformed => {
                        let p = s.uniformity_p.unwrap_or(f64::NAN);
                        let frac = if s.sub_tests > 1 {
                            format!("{:.3}", s.proportion.unwrap_or(f64::NAN))
                        } else {
                            format!("{}/{}", s.p_values_passed, s.p_value_count)
                        };
                        let _ = write!(out, " | {p:>10.6} {frac:>8} {:>4}", s.verdict.to_string());
                    }
                    Some(_) => {
                        let _ = write!(out, " | {:>10} {:>8} {:>4}", "----", "----", "N/A");
                    }
                    None => {
                        let _ = write!(out, " | {:>24}", "");
                    }
                }
            }
            out.push('\n');
        }
        for c in self.columns.iter().filter(|c| c.clt.is_some()) {
            let clt = c.clt.as_ref().unwrap();
            let _ = writeln!(
                out,
                "CLT {}: n={} cells={} mean={:.2}% std={:.2}% (ideal {:.2}%)",
                c.name,
                clt.reads_per_cell,
                clt.cells,
                clt.mean_percent,
                clt.std_percent,
                clt.ideal_std_percent
            );
        }
        out
    }
}

fn split_streams(stream: &BitStream, cfg: &PipelineConfig) -> Result<Vec<BitStream>> {
    let (s, len) = (cfg.suite.streams, cfg.suite.stream_bits);
    if stream.len() < s * len {
        bail!(ValidationError::single(format!(
            "need {} bits for {s} streams of {len}, have {}",
            s * len,
            stream.len()
        )));
    }
    Ok((0..s).map(|i| stream.slice(i * len, len)).collect())
}

fn write_bundle(bundle: &TestBundle, out_dir: &Path) -> Result<()> {
    ensure_dir(out_dir)?;
    write_json(&out_dir.join("report.json"), bundle)?;
    fs::write(out_dir.join("report.txt"), bundle.to_table())?;
    for (i, c) in bundle.columns.iter().enumerate() {
        if let Some(clt) = &c.clt {
            let mut csv = digest_comment(Some(&bundle.config_digest));
            csv.push_str(&clt.to_csv());
            fs::write(out_dir.join(format!("clt-{i:02}.csv")), csv)?;
        }
    }
    Ok(())
}

/// Tests previously generated stream files.
pub fn test_streams(
    cfg: &PipelineConfig,
    streams: &[PathBuf],
    enrollment: Option<&Path>,
    out_dir: &Path,
) -> Result<TestBundle> {
    cfg.validate()?;
    if streams.is_empty() {
        bail!(ValidationError::single("no stream files given"));
    }
    let enrolled = enrollment.map(|p| load_enrollment(cfg, p)).transpose()?;
    let mut all = BitStream::new();
    let mut condition = None;
    for path in streams {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let side = sidecar_path(path);
        let bits = if side.exists() {
            let meta: StreamSidecar = read_json(&side)?;
            if meta.sha256 != sha256_hex(&bytes) {
                bail!(
                    "{} does not match the digest in its sidecar",
                    path.display()
                );
            }
            if let Some((_, sha)) = &enrolled {
                if &meta.enrollment_sha256 != sha {
                    bail!(ValidationError::single(format!(
                        "{} was generated from a different enrollment ({}…)",
                        path.display(),
                        &meta.enrollment_sha256[..12]
                    )));
                }
            }
            condition.get_or_insert(meta.condition);
            meta.bits as usize
        } else {
            if enrolled.is_some() {
                bail!(ValidationError::single(format!(
                    "{} has no sidecar, so its enrollment cannot be checked",
                    side.display()
                )));
            }
            bytes.len() * 8
        };
        all.extend_from(&BitStream::from_bytes(bytes, bits)?);
    }
    let batch = split_streams(&all, cfg)?;
    let report = run_suite(&batch, &cfg.suite.suite_config())?;
    let condition = condition.unwrap_or(cfg.condition);
    let clt = match &enrolled {
        Some((set, _)) => Some(run_clt(cfg, set, condition)?),
        None => None,
    };
    let bundle = TestBundle {
        config_digest: cfg.digest(),
        enrollment_sha256: enrolled.map(|(_, sha)| sha),
        columns: vec![TestColumn {
            name: "streams".into(),
            condition,
            report,
            clt,
        }],
    };
    write_bundle(&bundle, out_dir)?;
    Ok(bundle)
}

fn run_clt(cfg: &PipelineConfig, set: &FilterSet, condition: ConditionConfig) -> Result<CltReport> {
    let mut device = cfg.build_device()?;
    let spec = cfg.generation_spec(condition).with_index(CLT_BASE_INDEX);
    Ok(clt_frequency_test(
        &mut device,
        set,
        cfg.suite.clt_reads,
        &spec,
    )?)
}

/// Generates and tests one batch per condition.
pub fn test_inline(
    cfg: &PipelineConfig,
    enrollment: &Path,
    conditions: &[NamedCondition],
    out_dir: &Path,
) -> Result<TestBundle> {
    cfg.validate()?;
    let (set, enrollment_sha256) = load_enrollment(cfg, enrollment)?;
    let columns = conditions
        .iter()
        .map(|nc| test_condition(cfg, &set, nc))
        .collect::<Result<Vec<_>>>()?;
    let bundle = TestBundle {
        config_digest: cfg.digest(),
        enrollment_sha256: Some(enrollment_sha256),
        columns,
    };
    write_bundle(&bundle, out_dir)?;
    Ok(bundle)
}

/// Generates `streams × stream_bits` bits under one condition and scores them.
pub fn test_condition(
    cfg: &PipelineConfig,
    set: &FilterSet,
    nc: &NamedCondition,
) -> Result<TestColumn> {
    let condition = nc.condition();
    if let Err(e) = condition.to_condition() {
        bail!(ValidationError::single(format!(
            "condition {}: {e}",
            nc.name
        )));
    }
    let mut device = cfg.build_device()?;
    let spec = cfg
        .generation_spec(condition)
        .with_index(GENERATION_BASE_INDEX);
    let total = cfg.suite.streams * cfg.suite.stream_bits;
    let stream = generate_bits(&mut device, set, &cfg.conditioner, total, &spec)?;
    let report = run_suite(&split_streams(&stream, cfg)?, &cfg.suite.suite_config())?;
    let clt = run_clt(cfg, set, condition)?;
    Ok(TestColumn {
        name: nc.name.clone(),
        condition,
        report,
        clt: Some(clt),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputSummary {
    pub params: ThroughputParams,
    pub data_time_s: f64,
    pub hash_time_s: f64,
    pub throughput_bps: f64,
    pub hash_bound_bps: f64,
}

impl ThroughputSummary {
    pub fn to_table(&self) -> String {
        let p = &self.params;
        let rows = [
            ("digest bits", format!("{}", p.digest_bits)),
            ("block bits", format!("{}", p.block_bits)),
            (
                "random bits per page",
                format!("{:.3}", p.avg_random_bits_per_page),
            ),
            (
                "page read time",
                format!("{:.3} us", p.page_read_time_s * 1e6),
            ),
            (
                "hash cost",
                format!("{} cycles/byte", p.hash_cycles_per_byte),
            ),
            ("clock", format!("{:.3} GHz", p.clock_hz / 1e9)),
            (
                "data time per block",
                format!("{:.3} us", self.data_time_s * 1e6),
            ),
            (
                "hash time per block",
                format!("{:.3} us", self.hash_time_s * 1e6),
            ),
            (
                "throughput",
                format!("{:.4} Mbps", self.throughput_bps / 1e6),
            ),
            (
                "hash-bound throughput",
                format!("{:.4} Gbps", self.hash_bound_bps / 1e9),
            ),
        ];
        rows.iter().map(|(k, v)| format!("{k:<24}{v}\n")).collect()
    }
}

pub fn throughput(params: ThroughputParams) -> Result<ThroughputSummary> {
    params
        .validate()
        .map_err(|e| ValidationError::single(e.to_string()))?;
    Ok(ThroughputSummary {
        params,
        data_time_s: params.data_time_s(),
        hash_time_s: params.hash_time_s(),
        throughput_bps: model_throughput(&params)?,
        hash_bound_bps: hash_bound_throughput(&params)?,
    })
}

/// Reference parameters with the bits per page taken from an enrollment.
pub fn throughput_params_from_enrollment(
    path: &Path,
    algorithm: HashAlgorithm,
) -> Result<ThroughputParams> {
    let set = FilterSet::load(path).with_context(|| format!("loading {}", path.display()))?;
    let stats = set.page_stats();
    if stats.occupied_pages == 0 {
        bail!(ValidationError::single("enrollment has no occupied pages"));
    }
    let cond = ConditionerConfig::new(algorithm);
    Ok(ThroughputParams {
        digest_bits: cond.digest_bits() as f64,
        block_bits: cond.block_bits() as f64,
        avg_random_bits_per_page: stats.avg_bits_per_occupied_page,
        ..ThroughputParams::reference()
    })
}
