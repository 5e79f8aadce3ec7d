//! Command-line arguments and dispatch.

use crate::commands;
use crate::config::{resolve_config_path, NamedCondition, PipelineConfig, ValidationError};
use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use dlt_core::extract::{HashAlgorithm, ThroughputParams};
use dlt_core::filter::{BiasWindow, WindowMode};
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "dltrng", version, about = "DRAM reduced-latency TRNG pipeline")]
pub struct Cli {
    /// Pipeline config (TOML); defaults to $DLTRNG_CONFIG_PATH.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the device seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the device population with a named preset.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the characterization campaign and write DLT1 dumps.
    Measure {
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify cells from a directory of dumps.
    Characterize {
        #[arg(long)]
        dumps: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select unbiased noisy cells into an enrollment database.
    Enroll {
        #[arg(long)]
        charmap: PathBuf,
        /// Ones-fraction window as `lo,hi`.
        #[arg(long, default_value = "0.4,0.6", value_parser = parse_window)]
        window: BiasWindow,
        #[arg(long, default_value = "pooled")]
        mode: WindowMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate conditioned random bits from an enrollment.
    Generate {
        #[arg(long)]
        enrollment: PathBuf,
        /// Output bits; defaults to `generate.bits` from the config.
        #[arg(long)]
        bits: Option<u64>,
        /// Operating condition such as `+20C` or `-20mV`.
        #[arg(long, value_parser = NamedCondition::parse)]
        condition: Option<NamedCondition>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the statistical suite on stream files or freshly generated bits.
    Test(TestArgs),
    /// Evaluate the throughput model.
    Throughput(ThroughputArgs),
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// Packed bitstream files, concatenated in order.
    #[arg(long = "stream", conflicts_with = "inline")]
    pub streams: Vec<PathBuf>,
    /// Generate the streams from the enrollment instead of reading files.
    #[arg(long, requires = "enrollment")]
    pub inline: bool,
    /// Enrollment database; also enables the per-cell frequency test.
    #[arg(long)]
    pub enrollment: Option<PathBuf>,
    /// Comma-separated conditions for an inline sweep, e.g.
    /// `nominal,+20C,-20mV,+75mV`; defaults to the config sweep.
    #[arg(long, value_delimiter = ',', value_parser = NamedCondition::parse, requires = "inline")]
    pub conditions: Vec<NamedCondition>,
    /// Directory for report.json, report.txt and per-cell histograms.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ThroughputArgs {
    /// Take the bits per page from an enrollment database.
    #[arg(long, conflicts_with = "bits_per_page")]
    pub from_enrollment: Option<PathBuf>,
    /// Random bits harvested per DRAM page.
    #[arg(long)]
    pub bits_per_page: Option<f64>,
    /// Reduced-latency read time per page, in microseconds.
    #[arg(long)]
    pub page_time_us: Option<f64>,
    /// Hash cost in CPU cycles per input byte.
    #[arg(long)]
    pub cycles_per_byte: Option<f64>,
    /// CPU clock in GHz.
    #[arg(long)]
    pub clock_ghz: Option<f64>,
    #[arg(long, default_value = "sha-256", value_parser = parse_algorithm)]
    pub algorithm: HashAlgorithm,
    /// Also write the result as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

fn parse_window(s: &str) -> Result<BiasWindow, String> {
    let (lo, hi) = s.split_once(',').ok_or("expected `lo,hi`")?;
    let lo: f64 = lo.trim().parse().map_err(|_| "bad lower bound")?;
    let hi: f64 = hi.trim().parse().map_err(|_| "bad upper bound")?;
    BiasWindow::new(lo, hi).map_err(|e| e.to_string())
}

fn parse_algorithm(s: &str) -> Result<HashAlgorithm, String> {
    match s {
        "sha-256" | "sha256" => Ok(HashAlgorithm::Sha256),
        "sha-512" | "sha512" => Ok(HashAlgorithm::Sha512),
        other => Err(format!("unknown algorithm `{other}`")),
    }
}

/// Loads the config and applies command-line overrides.
pub fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let path = resolve_config_path(cli.config.as_deref())?;
    let mut cfg = PipelineConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        cfg.device.seed = seed;
    }
    if let Some(name) = &cli.preset {
        cfg.device.preset = Some(name.clone());
        cfg.device.population = None;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Measure { out } => {
            let cfg = load_config(&cli)?;
            let m = commands::measure(&cfg, out)?;
            println!(
                "wrote {} dumps and {}",
                m.manifest.dumps.len(),
                m.manifest_path.display()
            );
        }
        Command::Characterize { dumps, out } => {
            let s = commands::characterize(dumps, out)?;
            println!(
                "{} measurements over {} cells: pattern-independent {:.4}, noisy {:.4}, pattern-dependent {:.4}",
                s.total_measurements,
                s.pattern_independent + s.pattern_dependent + s.noisy,
                s.fraction_pattern_independent,
                s.fraction_noisy,
                s.fraction_pattern_dependent
            );
        }
        Command::Enroll {
            charmap,
            window,
            mode,
            out,
        } => {
            let s = commands::enroll(charmap, *window, *mode, out)?;
            println!(
                "enrolled {} of {} noisy cells ({:.4}); {} of {} pages occupied, {:.3} bits per occupied page",
                s.enrolled_cells,
                s.noisy_cells,
                s.enrolled_over_noisy,
                s.occupied_pages,
                s.total_pages,
                s.avg_bits_per_occupied_page
            );
        }
        Command::Generate {
            enrollment,
            bits,
            condition,
            out,
        } => {
            if *bits == Some(0) {
                bail!(ValidationError::single("--bits must be positive"));
            }
            let cfg = load_config(&cli)?;
            let bits = bits.unwrap_or(cfg.generate.bits);
            let cond = condition
                .as_ref()
                .map(NamedCondition::condition)
                .unwrap_or(cfg.condition);
            let side = commands::generate(&cfg, enrollment, bits, cond, out)?;
            println!(
                "wrote {} bits to {} (sha256 {})",
                side.bits,
                out.display(),
                side.sha256
            );
        }
        Command::Test(args) => {
            let cfg = load_config(&cli)?;
            let bundle = if args.inline {
                let conditions = if args.conditions.is_empty() {
                    cfg.sweep_conditions()
                } else {
                    args.conditions.clone()
                };
                let enrollment = args.enrollment.as_deref().expect("clap requires it");
                commands::test_inline(&cfg, enrollment, &conditions, &args.out)?
            } else {
                commands::test_streams(&cfg, &args.streams, args.enrollment.as_deref(), &args.out)?
            };
            print!("{}", bundle.to_table());
            println!(
                "overall: {}",
                if bundle.all_passed() { "PASS" } else { "FAIL" }
            );
        }
        Command::Throughput(args) => {
            let summary = commands::throughput(throughput_params(args)?)?;
            print!("{}", summary.to_table());
            if let Some(path) = &args.json {
                crate::artifacts::write_json(path, &summary)?;
            }
        }
    }
    Ok(())
}

fn throughput_params(args: &ThroughputArgs) -> Result<ThroughputParams> {
    let mut p = match &args.from_enrollment {
        Some(path) => commands::throughput_params_from_enrollment(Path::new(path), args.algorithm)?,
        None => {
            let cond = dlt_core::extract::ConditionerConfig::new(args.algorithm);
            ThroughputParams {
                digest_bits: cond.digest_bits() as f64,
                block_bits: cond.block_bits() as f64,
                ..ThroughputParams::reference()
            }
        }
    };
    if let Some(b) = args.bits_per_page {
        p.avg_random_bits_per_page = b;
    }
    if let Some(t) = args.page_time_us {
        p.page_read_time_s = t * 1e-6;
    }
    if let Some(c) = args.cycles_per_byte {
        p.hash_cycles_per_byte = c;
    }
    if let Some(g) = args.clock_ghz {
        p.clock_hz = g * 1e9;
    }
    Ok(p)
}

/// Maps an error to the process exit code: 2 for validation, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ValidationError>().is_some() {
        2
    } else {
        1
    }
}
