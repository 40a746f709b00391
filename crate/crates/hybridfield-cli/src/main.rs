//! Benchmark harness for the hybridfield channel-estimation library.
//!
//! Three subcommands: `sweep` runs a configured experiment and writes the
//! records plus a manifest, `estimate` runs a single trial of one scheme,
//! and `dict-info` reports polar-dictionary geometry with an optional
//! binary export. Exit codes: 0 success, 2 configuration error, 1 runtime
//! failure. All randomness derives from `--seed`.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use hybridfield::codebook::build_polar;
use hybridfield::metrics::{build_context, run_sweep, run_trial, Scheme};
use hybridfield::rng::derive_seed;
use hybridfield::Error as LibError;
use hybridfield_cli::config::{self, ConfigError};
use hybridfield_cli::{dictbin, output};

#[derive(Parser)]
#[command(
    name = "hybridfield",
    version,
    about = "Hybrid-field channel estimation benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the configured sweep; write records and a run manifest.
    Sweep {
        /// Experiment configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Records file to write; the manifest lands next to it.
        #[arg(long)]
        out: PathBuf,
        /// Master seed for every trial.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Records encoding.
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Run one trial of one scheme and print a single JSON record.
    Estimate {
        /// Experiment configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Scheme name (as in sweep.schemes).
        #[arg(long)]
        scheme: String,
        /// Master seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print dictionary geometry; optionally export the binary dictionary.
    #[command(name = "dict-info")]
    DictInfo {
        /// Experiment configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Write the base-station polar dictionary to this file.
        #[arg(long)]
        export: Option<PathBuf>,
    },
}

#[derive(Copy, Clone, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

/// Invalid-input failures from the library are configuration mistakes
/// (exit 2); anything else is a runtime failure (exit 1).
fn classify(e: LibError) -> anyhow::Error {
    match e {
        LibError::InvalidInput(_) => ConfigError(e.to_string()).into(),
        other => anyhow::anyhow!(other.to_string()),
    }
}

fn run() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Sweep {
            config,
            out,
            seed,
            format,
        } => cmd_sweep(&config, &out, seed, format),
        Cmd::Estimate {
            config,
            scheme,
            seed,
        } => cmd_estimate(&config, &scheme, seed),
        Cmd::DictInfo { config, export } => cmd_dict_info(&config, export.as_deref()),
    }
}

fn cmd_sweep(
    config: &std::path::Path,
    out: &std::path::Path,
    seed: u64,
    format: Format,
) -> Result<()> {
    let resolved = config::load(config)?;
    let exp = resolved.to_experiment(seed)?;
    let records = run_sweep(&exp).map_err(classify)?;
    let body = match format {
        Format::Csv => output::records_csv(&records),
        Format::Json => output::records_json(&records),
    };
    fs::write(out, body).with_context(|| format!("cannot write records to {}", out.display()))?;
    let manifest_path = PathBuf::from(format!("{}.manifest.json", out.display()));
    fs::write(&manifest_path, output::manifest_json(&resolved, seed))
        .with_context(|| format!("cannot write manifest to {}", manifest_path.display()))?;
    Ok(())
}

fn cmd_estimate(config: &std::path::Path, scheme: &str, seed: u64) -> Result<()> {
    let resolved = config::load(config)?;
    let exp = resolved.to_experiment(seed)?;
    let scheme = Scheme::parse(scheme).map_err(|e| ConfigError(e.to_string()))?;
    let axis_value = exp.sweep_values[0];
    let ctx = build_context(&exp, axis_value).map_err(classify)?;
    let trial_seed = derive_seed(exp.master_seed, axis_value.to_bits(), 0);
    let record = run_trial(&ctx, scheme, 0, trial_seed).map_err(classify)?;
    if record.failed {
        bail!("scheme {scheme} failed on this instance");
    }
    let mut fields = serde_json::Map::new();
    fields.insert("nmse_db".into(), json_f64(record.nmse_db()));
    fields.insert("rate_bits".into(), json_f64(record.rate_bits));
    if let Some(g) = record.gamma_hat {
        fields.insert("gamma_hat".into(), json_f64(g));
    }
    fields.insert("mult_count".into(), record.mult_count.into());
    println!("{}", serde_json::Value::Object(fields));
    Ok(())
}

fn json_f64(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(v)
        .map(serde_json::Value::Number)
        .unwrap_or(serde_json::Value::Null)
}

fn cmd_dict_info(config: &std::path::Path, export: Option<&std::path::Path>) -> Result<()> {
    let resolved = config::load(config)?;
    // Validate the full experiment even though only the receive-side
    // dictionary is reported, so a broken config fails identically across
    // subcommands.
    resolved.to_experiment(0)?;
    let dict = build_polar(
        resolved.system.n_b,
        resolved.system.wavelength,
        resolved.dictionary.beta,
        resolved.dictionary.r_min,
    )
    .map_err(classify)?;
    println!("n: {}", dict.n);
    println!("m: {}", dict.m);
    println!("beta: {}", dict.beta);
    println!("r_min: {}", dict.r_min);
    // Labels are angle-major and every angle keeps its planar ring, so the
    // per-angle column counts are the run lengths of the angle sequence.
    let mut counts: Vec<usize> = Vec::with_capacity(dict.n);
    let mut last_angle = f64::NAN;
    for label in &dict.labels {
        if label.angle.to_bits() != last_angle.to_bits() {
            counts.push(0);
            last_angle = label.angle;
        }
        *counts.last_mut().expect("run started") += 1;
    }
    let rendered: Vec<String> = counts.iter().map(|c| c.to_string()).collect();
    println!("ring_counts: {}", rendered.join(" "));
    if let Some(path) = export {
        fs::write(path, dictbin::encode(&dict))
            .with_context(|| format!("cannot write dictionary to {}", path.display()))?;
    }
    Ok(())
}
