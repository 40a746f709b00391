//! Records serialization (CSV and JSON) and the run manifest.

use std::fmt::Write as _;

use hybridfield::metrics::MetricsRecord;
use serde::Serialize;

use crate::config::ResolvedConfig;

/// Fixed CSV schema; the column order never varies.
pub const CSV_HEADER: &str =
    "scheme,axis,axis_value,trial,seed,nmse_linear,nmse_db,rate_bits,gamma_hat,mult_count";

/// CSV with one row per trial record. Floats use Rust's shortest
/// round-trip formatting; a missing ratio estimate is an empty field and
/// failed-trial metrics stay NaN.
pub fn records_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let gamma_hat = r.gamma_hat.map(|g| g.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.scheme,
            r.axis,
            r.axis_value,
            r.trial,
            r.trial_seed,
            r.nmse_linear,
            r.nmse_db(),
            r.rate_bits,
            gamma_hat,
            r.mult_count
        );
    }
    out
}

#[derive(Serialize)]
struct JsonRecord<'a> {
    scheme: &'a str,
    axis: &'a str,
    axis_value: f64,
    trial: usize,
    seed: u64,
    nmse_linear: f64,
    nmse_db: f64,
    rate_bits: f64,
    gamma_hat: Option<f64>,
    mult_count: u64,
}

/// JSON array mirroring the CSV columns. Non-finite numbers serialize as
/// null (JSON has no NaN), so failed trials are the rows with null metrics.
pub fn records_json(records: &[MetricsRecord]) -> String {
    let rows: Vec<JsonRecord> = records
        .iter()
        .map(|r| JsonRecord {
            scheme: r.scheme.name(),
            axis: r.axis.name(),
            axis_value: r.axis_value,
            trial: r.trial,
            seed: r.trial_seed,
            nmse_linear: r.nmse_linear,
            nmse_db: r.nmse_db(),
            rate_bits: r.rate_bits,
            gamma_hat: r.gamma_hat,
            mult_count: r.mult_count,
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&rows).expect("record serialization");
    text.push('\n');
    text
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    seed: u64,
    config: &'a ResolvedConfig,
}

/// Run manifest: tool version, master seed, and the fully resolved
/// configuration (defaults included), making the records file reproducible
/// from the manifest alone.
pub fn manifest_json(config: &ResolvedConfig, seed: u64) -> String {
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        seed,
        config,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serialization");
    text.push('\n');
    text
}
