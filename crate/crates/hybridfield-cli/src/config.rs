//! TOML experiment configuration.
//!
//! The file is a set of tables (`[system]`, `[pilot]`, `[dictionary]`,
//! `[estimator]`, `[refine]`, `[sweep]`) whose keys mirror the library
//! configuration structs. Every diagnostic names the offending key by its
//! dotted path (`system.n_b`, `sweep.axis`, ...) so a bad file can be fixed
//! without reading this module. Optional keys resolve to documented defaults;
//! the resolved values are what the run manifest records.

use std::fmt;
use std::fs;
use std::path::Path;

use hybridfield::channel::SystemConfig;
use hybridfield::estimate::EstimatorConfig;
use hybridfield::metrics::{ExperimentConfig, Scheme, SweepAxis};
use hybridfield::refine::RefineConfig;
use serde::Serialize;
use toml::value::{Table, Value};

/// Configuration problem; the process exits with code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

/// `[system]` table with defaults applied.
#[derive(Debug, Clone, Serialize)]
pub struct SystemSection {
    pub n_b: usize,
    pub n_u: usize,
    pub wavelength: f64,
    pub n_paths: usize,
    pub kappa: f64,
    pub gamma: f64,
    pub ue_distance: (f64, f64),
    pub scatterer_distance: (f64, f64),
}

/// `[pilot]` table with defaults applied.
#[derive(Debug, Clone, Serialize)]
pub struct PilotSection {
    pub power: f64,
    /// Pilot length; `None` resolves to the UE antenna count.
    pub tau: Option<usize>,
    pub snr_db: f64,
}

/// `[dictionary]` table with defaults applied.
#[derive(Debug, Clone, Serialize)]
pub struct DictionarySection {
    pub beta: f64,
    pub r_min: f64,
}

/// `[estimator]` table with defaults applied.
#[derive(Debug, Clone, Serialize)]
pub struct EstimatorSection {
    pub mu: f64,
    pub nu: f64,
    pub lms_passes: usize,
    pub count_ops: bool,
}

/// `[refine]` table with defaults applied.
#[derive(Debug, Clone, Serialize)]
pub struct RefineSection {
    pub n_iter: usize,
    pub angle_step: f64,
    pub dist_step: f64,
    pub shrink: f64,
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
    pub ridge: f64,
}

/// `[sweep]` table (all keys required).
#[derive(Debug, Clone, Serialize)]
pub struct SweepSection {
    pub axis: String,
    pub values: Vec<f64>,
    pub trials: usize,
    pub schemes: Vec<String>,
}

/// Fully resolved configuration; serialized into the run manifest so every
/// results file is self-describing.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    pub system: SystemSection,
    pub pilot: PilotSection,
    pub dictionary: DictionarySection,
    pub estimator: EstimatorSection,
    pub refine: RefineSection,
    pub sweep: SweepSection,
}

impl ResolvedConfig {
    /// Typed experiment for the library. The master seed comes from the
    /// command line, never the file, so all randomness flows from `--seed`.
    pub fn to_experiment(&self, master_seed: u64) -> Result<ExperimentConfig, ConfigError> {
        let axis =
            SweepAxis::parse(&self.sweep.axis).map_err(|e| bad(format!("key sweep.axis: {e}")))?;
        let mut schemes = Vec::with_capacity(self.sweep.schemes.len());
        for name in &self.sweep.schemes {
            schemes.push(Scheme::parse(name).map_err(|e| bad(format!("key sweep.schemes: {e}")))?);
        }
        let exp = ExperimentConfig {
            base: SystemConfig {
                n_b: self.system.n_b,
                n_u: self.system.n_u,
                wavelength: self.system.wavelength,
                n_paths: self.system.n_paths,
                kappa: self.system.kappa,
                gamma: self.system.gamma,
                ue_distance_range: self.system.ue_distance,
                scatterer_distance_range: self.system.scatterer_distance,
            },
            pilot_power: self.pilot.power,
            tau: self.pilot.tau,
            snr_db: self.pilot.snr_db,
            beta: self.dictionary.beta,
            r_min: self.dictionary.r_min,
            est: EstimatorConfig {
                mu: self.estimator.mu,
                nu: self.estimator.nu,
                lms_passes: self.estimator.lms_passes,
                count_ops: self.estimator.count_ops,
            },
            refine: RefineConfig {
                n_iter: self.refine.n_iter,
                angle_step: self.refine.angle_step,
                dist_step: self.refine.dist_step,
                shrink: self.refine.shrink,
                sufficient_decrease: self.refine.sufficient_decrease,
                max_backtracks: self.refine.max_backtracks,
                ridge: self.refine.ridge,
            },
            sweep_axis: axis,
            sweep_values: self.sweep.values.clone(),
            trials: self.sweep.trials,
            schemes,
            master_seed,
        };
        exp.validate().map_err(|e| bad(e.to_string()))?;
        Ok(exp)
    }
}

/// Load and resolve a configuration file.
pub fn load(path: &Path) -> Result<ResolvedConfig, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|e| bad(format!("cannot read config {}: {e}", path.display())))?;
    parse(&text)
}

/// Parse and resolve configuration text.
pub fn parse(text: &str) -> Result<ResolvedConfig, ConfigError> {
    let root: Table = text
        .parse()
        .map_err(|e| bad(format!("config is not valid TOML: {e}")))?;
    for key in root.keys() {
        if !matches!(
            key.as_str(),
            "system" | "pilot" | "dictionary" | "estimator" | "refine" | "sweep"
        ) {
            return Err(bad(format!("unknown table [{key}]")));
        }
    }

    let mut system = Section::required(&root, "system")?;
    let mut pilot = Section::optional(&root, "pilot")?;
    let mut dictionary = Section::optional(&root, "dictionary")?;
    let mut estimator = Section::optional(&root, "estimator")?;
    let mut refine = Section::optional(&root, "refine")?;
    let mut sweep = Section::required(&root, "sweep")?;

    let refine_defaults = RefineConfig::default();
    let est_defaults = EstimatorConfig::default();
    let resolved = ResolvedConfig {
        system: SystemSection {
            n_b: system.req_usize("n_b")?,
            n_u: system.req_usize("n_u")?,
            wavelength: system.opt_f64("wavelength", 0.01)?,
            n_paths: system.req_usize("n_paths")?,
            kappa: system.opt_f64("kappa", 10.0)?,
            gamma: system.req_f64("gamma")?,
            ue_distance: system.opt_pair("ue_distance", (10.0, 500.0))?,
            scatterer_distance: system.opt_pair("scatterer_distance", (10.0, 500.0))?,
        },
        pilot: PilotSection {
            power: pilot.opt_f64("power", 1.0)?,
            tau: pilot.opt_usize("tau")?,
            snr_db: pilot.opt_f64("snr_db", 0.0)?,
        },
        dictionary: DictionarySection {
            beta: dictionary.opt_f64("beta", 2.5)?,
            r_min: dictionary.opt_f64("r_min", 10.0)?,
        },
        estimator: EstimatorSection {
            mu: estimator.opt_f64("mu", est_defaults.mu)?,
            nu: estimator.opt_f64("nu", est_defaults.nu)?,
            lms_passes: estimator
                .opt_usize("lms_passes")?
                .unwrap_or(est_defaults.lms_passes),
            count_ops: estimator.opt_bool("count_ops", est_defaults.count_ops)?,
        },
        refine: RefineSection {
            n_iter: refine
                .opt_usize("n_iter")?
                .unwrap_or(refine_defaults.n_iter),
            angle_step: refine.opt_f64("angle_step", refine_defaults.angle_step)?,
            dist_step: refine.opt_f64("dist_step", refine_defaults.dist_step)?,
            shrink: refine.opt_f64("shrink", refine_defaults.shrink)?,
            sufficient_decrease: refine
                .opt_f64("sufficient_decrease", refine_defaults.sufficient_decrease)?,
            max_backtracks: refine
                .opt_usize("max_backtracks")?
                .unwrap_or(refine_defaults.max_backtracks),
            ridge: refine.opt_f64("ridge", refine_defaults.ridge)?,
        },
        sweep: SweepSection {
            axis: sweep.req_string("axis")?,
            values: sweep.req_f64_list("values")?,
            trials: sweep.req_usize("trials")?,
            schemes: sweep.req_string_list("schemes")?,
        },
    };
    system.finish()?;
    pilot.finish()?;
    dictionary.finish()?;
    estimator.finish()?;
    refine.finish()?;
    sweep.finish()?;
    Ok(resolved)
}

/// One configuration table plus the bookkeeping for dotted-path diagnostics
/// and unknown-key detection.
struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
    used: Vec<&'static str>,
}

impl<'a> Section<'a> {
    fn required(root: &'a Table, name: &'static str) -> Result<Self, ConfigError> {
        match root.get(name) {
            Some(Value::Table(t)) => Ok(Section {
                name,
                table: Some(t),
                used: Vec::new(),
            }),
            Some(other) => Err(bad(format!(
                "[{name}] must be a table, got {}",
                other.type_str()
            ))),
            None => Err(bad(format!("missing required table [{name}]"))),
        }
    }

    fn optional(root: &'a Table, name: &'static str) -> Result<Self, ConfigError> {
        match root.get(name) {
            Some(Value::Table(t)) => Ok(Section {
                name,
                table: Some(t),
                used: Vec::new(),
            }),
            Some(other) => Err(bad(format!(
                "[{name}] must be a table, got {}",
                other.type_str()
            ))),
            None => Ok(Section {
                name,
                table: None,
                used: Vec::new(),
            }),
        }
    }

    fn get(&mut self, key: &'static str) -> Option<&'a Value> {
        self.used.push(key);
        self.table.and_then(|t| t.get(key))
    }

    fn type_error(&self, key: &str, expected: &str, got: &Value) -> ConfigError {
        bad(format!(
            "key {}.{key}: expected {expected}, got {}",
            self.name,
            got.type_str()
        ))
    }

    fn missing(&self, key: &str) -> ConfigError {
        bad(format!("missing required key {}.{key}", self.name))
    }

    fn f64_of(&self, key: &'static str, v: &Value) -> Result<f64, ConfigError> {
        match v {
            Value::Float(f) => Ok(*f),
            Value::Integer(i) => Ok(*i as f64),
            other => Err(self.type_error(key, "a number", other)),
        }
    }

    fn usize_of(&self, key: &'static str, v: &Value) -> Result<usize, ConfigError> {
        match v {
            Value::Integer(i) if *i >= 0 => Ok(*i as usize),
            other => Err(self.type_error(key, "a non-negative integer", other)),
        }
    }

    fn req_f64(&mut self, key: &'static str) -> Result<f64, ConfigError> {
        match self.get(key) {
            Some(v) => self.f64_of(key, v),
            None => Err(self.missing(key)),
        }
    }

    fn opt_f64(&mut self, key: &'static str, default: f64) -> Result<f64, ConfigError> {
        match self.get(key) {
            Some(v) => self.f64_of(key, v),
            None => Ok(default),
        }
    }

    fn req_usize(&mut self, key: &'static str) -> Result<usize, ConfigError> {
        match self.get(key) {
            Some(v) => self.usize_of(key, v),
            None => Err(self.missing(key)),
        }
    }

    fn opt_usize(&mut self, key: &'static str) -> Result<Option<usize>, ConfigError> {
        match self.get(key) {
            Some(v) => Ok(Some(self.usize_of(key, v)?)),
            None => Ok(None),
        }
    }

    fn opt_bool(&mut self, key: &'static str, default: bool) -> Result<bool, ConfigError> {
        match self.get(key) {
            Some(Value::Boolean(b)) => Ok(*b),
            Some(other) => Err(self.type_error(key, "a boolean", other)),
            None => Ok(default),
        }
    }

    fn req_string(&mut self, key: &'static str) -> Result<String, ConfigError> {
        match self.get(key) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(other) => Err(self.type_error(key, "a string", other)),
            None => Err(self.missing(key)),
        }
    }

    fn opt_pair(
        &mut self,
        key: &'static str,
        default: (f64, f64),
    ) -> Result<(f64, f64), ConfigError> {
        match self.get(key) {
            Some(Value::Array(a)) if a.len() == 2 => {
                Ok((self.f64_of(key, &a[0])?, self.f64_of(key, &a[1])?))
            }
            Some(other) => Err(self.type_error(key, "an array of two numbers", other)),
            None => Ok(default),
        }
    }

    fn req_f64_list(&mut self, key: &'static str) -> Result<Vec<f64>, ConfigError> {
        match self.get(key) {
            Some(Value::Array(a)) => a.iter().map(|v| self.f64_of(key, v)).collect(),
            Some(other) => Err(self.type_error(key, "an array of numbers", other)),
            None => Err(self.missing(key)),
        }
    }

    fn req_string_list(&mut self, key: &'static str) -> Result<Vec<String>, ConfigError> {
        match self.get(key) {
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s.clone()),
                    other => Err(self.type_error(key, "an array of strings", other)),
                })
                .collect(),
            Some(other) => Err(self.type_error(key, "an array of strings", other)),
            None => Err(self.missing(key)),
        }
    }

    /// Reject keys this parser never consumed (typos surface immediately).
    fn finish(self) -> Result<(), ConfigError> {
        if let Some(table) = self.table {
            for key in table.keys() {
                if !self.used.iter().any(|u| u == key) {
                    return Err(bad(format!("unknown key {}.{key}", self.name)));
                }
            }
        }
        Ok(())
    }
}
