//! Estimation quality metrics, complexity closed forms, and the seeded
//! Monte-Carlo sweep engine.
//!
//! Per-trial quantities are kept linear (`nmse`, `achievable_rate`); the
//! summary step averages across trials in the linear domain first and only
//! then converts to dB, matching the expectation placement in the metric
//! definitions. Sweeps derive one seed per (axis value, trial) pair, shared
//! by every scheme in that trial, so scheme comparisons are paired sample
//! by sample. A failing scheme yields a flagged NaN record instead of
//! aborting the sweep, and summaries skip flagged records while reporting
//! how many were skipped.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use num_complex::Complex64;

use crate::channel::{realize_channel, SystemConfig};
use crate::codebook::{build_angular, build_polar};
use crate::estimate::{
    far_omp, hybrid_omp, hybrid_omp_nogamma, ls_baseline, ls_cost, ongrid_sgp, reconstruct_cost,
    EstimationResult, EstimatorConfig, OpCounters, SupportSet,
};
use crate::linalg::{cholesky, solve_hermitian, CMat};
use crate::refine::{offgrid_sgp, refine_cost, RefineConfig};
use crate::rng::{derive_seed, SimRng};
use crate::signal::{build_sensing, default_pilots, observe, SensingModel};
use crate::{Error, Result};

/// Normalised squared estimation error `|h_hat - h|_F^2 / |h|_F^2` for one
/// realization. Averaging across trials happens in [`summarize`], before any
/// dB conversion.
pub fn nmse(h: &CMat, h_hat: &CMat) -> Result<f64> {
    if h.rows() != h_hat.rows() || h.cols() != h_hat.cols() {
        return Err(Error::DimensionMismatch(format!(
            "nmse: channel is {}x{}, estimate is {}x{}",
            h.rows(),
            h.cols(),
            h_hat.rows(),
            h_hat.cols()
        )));
    }
    let denom = h.norm_sq();
    if denom == 0.0 {
        return Err(Error::InvalidInput(
            "nmse: true channel has zero norm".into(),
        ));
    }
    Ok(h_hat.sub(h)?.norm_sq() / denom)
}

/// Linear NMSE to decibels.
pub fn nmse_db(linear: f64) -> f64 {
    10.0 * libm::log10(linear)
}

/// `log2 det(M)` for Hermitian positive definite `M` via Cholesky.
fn log2_det_hermitian(m: &CMat, ridge: f64) -> Result<f64> {
    let l = cholesky(m, ridge)?;
    let mut acc = 0.0;
    for i in 0..l.rows() {
        acc += 2.0 * libm::log2(l.get(i, i).re);
    }
    Ok(acc)
}

/// Maximum-ratio achievable rate in bits per channel use: with combiner
/// `V = h_hat` and per-antenna power `p / n_u`,
/// `R = log2 det(I + S^H Xi^{-1} S)` where `S = sqrt(p/n_u) V^H h` and
/// `Xi = noise_var V^H V`. A zero estimate returns rate 0 by convention.
pub fn achievable_rate(h: &CMat, h_hat: &CMat, power: f64, noise_var: f64) -> Result<f64> {
    if h.rows() != h_hat.rows() || h.cols() != h_hat.cols() {
        return Err(Error::DimensionMismatch(format!(
            "achievable_rate: channel is {}x{}, estimate is {}x{}",
            h.rows(),
            h.cols(),
            h_hat.rows(),
            h_hat.cols()
        )));
    }
    if !(power > 0.0) || !power.is_finite() {
        return Err(Error::InvalidInput(format!(
            "achievable_rate: power must be positive and finite, got {power}"
        )));
    }
    if !(noise_var > 0.0) || !noise_var.is_finite() {
        return Err(Error::InvalidInput(format!(
            "achievable_rate: noise variance must be positive and finite, got {noise_var}"
        )));
    }
    if h_hat.norm_sq() == 0.0 {
        return Ok(0.0);
    }
    let n_u = h.cols();
    let scale = Complex64::new(libm::sqrt(power / n_u as f64), 0.0);
    let sigma = h_hat.adjoint().mul(h)?.scale(scale);
    let xi = h_hat
        .adjoint()
        .mul(h_hat)?
        .scale(Complex64::new(noise_var, 0.0));
    // X = Xi^{-1} Sigma, column by column. A rank-deficient estimate makes
    // Xi singular; a relative ridge restores solvability with negligible
    // bias on the rate.
    let mut max_diag: f64 = 0.0;
    for i in 0..n_u {
        max_diag = max_diag.max(xi.get(i, i).re);
    }
    let solve_cols = |ridge: f64| -> Result<CMat> {
        let mut x = CMat::zeros(n_u, n_u);
        for j in 0..n_u {
            let col = solve_hermitian(&xi, sigma.col(j), ridge)?;
            x.col_mut(j).copy_from_slice(&col);
        }
        Ok(x)
    };
    let x = match solve_cols(0.0) {
        Ok(x) => x,
        Err(_) => solve_cols(1e-12 * max_diag)?,
    };
    let mut m = sigma.adjoint().mul(&x)?.add(&CMat::identity(n_u))?;
    // Symmetrize against rounding before factorization.
    for i in 0..n_u {
        for j in (i + 1)..n_u {
            let v = (m.get(i, j) + m.get(j, i).conj()) * Complex64::new(0.5, 0.0);
            m.set(i, j, v);
            m.set(j, i, v.conj());
        }
    }
    log2_det_hermitian(&m, 0.0)
}

/// The estimation schemes the bench harness knows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    OngridSgp,
    OffgridSgp,
    HybridOmp,
    HybridOmpNogamma,
    FarOmp,
    Ls,
    PerfectCsi,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::OngridSgp,
        Scheme::OffgridSgp,
        Scheme::HybridOmp,
        Scheme::HybridOmpNogamma,
        Scheme::FarOmp,
        Scheme::Ls,
        Scheme::PerfectCsi,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::OngridSgp => "ongrid_sgp",
            Scheme::OffgridSgp => "offgrid_sgp",
            Scheme::HybridOmp => "hybrid_omp",
            Scheme::HybridOmpNogamma => "hybrid_omp_nogamma",
            Scheme::FarOmp => "far_omp",
            Scheme::Ls => "ls",
            Scheme::PerfectCsi => "perfect_csi",
        }
    }

    pub fn parse(s: &str) -> Result<Scheme> {
        for scheme in Scheme::ALL {
            if s == scheme.name() {
                return Ok(scheme);
            }
        }
        Err(Error::InvalidInput(format!(
            "unknown scheme {s:?}; expected one of ongrid_sgp, offgrid_sgp, hybrid_omp, \
             hybrid_omp_nogamma, far_omp, ls, perfect_csi"
        )))
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Complexity-table closed forms (multiplication counts per pipeline stage)
/// for the four pursuit schemes, stated for an even path budget split half
/// far, half near. `n_iter` only affects the off-grid reconstruction row.
pub fn table2_counts(
    scheme: Scheme,
    n_b: usize,
    n_u: usize,
    m_b: usize,
    m_u: usize,
    l: usize,
    n_iter: usize,
) -> Result<OpCounters> {
    if l == 0 || l % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "closed forms assume an even positive path budget, got {l}"
        )));
    }
    let n = (n_b * n_u) as u64;
    let m = (m_b * m_u) as u64;
    let l64 = l as u64;
    let half = l64 / 2;
    let dense_recon = reconstruct_cost(n_b, n_u, m_b, m_u);
    // Shared pieces of the ratio-traversal schemes.
    let trav_support = l64 * n * n + l64 * (l64 + 1) / 2 * n * m;
    let trav_residual = l64 * n * n + l64 * (l64 + 1) / 2 * n * (n + m);
    let counts = match scheme {
        Scheme::OngridSgp => OpCounters {
            support_update: half * n * (n + m),
            coeff_update: 2 * (1..=half).map(|i| n * (2 * i + 1)).sum::<u64>(),
            residual_update: half * n * (n + m),
            reconstruction: dense_recon,
        },
        Scheme::HybridOmp => OpCounters {
            support_update: half * n * (n + m),
            coeff_update: 2
                * (1..=half as usize)
                    .map(|i| ls_cost(i, n as usize))
                    .sum::<u64>(),
            residual_update: half * n * (n + m),
            reconstruction: dense_recon,
        },
        Scheme::HybridOmpNogamma => OpCounters {
            support_update: trav_support,
            coeff_update: (1..=l).map(|i| ls_cost(i, n as usize)).sum::<u64>()
                + (0..l)
                    .map(|i| (1..=l - i).map(|j| ls_cost(j, n as usize)).sum::<u64>())
                    .sum::<u64>(),
            residual_update: trav_residual,
            reconstruction: dense_recon,
        },
        Scheme::OffgridSgp => OpCounters {
            support_update: trav_support,
            coeff_update: (1..=l64).map(|i| n * (2 * i + 1)).sum::<u64>()
                + (0..l64)
                    .map(|i| (1..=l64 - i).map(|j| n * (2 * j + 1)).sum::<u64>())
                    .sum::<u64>(),
            residual_update: trav_residual,
            reconstruction: refine_cost(n_b, n_u, l, n_iter),
        },
        Scheme::FarOmp | Scheme::Ls | Scheme::PerfectCsi => {
            return Err(Error::InvalidInput(format!(
                "no complexity-table row for scheme {scheme}"
            )));
        }
    };
    Ok(counts)
}

/// The swept experiment parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Snr,
    NB,
    NU,
    Gamma,
    Paths,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Snr => "snr_db",
            SweepAxis::NB => "n_b",
            SweepAxis::NU => "n_u",
            SweepAxis::Gamma => "gamma",
            SweepAxis::Paths => "n_paths",
        }
    }

    pub fn parse(s: &str) -> Result<SweepAxis> {
        match s {
            "snr_db" => Ok(SweepAxis::Snr),
            "n_b" => Ok(SweepAxis::NB),
            "n_u" => Ok(SweepAxis::NU),
            "gamma" => Ok(SweepAxis::Gamma),
            "n_paths" => Ok(SweepAxis::Paths),
            other => Err(Error::InvalidInput(format!(
                "unknown sweep axis {other:?}; expected snr_db, n_b, n_u, gamma, or n_paths"
            ))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Full description of a Monte-Carlo experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub base: SystemConfig,
    /// Total pilot (and data) power `p`.
    pub pilot_power: f64,
    /// Pilot length; defaults to the UE antenna count.
    pub tau: Option<usize>,
    /// Operating SNR in dB when the sweep axis is not SNR.
    pub snr_db: f64,
    /// Polar-dictionary oversampling control.
    pub beta: f64,
    /// Polar-dictionary minimum distance (m).
    pub r_min: f64,
    pub est: EstimatorConfig,
    pub refine: RefineConfig,
    pub sweep_axis: SweepAxis,
    pub sweep_values: Vec<f64>,
    pub trials: usize,
    pub schemes: Vec<Scheme>,
    pub master_seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.est.validate()?;
        self.refine.validate()?;
        if !(self.pilot_power > 0.0) || !self.pilot_power.is_finite() {
            return Err(Error::InvalidInput(format!(
                "pilot_power must be positive and finite, got {}",
                self.pilot_power
            )));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::InvalidInput(format!(
                "snr_db must be finite, got {}",
                self.snr_db
            )));
        }
        for (name, v) in [("beta", self.beta), ("r_min", self.r_min)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if let Some(tau) = self.tau {
            if tau < self.base.n_u {
                return Err(Error::InvalidInput(format!(
                    "tau = {tau} is shorter than the {} UE antennas",
                    self.base.n_u
                )));
            }
        }
        if self.trials == 0 {
            return Err(Error::InvalidInput("trials must be at least 1".into()));
        }
        if self.sweep_values.is_empty() {
            return Err(Error::InvalidInput("sweep_values must be nonempty".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::InvalidInput("schemes must be nonempty".into()));
        }
        for &v in &self.sweep_values {
            self.check_axis_value(v)?;
        }
        Ok(())
    }

    fn check_axis_value(&self, v: f64) -> Result<()> {
        let integral = v.is_finite() && v >= 1.0 && libm::floor(v) == v;
        match self.sweep_axis {
            SweepAxis::Snr => {
                if !v.is_finite() {
                    return Err(Error::InvalidInput(format!("swept SNR {v} is not finite")));
                }
            }
            SweepAxis::NB | SweepAxis::NU => {
                if !integral {
                    return Err(Error::InvalidInput(format!(
                        "swept antenna count {v} must be a positive integer"
                    )));
                }
            }
            SweepAxis::Paths => {
                if !integral || v < 2.0 {
                    return Err(Error::InvalidInput(format!(
                        "swept path count {v} must be an integer of at least 2"
                    )));
                }
            }
            SweepAxis::Gamma => {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidInput(format!(
                        "swept ratio {v} must lie in [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Resolved per-axis-value context: the system at the swept value plus the
/// sensing model built for it.
#[derive(Debug, Clone)]
pub struct TrialContext {
    pub system: SystemConfig,
    pub snr_db: f64,
    pub noise_var: f64,
    pub sensing: SensingModel,
    pub est: EstimatorConfig,
    pub refine: RefineConfig,
    pub axis: SweepAxis,
    pub axis_value: f64,
}

/// Apply one swept value to the experiment and build everything the trials
/// at that value share.
pub fn build_context(exp: &ExperimentConfig, axis_value: f64) -> Result<TrialContext> {
    exp.check_axis_value(axis_value)?;
    let mut system = exp.base.clone();
    let mut snr_db = exp.snr_db;
    match exp.sweep_axis {
        SweepAxis::Snr => snr_db = axis_value,
        SweepAxis::NB => system.n_b = axis_value as usize,
        SweepAxis::NU => system.n_u = axis_value as usize,
        SweepAxis::Gamma => system.gamma = axis_value,
        SweepAxis::Paths => system.n_paths = axis_value as usize,
    }
    system.validate()?;
    let noise_var = exp.pilot_power * libm::pow(10.0, -snr_db / 10.0);
    let tau = exp.tau.unwrap_or(system.n_u);
    let pilots = default_pilots(system.n_u, tau, exp.pilot_power)?;
    let ang_r = build_angular(system.n_b)?;
    let ang_t = build_angular(system.n_u)?;
    let pol_r = build_polar(system.n_b, system.wavelength, exp.beta, exp.r_min)?;
    let pol_t = build_polar(system.n_u, system.wavelength, exp.beta, exp.r_min)?;
    let sensing = build_sensing(ang_r, ang_t, pol_r, pol_t, pilots)?;
    Ok(TrialContext {
        system,
        snr_db,
        noise_var,
        sensing,
        est: exp.est.clone(),
        refine: exp.refine.clone(),
        axis: exp.sweep_axis,
        axis_value,
    })
}

/// One trial's metrics. `failed = true` marks a scheme error; its metric
/// fields are NaN and excluded from summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub scheme: Scheme,
    pub axis: SweepAxis,
    pub axis_value: f64,
    pub snr_db: f64,
    pub n_b: usize,
    pub n_u: usize,
    pub l: usize,
    pub gamma: f64,
    pub trial: usize,
    pub trial_seed: u64,
    pub nmse_linear: f64,
    pub rate_bits: f64,
    pub gamma_hat: Option<f64>,
    pub mult_count: u64,
    pub failed: bool,
}

impl MetricsRecord {
    pub fn nmse_db(&self) -> f64 {
        nmse_db(self.nmse_linear)
    }
}

fn dispatch(
    ctx: &TrialContext,
    scheme: Scheme,
    h: &CMat,
    y_t_mat: &CMat,
) -> Result<EstimationResult> {
    let y_t = y_t_mat.as_slice().to_vec();
    let l = ctx.system.n_paths;
    match scheme {
        Scheme::OngridSgp => ongrid_sgp(&ctx.sensing, &y_t, l, ctx.system.gamma, &ctx.est),
        Scheme::OffgridSgp => offgrid_sgp(&ctx.sensing, &y_t, l, &ctx.est, &ctx.refine),
        Scheme::HybridOmp => hybrid_omp(&ctx.sensing, &y_t, l, ctx.system.gamma, &ctx.est),
        Scheme::HybridOmpNogamma => hybrid_omp_nogamma(&ctx.sensing, &y_t, l, &ctx.est),
        Scheme::FarOmp => far_omp(&ctx.sensing, &y_t, l, &ctx.est),
        Scheme::Ls => ls_baseline(y_t_mat, &ctx.sensing.pilots),
        Scheme::PerfectCsi => Ok(EstimationResult {
            h_hat: h.clone(),
            support: SupportSet::new(),
            residual_norms: Vec::new(),
            gamma_hat: None,
            counters: OpCounters::default(),
        }),
    }
}

/// Run one scheme on one seeded realization. The channel and noise depend
/// only on `(ctx, seed)`, so every scheme sees the same data at the same
/// seed. Scheme errors produce a flagged NaN record rather than an `Err`;
/// hard errors (invalid context) still propagate.
pub fn run_trial(
    ctx: &TrialContext,
    scheme: Scheme,
    trial: usize,
    seed: u64,
) -> Result<MetricsRecord> {
    let mut rng = SimRng::from_seed(seed);
    let channel = realize_channel(&ctx.system, &mut rng)?;
    let obs = observe(&channel.h, &ctx.sensing.pilots, ctx.noise_var, &mut rng)?;
    let mut record = MetricsRecord {
        scheme,
        axis: ctx.axis,
        axis_value: ctx.axis_value,
        snr_db: ctx.snr_db,
        n_b: ctx.system.n_b,
        n_u: ctx.system.n_u,
        l: ctx.system.n_paths,
        gamma: ctx.system.gamma,
        trial,
        trial_seed: seed,
        nmse_linear: f64::NAN,
        rate_bits: f64::NAN,
        gamma_hat: None,
        mult_count: 0,
        failed: true,
    };
    let outcome = dispatch(ctx, scheme, &channel.h, &obs.y_t).and_then(|res| {
        let nm = nmse(&channel.h, &res.h_hat)?;
        let rate = achievable_rate(
            &channel.h,
            &res.h_hat,
            ctx.sensing.pilots.power,
            ctx.noise_var,
        )?;
        Ok((nm, rate, res.gamma_hat, res.mult_count()))
    });
    if let Ok((nm, rate, gamma_hat, mult)) = outcome {
        record.nmse_linear = nm;
        record.rate_bits = rate;
        record.gamma_hat = gamma_hat;
        record.mult_count = mult;
        record.failed = false;
    }
    Ok(record)
}

/// Run the whole experiment. Records are ordered axis value, then trial,
/// then scheme; the count is `|sweep_values| * trials * |schemes|`. The seed
/// for trial `t` at value `v` is `derive_seed(master_seed, bits(v), t)`.
pub fn run_sweep(exp: &ExperimentConfig) -> Result<Vec<MetricsRecord>> {
    exp.validate()?;
    let mut records = Vec::with_capacity(exp.sweep_values.len() * exp.trials * exp.schemes.len());
    for &value in &exp.sweep_values {
        let ctx = build_context(exp, value)?;
        for trial in 0..exp.trials {
            let seed = derive_seed(exp.master_seed, value.to_bits(), trial as u64);
            for &scheme in &exp.schemes {
                records.push(run_trial(&ctx, scheme, trial, seed)?);
            }
        }
    }
    Ok(records)
}

/// Per-(scheme, axis value) aggregate over the non-failed trials.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scheme: Scheme,
    pub axis_value: f64,
    pub trials_ok: usize,
    pub trials_failed: usize,
    pub mean_nmse_linear: f64,
    pub mean_nmse_db: f64,
    pub mean_rate_bits: f64,
    pub mean_mult_count: f64,
}

/// Linear-domain means per (scheme, axis value), in first-appearance order.
/// Failed records are skipped and counted.
pub fn summarize(records: &[MetricsRecord]) -> Vec<SummaryRow> {
    let mut order: Vec<(Scheme, u64)> = Vec::new();
    let mut rows: Vec<SummaryRow> = Vec::new();
    for rec in records {
        let key = (rec.scheme, rec.axis_value.to_bits());
        let pos = match order.iter().position(|&k| k == key) {
            Some(p) => p,
            None => {
                order.push(key);
                rows.push(SummaryRow {
                    scheme: rec.scheme,
                    axis_value: rec.axis_value,
                    trials_ok: 0,
                    trials_failed: 0,
                    mean_nmse_linear: 0.0,
                    mean_nmse_db: 0.0,
                    mean_rate_bits: 0.0,
                    mean_mult_count: 0.0,
                });
                rows.len() - 1
            }
        };
        let row = &mut rows[pos];
        if rec.failed {
            row.trials_failed += 1;
        } else {
            row.trials_ok += 1;
            row.mean_nmse_linear += rec.nmse_linear;
            row.mean_rate_bits += rec.rate_bits;
            row.mean_mult_count += rec.mult_count as f64;
        }
    }
    for row in &mut rows {
        if row.trials_ok > 0 {
            let n = row.trials_ok as f64;
            row.mean_nmse_linear /= n;
            row.mean_rate_bits /= n;
            row.mean_mult_count /= n;
            row.mean_nmse_db = nmse_db(row.mean_nmse_linear);
        } else {
            row.mean_nmse_linear = f64::NAN;
            row.mean_nmse_db = f64::NAN;
            row.mean_rate_bits = f64::NAN;
            row.mean_mult_count = f64::NAN;
        }
    }
    rows
}
