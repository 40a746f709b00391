//! Greedy sparse channel estimators over the hybrid codebook pair.
//!
//! All schemes share one loop shape: pick the dictionary column most
//! correlated with the running residual, update the coefficients on the
//! support picked so far, refresh the residual. They differ in the
//! coefficient update (stochastic-gradient LMS sweeps versus exact
//! least squares) and in how the support budget `L` is split between the
//! angular and polar codebooks:
//!
//! * [`ongrid_sgp`] / [`hybrid_omp`]: the split is given (`floor(gamma L)`
//!   angular picks, the rest polar);
//! * [`sgp_traversal`] / [`hybrid_omp_nogamma`]: every split is tried, warm
//!   started from a shared angular-only first pass, and the smallest final
//!   residual wins, which also yields the ratio estimate `gamma_hat`;
//! * [`far_omp`]: angular-only baseline;
//! * [`ls_baseline`]: unstructured per-entry least squares (no sparsity).
//!
//! Multiplication counters: support and residual updates increment at the
//! dense-product call sites with the exact product sizes. Coefficient
//! updates count `passes * n * (2s + 1)` per LMS call (`s` = support size)
//! and the normal-equation model `s^3/2 + 3s^2/2 + 2 n s^2 + n s` per LS
//! solve. Residual refreshes after a polar pick reuse the cached angular
//! contribution in the LMS schemes (only the polar product is recomputed);
//! the LS schemes refresh both contributions because their coefficients
//! change on the whole joint support.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;

use crate::linalg::{dot_h, gram, norm, solve_hermitian, CMat};
use crate::signal::{PilotConfig, SensingModel};
use crate::{Error, Result};

/// Diagonal loading applied to every normal-equation solve; keeps repeated
/// or coherent supports solvable at a relative perturbation of about 1e-10.
pub const LS_RIDGE: f64 = 1e-10;

/// Tuning knobs shared by the estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// LMS step for given-ratio pursuit.
    pub mu: f64,
    /// LMS step inside the ratio traversal.
    pub nu: f64,
    /// Full observation sweeps per LMS coefficient update.
    pub lms_passes: usize,
    /// Disable to skip multiplication accounting (counters stay zero).
    pub count_ops: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            mu: 0.4,
            nu: 0.07,
            lms_passes: 1,
            count_ops: true,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mu", self.mu), ("nu", self.nu)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.lms_passes == 0 {
            return Err(Error::InvalidInput("lms_passes must be at least 1".into()));
        }
        Ok(())
    }
}

/// Which codebook a support entry refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Angular,
    Polar,
}

/// Ordered support set over the two codebooks; duplicates are rejected.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SupportSet {
    entries: Vec<(Domain, usize)>,
}

impl SupportSet {
    pub fn new() -> Self {
        SupportSet::default()
    }

    pub fn push(&mut self, domain: Domain, index: usize) -> Result<()> {
        if self.contains(domain, index) {
            return Err(Error::InvalidInput(format!(
                "support already contains {domain:?} column {index}"
            )));
        }
        self.entries.push((domain, index));
        Ok(())
    }

    pub fn contains(&self, domain: Domain, index: usize) -> bool {
        self.entries.iter().any(|&(d, i)| d == domain && i == index)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(Domain, usize)> {
        self.entries.iter()
    }

    /// Angular column indices in selection order.
    pub fn angular(&self) -> Vec<usize> {
        self.entries
            .iter()
            .filter(|(d, _)| *d == Domain::Angular)
            .map(|&(_, i)| i)
            .collect()
    }

    /// Polar column indices in selection order.
    pub fn polar(&self) -> Vec<usize> {
        self.entries
            .iter()
            .filter(|(d, _)| *d == Domain::Polar)
            .map(|&(_, i)| i)
            .collect()
    }
}

/// Complex multiplication counts, split by pipeline stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounters {
    pub support_update: u64,
    pub coeff_update: u64,
    pub residual_update: u64,
    pub reconstruction: u64,
}

impl OpCounters {
    pub fn total(&self) -> u64 {
        self.support_update + self.coeff_update + self.residual_update + self.reconstruction
    }

    pub fn add(&mut self, other: &OpCounters) {
        self.support_update += other.support_update;
        self.coeff_update += other.coeff_update;
        self.residual_update += other.residual_update;
        self.reconstruction += other.reconstruction;
    }
}

/// Counter sink honouring the `count_ops` switch.
#[derive(Debug, Clone, Copy)]
struct Meter {
    c: OpCounters,
    enabled: bool,
}

impl Meter {
    fn new(enabled: bool) -> Self {
        Meter {
            c: OpCounters::default(),
            enabled,
        }
    }

    fn support(&mut self, n: u64) {
        if self.enabled {
            self.c.support_update += n;
        }
    }

    fn coeff(&mut self, n: u64) {
        if self.enabled {
            self.c.coeff_update += n;
        }
    }

    fn residual(&mut self, n: u64) {
        if self.enabled {
            self.c.residual_update += n;
        }
    }

    fn reconstruction(&mut self, n: u64) {
        if self.enabled {
            self.c.reconstruction += n;
        }
    }
}

/// Output of one estimation run.
#[derive(Debug, Clone)]
pub struct EstimationResult {
    /// Estimated `n_b x n_u` channel.
    pub h_hat: CMat,
    pub support: SupportSet,
    /// Residual norm after each pursuit iteration (the winning candidate's
    /// trajectory for the traversal schemes).
    pub residual_norms: Vec<f64>,
    /// Estimated far-path fraction, for the traversal schemes.
    pub gamma_hat: Option<f64>,
    pub counters: OpCounters,
}

impl EstimationResult {
    /// Total complex multiplications.
    pub fn mult_count(&self) -> u64 {
        self.counters.total()
    }
}

/// Index of the non-excluded column of `a` with the largest correlation
/// magnitude against `residual`; exact ties keep the lowest index. Errors
/// when every column is excluded.
pub fn match_support(a: &CMat, residual: &[Complex64], excluded: &[usize]) -> Result<usize> {
    if residual.len() != a.rows() {
        return Err(Error::DimensionMismatch(format!(
            "match_support: matrix has {} rows, residual has length {}",
            a.rows(),
            residual.len()
        )));
    }
    let mut mask = vec![false; a.cols()];
    for &e in excluded {
        if e >= a.cols() {
            return Err(Error::InvalidInput(format!(
                "excluded column {e} outside 0..{}",
                a.cols()
            )));
        }
        mask[e] = true;
    }
    let mut best: Option<(usize, f64)> = None;
    for j in 0..a.cols() {
        let score = dot_h(a.col(j), residual).norm_sqr();
        if mask[j] {
            continue;
        }
        match best {
            Some((_, s)) if score <= s => {}
            _ => best = Some((j, score)),
        }
    }
    best.map(|(j, _)| j)
        .ok_or_else(|| Error::Numerical("match_support: every column is excluded".into()))
}

/// Cyclic LMS coefficient sweeps: for each observation entry `n`,
/// `e = y[n] - sum_i a[n, s_i] x_i`, then `x_i += step * e * conj(a[n, s_i])`.
/// `passes = 0` is a no-op. Costs `passes * n * (2 s + 1)` multiplications.
pub fn lms_pass(
    a: &CMat,
    y: &[Complex64],
    support: &[usize],
    coeffs: &mut [Complex64],
    step: f64,
    passes: usize,
) -> Result<()> {
    if y.len() != a.rows() {
        return Err(Error::DimensionMismatch(format!(
            "lms_pass: matrix has {} rows, target has length {}",
            a.rows(),
            y.len()
        )));
    }
    if coeffs.len() != support.len() {
        return Err(Error::DimensionMismatch(format!(
            "lms_pass: {} coefficients for {} support columns",
            coeffs.len(),
            support.len()
        )));
    }
    for &s in support {
        if s >= a.cols() {
            return Err(Error::InvalidInput(format!(
                "lms_pass: support column {s} outside 0..{}",
                a.cols()
            )));
        }
    }
    if !step.is_finite() {
        return Err(Error::InvalidInput(format!(
            "lms_pass: step must be finite, got {step}"
        )));
    }
    for _ in 0..passes {
        for n in 0..a.rows() {
            let mut pred = Complex64::ZERO;
            for (i, &s) in support.iter().enumerate() {
                pred += a.get(n, s) * coeffs[i];
            }
            let e = (y[n] - pred) * step;
            for (i, &s) in support.iter().enumerate() {
                coeffs[i] += e * a.get(n, s).conj();
            }
        }
    }
    Ok(())
}

/// LMS cost model used by the counters.
pub fn lms_cost(support_len: usize, n: usize, passes: usize) -> u64 {
    (passes as u64) * (n as u64) * (2 * support_len as u64 + 1)
}

/// Least-squares coefficients of `y` on the listed columns via ridged normal
/// equations (`LS_RIDGE` diagonal loading).
pub fn ls_solve(a: &CMat, y: &[Complex64], support: &[usize]) -> Result<Vec<Complex64>> {
    if y.len() != a.rows() {
        return Err(Error::DimensionMismatch(format!(
            "ls_solve: matrix has {} rows, target has length {}",
            a.rows(),
            y.len()
        )));
    }
    for &s in support {
        if s >= a.cols() {
            return Err(Error::InvalidInput(format!(
                "ls_solve: support column {s} outside 0..{}",
                a.cols()
            )));
        }
    }
    if support.is_empty() {
        return Ok(Vec::new());
    }
    let g = gram(a, support);
    let b: Vec<Complex64> = support.iter().map(|&s| dot_h(a.col(s), y)).collect();
    solve_hermitian(&g, &b, LS_RIDGE)
}

/// Normal-equation cost model used by the counters:
/// `s^3/2 + 3 s^2/2 + 2 n s^2 + n s`.
pub fn ls_cost(support_len: usize, n: usize) -> u64 {
    let s = support_len as u64;
    let n = n as u64;
    (s * s * (s + 3)) / 2 + 2 * n * s * s + n * s
}

/// Dense reconstruction cost model:
/// `n_b n_u (n_b + n_u) + n_b m_u (n_u + m_b)`.
pub fn reconstruct_cost(n_b: usize, n_u: usize, m_b: usize, m_u: usize) -> u64 {
    let (n_b, n_u, m_b, m_u) = (n_b as u64, n_u as u64, m_b as u64, m_u as u64);
    n_b * n_u * (n_b + n_u) + n_b * m_u * (n_u + m_b)
}

/// Map codebook-domain coefficient matrices back to the antenna domain:
/// `H = F_R H_ang F_T^H + D_R H_pol D_T^H`.
pub fn reconstruct(h_ang: &CMat, h_pol: &CMat, s: &SensingModel) -> Result<CMat> {
    if h_ang.rows() != s.n_b() || h_ang.cols() != s.n_u() {
        return Err(Error::DimensionMismatch(format!(
            "angular coefficients are {}x{}, expected {}x{}",
            h_ang.rows(),
            h_ang.cols(),
            s.n_b(),
            s.n_u()
        )));
    }
    if h_pol.rows() != s.m_b() || h_pol.cols() != s.m_u() {
        return Err(Error::DimensionMismatch(format!(
            "polar coefficients are {}x{}, expected {}x{}",
            h_pol.rows(),
            h_pol.cols(),
            s.m_b(),
            s.m_u()
        )));
    }
    let far = s.ang_r.f.mul(h_ang)?.mul_adjoint(&s.ang_t.f)?;
    let near = s.pol_r.d.mul(h_pol)?.mul_adjoint(&s.pol_t.d)?;
    far.add(&near)
}

fn check_run_args(s: &SensingModel, y_t: &[Complex64], l: usize) -> Result<()> {
    if y_t.len() != s.obs_len() {
        return Err(Error::DimensionMismatch(format!(
            "observation has length {}, model expects {}",
            y_t.len(),
            s.obs_len()
        )));
    }
    if l == 0 {
        return Err(Error::InvalidInput("path budget must be at least 1".into()));
    }
    Ok(())
}

fn check_split(s: &SensingModel, l_far: usize, l_near: usize) -> Result<()> {
    if l_far > s.a_f.cols() {
        return Err(Error::InvalidInput(format!(
            "{l_far} angular picks exceed the {} angular columns",
            s.a_f.cols()
        )));
    }
    if l_near > s.a_n.cols() {
        return Err(Error::InvalidInput(format!(
            "{l_near} polar picks exceed the {} polar columns",
            s.a_n.cols()
        )));
    }
    Ok(())
}

fn far_split(l: usize, gamma: f64) -> Result<(usize, usize)> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidInput(format!(
            "gamma must lie in [0, 1], got {gamma}"
        )));
    }
    let l_far = libm::floor(gamma * l as f64) as usize;
    Ok((l_far, l - l_far))
}

fn sub_into(y: &[Complex64], parts: &[&[Complex64]]) -> Vec<Complex64> {
    let mut r = y.to_vec();
    for part in parts {
        for (ri, pi) in r.iter_mut().zip(part.iter()) {
            *ri -= pi;
        }
    }
    r
}

/// Given-ratio pursuit with LMS coefficient updates.
///
/// Phase one makes `floor(gamma * l)` angular picks, refreshing the residual
/// with a dense angular product each iteration. Phase two makes the
/// remaining picks from the polar codebook; its LMS runs over the joint
/// support (both codebooks) against the full observation, while the residual
/// refresh reuses the phase-one angular contribution and recomputes only the
/// polar product. Phase three maps the coefficients back to the antenna
/// domain.
pub fn ongrid_sgp(
    s: &SensingModel,
    y_t: &[Complex64],
    l: usize,
    gamma: f64,
    cfg: &EstimatorConfig,
) -> Result<EstimationResult> {
    cfg.validate()?;
    check_run_args(s, y_t, l)?;
    let (l_far, l_near) = far_split(l, gamma)?;
    check_split(s, l_far, l_near)?;
    let nbnu = s.obs_len();
    let mbmu = s.a_n.cols();
    let mut meter = Meter::new(cfg.count_ops);
    let mut coeff_f = vec![Complex64::ZERO; nbnu];
    let mut coeff_p = vec![Complex64::ZERO; mbmu];
    let mut far_sel: Vec<usize> = Vec::with_capacity(l_far);
    let mut pol_sel: Vec<usize> = Vec::with_capacity(l_near);
    let mut support = SupportSet::new();
    let mut r = y_t.to_vec();
    let mut norms = Vec::with_capacity(l);
    let mut far_contrib = vec![Complex64::ZERO; nbnu];

    for _ in 0..l_far {
        let idx = match_support(&s.a_f, &r, &far_sel)?;
        meter.support((nbnu * nbnu) as u64);
        far_sel.push(idx);
        support.push(Domain::Angular, idx)?;
        let mut x: Vec<Complex64> = far_sel.iter().map(|&i| coeff_f[i]).collect();
        lms_pass(&s.a_f, y_t, &far_sel, &mut x, cfg.mu, cfg.lms_passes)?;
        meter.coeff(lms_cost(far_sel.len(), nbnu, cfg.lms_passes));
        for (i, &ci) in far_sel.iter().enumerate() {
            coeff_f[ci] = x[i];
        }
        far_contrib = s.a_f.matvec(&coeff_f)?;
        meter.residual((nbnu * nbnu) as u64);
        r = sub_into(y_t, &[&far_contrib]);
        norms.push(norm(&r));
    }

    let mut joint: Vec<usize> = far_sel.clone();
    for _ in 0..l_near {
        let idx = match_support(&s.a_n, &r, &pol_sel)?;
        meter.support((nbnu * mbmu) as u64);
        pol_sel.push(idx);
        support.push(Domain::Polar, idx)?;
        joint.push(nbnu + idx);
        let mut x: Vec<Complex64> = joint
            .iter()
            .map(|&i| {
                if i < nbnu {
                    coeff_f[i]
                } else {
                    coeff_p[i - nbnu]
                }
            })
            .collect();
        lms_pass(&s.a, y_t, &joint, &mut x, cfg.mu, cfg.lms_passes)?;
        meter.coeff(lms_cost(joint.len(), nbnu, cfg.lms_passes));
        for (i, &ci) in joint.iter().enumerate() {
            if ci < nbnu {
                coeff_f[ci] = x[i];
            } else {
                coeff_p[ci - nbnu] = x[i];
            }
        }
        let near_contrib = s.a_n.matvec(&coeff_p)?;
        meter.residual((nbnu * mbmu) as u64);
        r = sub_into(y_t, &[&far_contrib, &near_contrib]);
        norms.push(norm(&r));
    }

    let h_ang = CMat::from_data(s.n_b(), s.n_u(), coeff_f)?;
    let h_pol = CMat::from_data(s.m_b(), s.m_u(), coeff_p)?;
    let h_hat = reconstruct(&h_ang, &h_pol, s)?;
    meter.reconstruction(reconstruct_cost(s.n_b(), s.n_u(), s.m_b(), s.m_u()));
    Ok(EstimationResult {
        h_hat,
        support,
        residual_norms: norms,
        gamma_hat: None,
        counters: meter.c,
    })
}

/// Given-ratio pursuit with exact least-squares coefficient updates.
/// Phase two refits the joint support, so both dense contributions are
/// recomputed for the residual.
pub fn hybrid_omp(
    s: &SensingModel,
    y_t: &[Complex64],
    l: usize,
    gamma: f64,
    cfg: &EstimatorConfig,
) -> Result<EstimationResult> {
    cfg.validate()?;
    check_run_args(s, y_t, l)?;
    let (l_far, l_near) = far_split(l, gamma)?;
    check_split(s, l_far, l_near)?;
    let nbnu = s.obs_len();
    let mbmu = s.a_n.cols();
    let mut meter = Meter::new(cfg.count_ops);
    let mut coeff_f = vec![Complex64::ZERO; nbnu];
    let mut coeff_p = vec![Complex64::ZERO; mbmu];
    let mut far_sel: Vec<usize> = Vec::with_capacity(l_far);
    let mut pol_sel: Vec<usize> = Vec::with_capacity(l_near);
    let mut support = SupportSet::new();
    let mut r = y_t.to_vec();
    let mut norms = Vec::with_capacity(l);

    for _ in 0..l_far {
        let idx = match_support(&s.a_f, &r, &far_sel)?;
        meter.support((nbnu * nbnu) as u64);
        far_sel.push(idx);
        support.push(Domain::Angular, idx)?;
        let x = ls_solve(&s.a_f, y_t, &far_sel)?;
        meter.coeff(ls_cost(far_sel.len(), nbnu));
        coeff_f.fill(Complex64::ZERO);
        for (i, &ci) in far_sel.iter().enumerate() {
            coeff_f[ci] = x[i];
        }
        let far_contrib = s.a_f.matvec(&coeff_f)?;
        meter.residual((nbnu * nbnu) as u64);
        r = sub_into(y_t, &[&far_contrib]);
        norms.push(norm(&r));
    }

    let mut joint: Vec<usize> = far_sel.clone();
    for _ in 0..l_near {
        let idx = match_support(&s.a_n, &r, &pol_sel)?;
        meter.support((nbnu * mbmu) as u64);
        pol_sel.push(idx);
        support.push(Domain::Polar, idx)?;
        joint.push(nbnu + idx);
        let x = ls_solve(&s.a, y_t, &joint)?;
        meter.coeff(ls_cost(joint.len(), nbnu));
        coeff_f.fill(Complex64::ZERO);
        coeff_p.fill(Complex64::ZERO);
        for (i, &ci) in joint.iter().enumerate() {
            if ci < nbnu {
                coeff_f[ci] = x[i];
            } else {
                coeff_p[ci - nbnu] = x[i];
            }
        }
        let far_contrib = s.a_f.matvec(&coeff_f)?;
        let near_contrib = s.a_n.matvec(&coeff_p)?;
        meter.residual((nbnu * nbnu + nbnu * mbmu) as u64);
        r = sub_into(y_t, &[&far_contrib, &near_contrib]);
        norms.push(norm(&r));
    }

    let h_ang = CMat::from_data(s.n_b(), s.n_u(), coeff_f)?;
    let h_pol = CMat::from_data(s.m_b(), s.m_u(), coeff_p)?;
    let h_hat = reconstruct(&h_ang, &h_pol, s)?;
    meter.reconstruction(reconstruct_cost(s.n_b(), s.n_u(), s.m_b(), s.m_u()));
    Ok(EstimationResult {
        h_hat,
        support,
        residual_norms: norms,
        gamma_hat: None,
        counters: meter.c,
    })
}

/// Angular-only orthogonal matching pursuit baseline.
pub fn far_omp(
    s: &SensingModel,
    y_t: &[Complex64],
    l: usize,
    cfg: &EstimatorConfig,
) -> Result<EstimationResult> {
    hybrid_omp(s, y_t, l, 1.0, cfg)
}

/// Unstructured least-squares baseline `H_hat = Y_t P^{-1} / sqrt(tau)`.
/// Invertibility of the precoder is required; no sparsity is used.
pub fn ls_baseline(y_t: &CMat, pilots: &PilotConfig) -> Result<EstimationResult> {
    pilots.validate()?;
    let n_u = pilots.n_u();
    if y_t.cols() != n_u {
        return Err(Error::DimensionMismatch(format!(
            "correlated block has {} columns, pilots expect {n_u}",
            y_t.cols()
        )));
    }
    let p_inv = crate::linalg::invert(&pilots.p)?;
    let h_hat = y_t
        .mul(&p_inv)?
        .scale(Complex64::new(1.0 / libm::sqrt(pilots.tau as f64), 0.0));
    let n_b = y_t.rows() as u64;
    let n_u64 = n_u as u64;
    let counters = OpCounters {
        support_update: 0,
        coeff_update: n_u64 * n_u64 * n_u64,
        residual_update: 0,
        reconstruction: n_b * n_u64 * n_u64,
    };
    Ok(EstimationResult {
        h_hat,
        support: SupportSet::new(),
        residual_norms: Vec::new(),
        gamma_hat: None,
        counters,
    })
}

/// Output of the angular-only first pass shared by the ratio-traversal
/// schemes. Column `j` of `residuals_before` is the residual before the
/// `(j+1)`-th pick (column 0 is the raw observation); `snapshots[j]` is the
/// dense angular coefficient vector after `j` picks, so
/// `residuals_before[:, j] = y - a_f * snapshots[j]` holds by construction
/// and any prefix of the pass can be resumed exactly.
#[derive(Debug, Clone)]
pub struct FarPassOutput {
    pub support: Vec<usize>,
    pub snapshots: Vec<Vec<Complex64>>,
    pub residuals_before: CMat,
    pub final_residual: Vec<Complex64>,
    pub residual_norms: Vec<f64>,
    pub counters: OpCounters,
}

enum CoeffUpdate {
    Lms,
    Ls,
}

fn far_pass(
    s: &SensingModel,
    y_t: &[Complex64],
    l: usize,
    cfg: &EstimatorConfig,
    update: CoeffUpdate,
) -> Result<FarPassOutput> {
    cfg.validate()?;
    check_run_args(s, y_t, l)?;
    check_split(s, l, 0)?;
    let nbnu = s.obs_len();
    let mut meter = Meter::new(cfg.count_ops);
    let mut coeff = vec![Complex64::ZERO; nbnu];
    let mut sel: Vec<usize> = Vec::with_capacity(l);
    let mut snapshots = Vec::with_capacity(l + 1);
    snapshots.push(coeff.clone());
    let mut residuals_before = CMat::zeros(nbnu, l);
    let mut r = y_t.to_vec();
    let mut norms = Vec::with_capacity(l);
    for it in 0..l {
        residuals_before.col_mut(it).copy_from_slice(&r);
        let idx = match_support(&s.a_f, &r, &sel)?;
        meter.support((nbnu * nbnu) as u64);
        sel.push(idx);
        match update {
            CoeffUpdate::Lms => {
                let mut x: Vec<Complex64> = sel.iter().map(|&i| coeff[i]).collect();
                lms_pass(&s.a_f, y_t, &sel, &mut x, cfg.mu, cfg.lms_passes)?;
                meter.coeff(lms_cost(sel.len(), nbnu, cfg.lms_passes));
                for (i, &ci) in sel.iter().enumerate() {
                    coeff[ci] = x[i];
                }
            }
            CoeffUpdate::Ls => {
                let x = ls_solve(&s.a_f, y_t, &sel)?;
                meter.coeff(ls_cost(sel.len(), nbnu));
                coeff.fill(Complex64::ZERO);
                for (i, &ci) in sel.iter().enumerate() {
                    coeff[ci] = x[i];
                }
            }
        }
        snapshots.push(coeff.clone());
        let contrib = s.a_f.matvec(&coeff)?;
        meter.residual((nbnu * nbnu) as u64);
        r = sub_into(y_t, &[&contrib]);
        norms.push(norm(&r));
    }
    Ok(FarPassOutput {
        support: sel,
        snapshots,
        residuals_before,
        final_residual: r,
        residual_norms: norms,
        counters: meter.c,
    })
}

/// Angular-only LMS pass over the full budget (the `gamma = 1` hypothesis),
/// recording the rewind state for [`sgp_traversal`].
pub fn offgrid_far_pass(
    s: &SensingModel,
    y_t: &[Complex64],
    l: usize,
    cfg: &EstimatorConfig,
) -> Result<FarPassOutput> {
    far_pass(s, y_t, l, cfg, CoeffUpdate::Lms)
}

/// Winner of the ratio traversal, in codebook coordinates.
#[derive(Debug, Clone)]
pub struct TraversalOutput {
    /// Dense angular coefficient vector of the winning candidate.
    pub coeff_ang: Vec<Complex64>,
    /// Dense polar coefficient vector of the winning candidate.
    pub coeff_pol: Vec<Complex64>,
    pub support: SupportSet,
    pub gamma_hat: f64,
    pub residual_norms: Vec<f64>,
    pub final_residual_norm: f64,
    pub counters: OpCounters,
}

fn traversal(
    s: &SensingModel,
    y_t: &[Complex64],
    l: usize,
    far: &FarPassOutput,
    cfg: &EstimatorConfig,
    update: CoeffUpdate,
) -> Result<TraversalOutput> {
    cfg.validate()?;
    check_run_args(s, y_t, l)?;
    if far.support.len() != l || far.snapshots.len() != l + 1 {
        return Err(Error::DimensionMismatch(format!(
            "first pass covers {} picks, traversal expects {l}",
            far.support.len()
        )));
    }
    let nbnu = s.obs_len();
    let mbmu = s.a_n.cols();
    if l > mbmu {
        return Err(Error::InvalidInput(format!(
            "budget {l} exceeds the {mbmu} polar columns; the all-polar candidate is infeasible"
        )));
    }
    let mut meter = Meter::new(cfg.count_ops);

    // gamma = 1 candidate: the first pass itself.
    let mut best_coeff_ang = far.snapshots[l].clone();
    let mut best_coeff_pol = vec![Complex64::ZERO; mbmu];
    let mut best_support = SupportSet::new();
    for &i in &far.support {
        best_support.push(Domain::Angular, i)?;
    }
    let mut best_norms = far.residual_norms.clone();
    let mut best_norm = norm(&far.final_residual);
    let mut gamma_hat = 1.0;

    for k in 1..=l {
        let lf = l - k;
        let mut coeff_f = far.snapshots[lf].clone();
        let mut coeff_p = vec![Complex64::ZERO; mbmu];
        let mut joint: Vec<usize> = far.support[..lf].to_vec();
        let mut pol_sel: Vec<usize> = Vec::with_capacity(k);
        let mut r = far.residuals_before.col(lf).to_vec();
        let mut norms = far.residual_norms[..lf].to_vec();
        for _ in 0..k {
            let idx = match_support(&s.a_n, &r, &pol_sel)?;
            meter.support((nbnu * mbmu) as u64);
            pol_sel.push(idx);
            joint.push(nbnu + idx);
            match update {
                CoeffUpdate::Lms => {
                    let mut x: Vec<Complex64> = joint
                        .iter()
                        .map(|&i| {
                            if i < nbnu {
                                coeff_f[i]
                            } else {
                                coeff_p[i - nbnu]
                            }
                        })
                        .collect();
                    lms_pass(&s.a, y_t, &joint, &mut x, cfg.nu, cfg.lms_passes)?;
                    meter.coeff(lms_cost(joint.len(), nbnu, cfg.lms_passes));
                    for (i, &ci) in joint.iter().enumerate() {
                        if ci < nbnu {
                            coeff_f[ci] = x[i];
                        } else {
                            coeff_p[ci - nbnu] = x[i];
                        }
                    }
                }
                CoeffUpdate::Ls => {
                    let x = ls_solve(&s.a, y_t, &joint)?;
                    meter.coeff(ls_cost(joint.len(), nbnu));
                    coeff_f.fill(Complex64::ZERO);
                    coeff_p.fill(Complex64::ZERO);
                    for (i, &ci) in joint.iter().enumerate() {
                        if ci < nbnu {
                            coeff_f[ci] = x[i];
                        } else {
                            coeff_p[ci - nbnu] = x[i];
                        }
                    }
                }
            }
            let far_contrib = s.a_f.matvec(&coeff_f)?;
            let near_contrib = s.a_n.matvec(&coeff_p)?;
            meter.residual((nbnu * nbnu + nbnu * mbmu) as u64);
            r = sub_into(y_t, &[&far_contrib, &near_contrib]);
            norms.push(norm(&r));
        }
        let r_norm = norm(&r);
        if r_norm < best_norm {
            best_norm = r_norm;
            best_coeff_ang = coeff_f;
            best_coeff_pol = coeff_p;
            best_norms = norms;
            gamma_hat = lf as f64 / l as f64;
            best_support = SupportSet::new();
            for &i in &far.support[..lf] {
                best_support.push(Domain::Angular, i)?;
            }
            for &i in &pol_sel {
                best_support.push(Domain::Polar, i)?;
            }
        }
    }

    Ok(TraversalOutput {
        coeff_ang: best_coeff_ang,
        coeff_pol: best_coeff_pol,
        support: best_support,
        gamma_hat,
        residual_norms: best_norms,
        final_residual_norm: best_norm,
        counters: meter.c,
    })
}

/// Try every far/near split of the budget, rewinding the shared angular pass
/// to the split point and finishing with polar LMS picks; the smallest final
/// residual wins and fixes `gamma_hat`. Strict comparison keeps the larger
/// ratio on ties, so a planar-only channel yields `gamma_hat = 1`.
pub fn sgp_traversal(
    s: &SensingModel,
    y_t: &[Complex64],
    l: usize,
    far: &FarPassOutput,
    cfg: &EstimatorConfig,
) -> Result<TraversalOutput> {
    traversal(s, y_t, l, far, cfg, CoeffUpdate::Lms)
}

/// Ratio traversal with least-squares coefficient updates throughout, as a
/// pursuit-only counterpart of the LMS traversal.
pub fn hybrid_omp_nogamma(
    s: &SensingModel,
    y_t: &[Complex64],
    l: usize,
    cfg: &EstimatorConfig,
) -> Result<EstimationResult> {
    let far = far_pass(s, y_t, l, cfg, CoeffUpdate::Ls)?;
    let trav = traversal(s, y_t, l, &far, cfg, CoeffUpdate::Ls)?;
    let mut counters = far.counters;
    counters.add(&trav.counters);
    let h_ang = CMat::from_data(s.n_b(), s.n_u(), trav.coeff_ang)?;
    let h_pol = CMat::from_data(s.m_b(), s.m_u(), trav.coeff_pol)?;
    let h_hat = reconstruct(&h_ang, &h_pol, s)?;
    let mut meter = Meter::new(cfg.count_ops);
    meter.reconstruction(reconstruct_cost(s.n_b(), s.n_u(), s.m_b(), s.m_u()));
    counters.add(&meter.c);
    Ok(EstimationResult {
        h_hat,
        support: trav.support,
        residual_norms: trav.residual_norms,
        gamma_hat: Some(trav.gamma_hat),
        counters,
    })
}
