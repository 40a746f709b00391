//! Pilot observation model and the Kronecker-structured sensing matrices.
//!
//! The user sends `tau` pilot symbols through an orthogonal code: the
//! received block is `Y = H P Phi^T + N` with precoder `P` (per-antenna
//! power `p / n_u` on the diagonal by default) and code `Phi` satisfying
//! `Phi^T Phi^* = tau I`. Correlating with the code,
//! `Y_t = Y Phi^* / sqrt(tau) = sqrt(tau) H P + N_t`, keeps the noise white
//! with the same per-entry variance.
//!
//! Expanding `H` over the angular and polar codebooks and vectorising
//! column-major turns the estimation problem into a sparse recovery over
//!
//! `vec(Y_t) = A_F vec(H_ang) + A_N vec(H_pol) + n`,
//! `A_F = sqrt(tau) (P^T F_T^* (x) F_R)`,
//! `A_N = sqrt(tau) (P^T D_T^* (x) D_R)`,
//!
//! whose columns all share the norm `sqrt(tau p / n_u)` under the default
//! precoder.

use alloc::format;
use alloc::vec::Vec;
use num_complex::Complex64;

use crate::codebook::{AngularDictionary, PolarDictionary};
use crate::linalg::{kron_vec, CMat};
use crate::rng::SimRng;
use crate::{Error, Result};

/// Pilot block description.
#[derive(Debug, Clone)]
pub struct PilotConfig {
    /// Pilot length (symbols), at least `n_u`.
    pub tau: usize,
    /// Total transmit power `p`.
    pub power: f64,
    /// `n_u x n_u` precoder.
    pub p: CMat,
    /// `tau x n_u` orthogonal code, `Phi^T Phi^* = tau I`.
    pub phi: CMat,
}

impl PilotConfig {
    pub fn n_u(&self) -> usize {
        self.p.rows()
    }

    /// Check dimensions, power and code orthogonality.
    pub fn validate(&self) -> Result<()> {
        let n_u = self.p.rows();
        if n_u == 0 || self.p.cols() != n_u {
            return Err(Error::DimensionMismatch(format!(
                "precoder must be square and nonempty, got {}x{}",
                self.p.rows(),
                self.p.cols()
            )));
        }
        if self.tau < n_u {
            return Err(Error::InvalidInput(format!(
                "pilot length {} shorter than antenna count {n_u}",
                self.tau
            )));
        }
        if self.phi.rows() != self.tau || self.phi.cols() != n_u {
            return Err(Error::DimensionMismatch(format!(
                "code must be {}x{n_u}, got {}x{}",
                self.tau,
                self.phi.rows(),
                self.phi.cols()
            )));
        }
        if !(self.power > 0.0) || !self.power.is_finite() {
            return Err(Error::InvalidInput(format!(
                "pilot power must be positive and finite, got {}",
                self.power
            )));
        }
        // Phi^T Phi^* = tau I.
        let g = self.phi.transpose().mul(&self.phi.conj())?;
        for i in 0..n_u {
            for j in 0..n_u {
                let want = if i == j { self.tau as f64 } else { 0.0 };
                if (g.get(i, j) - Complex64::new(want, 0.0)).norm() > 1e-9 * self.tau as f64 {
                    return Err(Error::InvalidInput(format!(
                        "pilot code is not orthogonal: (Phi^T Phi^*)[{i}][{j}] = {}",
                        g.get(i, j)
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Default pilots: uniform power split `P = sqrt(p / n_u) I` and the first
/// `n_u` columns of the `tau`-point DFT code
/// `Phi[k][m] = exp(-j 2 pi k m / tau)`.
pub fn default_pilots(n_u: usize, tau: usize, power: f64) -> Result<PilotConfig> {
    if n_u == 0 {
        return Err(Error::InvalidInput("n_u must be at least 1".into()));
    }
    if tau < n_u {
        return Err(Error::InvalidInput(format!(
            "pilot length {tau} must be at least n_u = {n_u}"
        )));
    }
    if !(power > 0.0) || !power.is_finite() {
        return Err(Error::InvalidInput(format!(
            "pilot power must be positive and finite, got {power}"
        )));
    }
    let amp = libm::sqrt(power / n_u as f64);
    let p = CMat::from_fn(n_u, n_u, |i, j| {
        if i == j {
            Complex64::new(amp, 0.0)
        } else {
            Complex64::ZERO
        }
    });
    let phi = CMat::from_fn(tau, n_u, |k, m| {
        let phase = -2.0 * core::f64::consts::PI * (k * m) as f64 / tau as f64;
        Complex64::new(libm::cos(phase), libm::sin(phase))
    });
    let cfg = PilotConfig { tau, power, p, phi };
    cfg.validate()?;
    Ok(cfg)
}

/// One received pilot block.
#[derive(Debug, Clone)]
pub struct PilotObservation {
    /// Raw block `n_b x tau`.
    pub y: CMat,
    /// Code-correlated block `n_b x n_u`; its column-major vectorisation is
    /// the sparse-recovery observation.
    pub y_t: CMat,
    pub noise_var: f64,
}

/// Simulate one pilot transmission. Noise entries are circularly symmetric
/// complex Gaussian with variance `noise_var`, drawn column-major over the
/// raw block; `noise_var = 0` draws nothing.
pub fn observe(
    h: &CMat,
    pilots: &PilotConfig,
    noise_var: f64,
    rng: &mut SimRng,
) -> Result<PilotObservation> {
    pilots.validate()?;
    if h.cols() != pilots.n_u() {
        return Err(Error::DimensionMismatch(format!(
            "channel has {} columns, pilots expect {}",
            h.cols(),
            pilots.n_u()
        )));
    }
    if !(noise_var >= 0.0) || !noise_var.is_finite() {
        return Err(Error::InvalidInput(format!(
            "noise variance must be nonnegative and finite, got {noise_var}"
        )));
    }
    let mut y = h.mul(&pilots.p)?.mul(&pilots.phi.transpose())?;
    if noise_var > 0.0 {
        for v in y.as_mut_slice() {
            *v += rng.complex_gaussian(noise_var);
        }
    }
    let y_t = y
        .mul(&pilots.phi.conj())?
        .scale(Complex64::new(1.0 / libm::sqrt(pilots.tau as f64), 0.0));
    Ok(PilotObservation { y, y_t, noise_var })
}

/// The two codebook sensing matrices plus everything needed to interpret
/// their columns.
#[derive(Debug, Clone)]
pub struct SensingModel {
    pub ang_r: AngularDictionary,
    pub ang_t: AngularDictionary,
    pub pol_r: PolarDictionary,
    pub pol_t: PolarDictionary,
    pub pilots: PilotConfig,
    /// `n_b n_u x n_b n_u` angular sensing matrix.
    pub a_f: CMat,
    /// `n_b n_u x m_b m_u` polar sensing matrix.
    pub a_n: CMat,
    /// Concatenation `[a_f | a_n]`, polar columns offset by `n_b * n_u`.
    pub a: CMat,
}

impl SensingModel {
    pub fn n_b(&self) -> usize {
        self.ang_r.n
    }

    pub fn n_u(&self) -> usize {
        self.ang_t.n
    }

    pub fn m_b(&self) -> usize {
        self.pol_r.m
    }

    pub fn m_u(&self) -> usize {
        self.pol_t.m
    }

    /// Observation length `n_b * n_u`.
    pub fn obs_len(&self) -> usize {
        self.n_b() * self.n_u()
    }

    /// Angular coefficient index of the pair (BS column `ib`, UE column `ju`).
    pub fn angular_index(&self, ib: usize, ju: usize) -> usize {
        ju * self.n_b() + ib
    }

    /// Polar coefficient index of the pair (BS column `imb`, UE column `jmu`).
    pub fn polar_index(&self, imb: usize, jmu: usize) -> usize {
        jmu * self.m_b() + imb
    }
}

fn kron_sensing(left: &CMat, right: &CMat, scale: f64) -> CMat {
    let rows = left.rows() * right.rows();
    let cols = left.cols() * right.cols();
    let mut a = CMat::zeros(rows, cols);
    for jl in 0..left.cols() {
        for jr in 0..right.cols() {
            let mut col = kron_vec(left.col(jl), right.col(jr));
            for v in &mut col {
                *v *= scale;
            }
            a.col_mut(jl * right.cols() + jr).copy_from_slice(&col);
        }
    }
    a
}

/// Assemble the angular and polar sensing matrices for a dictionary pair and
/// pilot block.
pub fn build_sensing(
    ang_r: AngularDictionary,
    ang_t: AngularDictionary,
    pol_r: PolarDictionary,
    pol_t: PolarDictionary,
    pilots: PilotConfig,
) -> Result<SensingModel> {
    pilots.validate()?;
    if pol_r.n != ang_r.n {
        return Err(Error::DimensionMismatch(format!(
            "base-station codebooks disagree: angular n = {}, polar n = {}",
            ang_r.n, pol_r.n
        )));
    }
    if pol_t.n != ang_t.n {
        return Err(Error::DimensionMismatch(format!(
            "user codebooks disagree: angular n = {}, polar n = {}",
            ang_t.n, pol_t.n
        )));
    }
    if pilots.n_u() != ang_t.n {
        return Err(Error::DimensionMismatch(format!(
            "pilots are sized for {} antennas, user codebooks for {}",
            pilots.n_u(),
            ang_t.n
        )));
    }
    let sqrt_tau = libm::sqrt(pilots.tau as f64);
    let pt = pilots.p.transpose();
    let w_f = pt.mul(&ang_t.f.conj())?;
    let w_n = pt.mul(&pol_t.d.conj())?;
    let a_f = kron_sensing(&w_f, &ang_r.f, sqrt_tau);
    let a_n = kron_sensing(&w_n, &pol_r.d, sqrt_tau);
    let rows = a_f.rows();
    let mut a = CMat::zeros(rows, a_f.cols() + a_n.cols());
    for j in 0..a_f.cols() {
        a.col_mut(j).copy_from_slice(a_f.col(j));
    }
    for j in 0..a_n.cols() {
        a.col_mut(a_f.cols() + j).copy_from_slice(a_n.col(j));
    }
    Ok(SensingModel {
        ang_r,
        ang_t,
        pol_r,
        pol_t,
        pilots,
        a_f,
        a_n,
        a,
    })
}

/// Column-major vectorisation of the correlated observation.
pub fn observation_vector(obs: &PilotObservation) -> Vec<Complex64> {
    obs.y_t.as_slice().to_vec()
}

/// Frobenius-normalised check value `sqrt(tau * p / n_u)`: the common column
/// norm of both sensing matrices under the default precoder.
pub fn default_column_norm(pilots: &PilotConfig) -> f64 {
    libm::sqrt(pilots.tau as f64 * pilots.power / pilots.n_u() as f64)
}
