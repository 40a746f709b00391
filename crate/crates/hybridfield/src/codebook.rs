//! Analysis dictionaries: the angular (DFT) codebook for planar wavefronts
//! and the polar (angle x distance-ring) codebook for spherical ones.
//!
//! The angular dictionary samples sine angles at `(2k - n - 1) / n`,
//! `k = 1..n`, which makes the column matrix the unitary DFT of size `n`.
//!
//! The polar dictionary samples a second, half-bin-offset angle grid
//! `(2k - n) / n` and, per angle `theta`, a ladder of distance rings
//! `r_s = n^2 delta^2 (1 - theta^2) / (2 beta^2 lambda s)`, `s = 1, 2, ...`,
//! kept while `r_s >= r_min`; ring `s = 0` is the planar-limit column. The
//! rings are uniformly spaced in inverse distance, which holds the coherence
//! between adjacent rings at a level set by `beta` (larger `beta`, coarser
//! ladder, lower coherence, fewer columns). The offset angle grid makes the
//! total column count `m` an almost-free function of `beta`: the symmetric
//! grid changes `m` only in even steps, which leaves odd column budgets
//! unreachable. For a single-antenna side (`n = 1`) the grid degenerates to
//! the broadside angle `0`.

use alloc::format;
use alloc::vec::Vec;

use crate::channel::{far_steering, near_steering_inv_dist};
use crate::linalg::CMat;
use crate::{Error, Result};

/// Unitary angular codebook of an `n`-element array.
#[derive(Debug, Clone)]
pub struct AngularDictionary {
    pub n: usize,
    /// `n x n` column matrix; column `k` is `far_steering(angles[k], n)`.
    pub f: CMat,
    /// Sine-angle grid `(2k - n - 1) / n`, ascending.
    pub angles: Vec<f64>,
}

/// Geometry label of one polar-codebook column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarLabel {
    /// Sine angle of the column.
    pub angle: f64,
    /// Inverse distance `1 / r` of the ring; `0` for the planar ring.
    pub inv_distance: f64,
    /// Ring index `s` (0 = planar).
    pub ring: usize,
}

/// Polar codebook of an `n`-element array.
#[derive(Debug, Clone)]
pub struct PolarDictionary {
    pub n: usize,
    /// Total column count.
    pub m: usize,
    /// `n x m` column matrix, angle-major (all rings of the first angle,
    /// then all rings of the next).
    pub d: CMat,
    /// Per-column geometry labels, aligned with the columns of `d`.
    pub labels: Vec<PolarLabel>,
    pub beta: f64,
    pub r_min: f64,
    pub wavelength: f64,
}

/// Build the angular codebook. `f^H f = I` holds to rounding error.
pub fn build_angular(n: usize) -> Result<AngularDictionary> {
    if n == 0 {
        return Err(Error::InvalidInput(
            "dictionary size must be at least 1".into(),
        ));
    }
    let angles: Vec<f64> = (1..=n)
        .map(|k| (2.0 * k as f64 - n as f64 - 1.0) / n as f64)
        .collect();
    let mut f = CMat::zeros(n, n);
    for (k, &theta) in angles.iter().enumerate() {
        let col = far_steering(theta, n)?;
        f.col_mut(k).copy_from_slice(&col);
    }
    Ok(AngularDictionary { n, f, angles })
}

fn check_polar_args(n: usize, wavelength: f64, beta: f64, r_min: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidInput(
            "dictionary size must be at least 1".into(),
        ));
    }
    if !(wavelength > 0.0) || !wavelength.is_finite() {
        return Err(Error::InvalidInput(format!(
            "wavelength must be positive and finite, got {wavelength}"
        )));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidInput(format!(
            "beta must be positive and finite, got {beta}"
        )));
    }
    if !(r_min > 0.0) || !r_min.is_finite() {
        return Err(Error::InvalidInput(format!(
            "r_min must be positive and finite, got {r_min}"
        )));
    }
    Ok(())
}

/// Offset sine-angle grid of the polar codebook: `(2k - n) / n`, `k = 1..n`
/// (broadside only for `n = 1`).
fn polar_angles(n: usize) -> Vec<f64> {
    if n == 1 {
        return alloc::vec![0.0];
    }
    (1..=n)
        .map(|k| (2.0 * k as f64 - n as f64) / n as f64)
        .collect()
}

/// Near-field rings kept for sine angle `theta`:
/// `floor(n^2 delta^2 (1 - theta^2) / (2 beta^2 lambda r_min))`.
fn ring_count(n: usize, wavelength: f64, beta: f64, r_min: f64, theta: f64) -> usize {
    let delta = wavelength * 0.5;
    let aperture_sq = (n as f64 * delta) * (n as f64 * delta);
    let c = aperture_sq * (1.0 - theta * theta) / (2.0 * beta * beta * wavelength * r_min);
    if c < 0.0 {
        return 0;
    }
    libm::floor(c) as usize
}

/// Column count of the polar codebook without building it.
pub fn polar_size(n: usize, wavelength: f64, beta: f64, r_min: f64) -> Result<usize> {
    check_polar_args(n, wavelength, beta, r_min)?;
    let mut m = 0;
    for theta in polar_angles(n) {
        m += 1 + ring_count(n, wavelength, beta, r_min, theta);
    }
    Ok(m)
}

/// Build the polar codebook.
pub fn build_polar(n: usize, wavelength: f64, beta: f64, r_min: f64) -> Result<PolarDictionary> {
    check_polar_args(n, wavelength, beta, r_min)?;
    let delta = wavelength * 0.5;
    let aperture_sq = (n as f64 * delta) * (n as f64 * delta);
    let mut labels = Vec::new();
    let mut columns: Vec<Vec<num_complex::Complex64>> = Vec::new();
    for theta in polar_angles(n) {
        let rings = ring_count(n, wavelength, beta, r_min, theta);
        // Inverse-distance step between consecutive rings of this angle.
        let du = if rings > 0 {
            2.0 * beta * beta * wavelength / (aperture_sq * (1.0 - theta * theta))
        } else {
            0.0
        };
        for s in 0..=rings {
            let u = s as f64 * du;
            labels.push(PolarLabel {
                angle: theta,
                inv_distance: u,
                ring: s,
            });
            columns.push(near_steering_inv_dist(u, theta, n, wavelength)?);
        }
    }
    let m = columns.len();
    let mut d = CMat::zeros(n, m);
    for (j, col) in columns.iter().enumerate() {
        d.col_mut(j).copy_from_slice(col);
    }
    Ok(PolarDictionary {
        n,
        m,
        d,
        labels,
        beta,
        r_min,
        wavelength,
    })
}

/// Geometry label of polar column `col`.
pub fn polar_lookup(dict: &PolarDictionary, col: usize) -> Result<&PolarLabel> {
    dict.labels
        .get(col)
        .ok_or_else(|| Error::InvalidInput(format!("polar column {col} outside 0..{}", dict.m)))
}

/// Find `beta` in `[lo, hi]` whose polar codebook has exactly `target_m`
/// columns. The column count is a nonincreasing step function of `beta`;
/// the returned value sits in the interior of the plateau attaining
/// `target_m`. Errors if the target is outside `[size(hi), size(lo)]` or
/// falls in a gap of the step function (the count can step by more than one).
pub fn calibrate_beta(
    n: usize,
    wavelength: f64,
    r_min: f64,
    target_m: usize,
    lo: f64,
    hi: f64,
) -> Result<f64> {
    if !(lo > 0.0) || !(hi > lo) || !hi.is_finite() {
        return Err(Error::InvalidInput(format!(
            "calibration bracket must satisfy 0 < lo < hi < inf, got ({lo}, {hi})"
        )));
    }
    let size = |beta: f64| polar_size(n, wavelength, beta, r_min);
    let m_lo = size(lo)?;
    let m_hi = size(hi)?;
    if target_m > m_lo || target_m < m_hi {
        return Err(Error::InvalidInput(format!(
            "target {target_m} outside attainable range [{m_hi}, {m_lo}] for beta in [{lo}, {hi}]"
        )));
    }
    // Left edge: boundary between size > target (left) and size <= target.
    let bisect = |pred: &dyn Fn(usize) -> bool| -> Result<f64> {
        let (mut a, mut b) = (lo, hi);
        while b - a > 1e-12 * hi {
            let mid = 0.5 * (a + b);
            if pred(size(mid)?) {
                a = mid;
            } else {
                b = mid;
            }
        }
        Ok(0.5 * (a + b))
    };
    let left = if m_lo == target_m {
        lo
    } else {
        bisect(&|m| m > target_m)?
    };
    let right = if m_hi == target_m {
        hi
    } else {
        bisect(&|m| m >= target_m)?
    };
    let beta = 0.5 * (left + right);
    if size(beta)? != target_m {
        return Err(Error::InvalidInput(format!(
            "no beta in [{lo}, {hi}] attains exactly {target_m} columns (count steps past it)"
        )));
    }
    Ok(beta)
}
