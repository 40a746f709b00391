//! Array geometry, steering vectors and multipath channel synthesis.
//!
//! Both link ends carry uniform linear arrays with half-wavelength spacing.
//! A path is classified by wavefront curvature at the base station: beyond
//! the Rayleigh distance `2 D^2 / lambda` of the aperture `D` the planar
//! (far-field) steering vector applies, inside it the spherical (near-field)
//! one. A channel mixes both kinds; the `gamma` configuration knob fixes the
//! fraction of far-field paths.
//!
//! Steering conventions, pinned by the tests:
//! * far field: entry `k` (1-based) is `exp(+j pi theta (k-1)) / sqrt(n)`
//!   where `theta` is the sine of the physical angle;
//! * near field: entry `k` is `exp(-j (2 pi / lambda) (r_k - r_1)) / sqrt(n)`
//!   where `r_k` is the source distance to element `k`. Phases are referenced
//!   to the first element, so entry 1 is always real positive and the
//!   `r -> inf` limit reproduces the far-field vector entry for entry.
//!
//! Distances enter through the inverse distance `u = 1/r` (with `u = 0` for
//! the far limit), and the phase differences are evaluated in a rationalised
//! form that avoids the catastrophic cancellation of `sqrt(r^2 + ...) - r`
//! at large `r`.

use alloc::format;
use alloc::vec::Vec;
use num_complex::Complex64;

use crate::linalg::CMat;
use crate::rng::SimRng;
use crate::{Error, Result};

/// Static link description.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Base-station antenna count.
    pub n_b: usize,
    /// User-equipment antenna count.
    pub n_u: usize,
    /// Carrier wavelength in metres.
    pub wavelength: f64,
    /// Total path count `L` (one line-of-sight path plus `L - 1` scattered).
    pub n_paths: usize,
    /// Rician factor `kappa >= 0`; the line-of-sight path carries a fraction
    /// `kappa / (1 + kappa)` of the average path energy.
    pub kappa: f64,
    /// Fraction of far-field paths in `[0, 1]`; the first
    /// `floor(gamma * n_paths)` paths are far-field.
    pub gamma: f64,
    /// Range (metres) the line-of-sight distance is drawn from.
    pub ue_distance_range: (f64, f64),
    /// Range (metres) scatterer distances are drawn from.
    pub scatterer_distance_range: (f64, f64),
}

impl SystemConfig {
    /// Validate every field against its documented domain.
    pub fn validate(&self) -> Result<()> {
        if self.n_b == 0 {
            return Err(Error::InvalidInput("n_b must be at least 1".into()));
        }
        if self.n_u == 0 {
            return Err(Error::InvalidInput("n_u must be at least 1".into()));
        }
        if !(self.wavelength > 0.0) || !self.wavelength.is_finite() {
            return Err(Error::InvalidInput(format!(
                "wavelength must be positive and finite, got {}",
                self.wavelength
            )));
        }
        if self.n_paths < 2 {
            return Err(Error::InvalidInput(format!(
                "n_paths must be at least 2 (one line-of-sight plus scatterers), got {}",
                self.n_paths
            )));
        }
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return Err(Error::InvalidInput(format!(
                "kappa must be nonnegative and finite, got {}",
                self.kappa
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidInput(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        for (name, range) in [
            ("ue_distance_range", self.ue_distance_range),
            ("scatterer_distance_range", self.scatterer_distance_range),
        ] {
            if !(range.0 > 0.0) || !(range.1 >= range.0) || !range.1.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{name} must satisfy 0 < lo <= hi < inf, got ({}, {})",
                    range.0, range.1
                )));
            }
        }
        Ok(())
    }

    /// Element spacing, fixed at half a wavelength.
    pub fn spacing(&self) -> f64 {
        self.wavelength * 0.5
    }

    /// Base-station aperture `n_b * spacing`.
    pub fn bs_aperture(&self) -> f64 {
        self.n_b as f64 * self.spacing()
    }

    /// Far-field path count `floor(gamma * n_paths)`.
    pub fn n_far(&self) -> usize {
        libm::floor(self.gamma * self.n_paths as f64) as usize
    }
}

/// Wavefront regime of a single path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    Far,
    Near,
}

/// One propagation path. Angles are sines of the physical angles, in
/// `[-1, 1]`. Near paths carry a positive source distance on each side;
/// far paths carry none.
#[derive(Debug, Clone, PartialEq)]
pub struct PathParam {
    pub kind: PathKind,
    pub gain: Complex64,
    /// Base-station side angle.
    pub theta_r: f64,
    /// User side angle.
    pub theta_t: f64,
    /// Base-station side distance (near paths only).
    pub r_r: Option<f64>,
    /// User side distance (near paths only).
    pub r_t: Option<f64>,
}

/// A drawn channel together with its generating path parameters.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// `n_b x n_u` channel matrix.
    pub h: CMat,
    pub paths: Vec<PathParam>,
    /// Normalised line-of-sight amplitude `sqrt(kappa / (1 + kappa))`.
    pub los_gain: f64,
}

/// Rayleigh distance `2 * aperture^2 / wavelength` separating the spherical
/// and planar wavefront regimes of an aperture.
pub fn rayleigh_distance(aperture: f64, wavelength: f64) -> Result<f64> {
    if !(aperture >= 0.0) || !aperture.is_finite() {
        return Err(Error::InvalidInput(format!(
            "aperture must be nonnegative and finite, got {aperture}"
        )));
    }
    if !(wavelength > 0.0) || !wavelength.is_finite() {
        return Err(Error::InvalidInput(format!(
            "wavelength must be positive and finite, got {wavelength}"
        )));
    }
    Ok(2.0 * aperture * aperture / wavelength)
}

fn check_angle(theta: f64) -> Result<()> {
    if !theta.is_finite() || theta.abs() > 1.0 {
        return Err(Error::InvalidInput(format!(
            "angle must be a sine value in [-1, 1], got {theta}"
        )));
    }
    Ok(())
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidInput("array size must be at least 1".into()));
    }
    Ok(())
}

/// Planar-wavefront steering vector of an `n`-element array toward sine
/// angle `theta`. Unit Euclidean norm.
pub fn far_steering(theta: f64, n: usize) -> Result<Vec<Complex64>> {
    check_n(n)?;
    check_angle(theta)?;
    let scale = 1.0 / libm::sqrt(n as f64);
    let mut v = Vec::with_capacity(n);
    for k in 0..n {
        let phase = core::f64::consts::PI * theta * k as f64;
        v.push(Complex64::new(libm::cos(phase), libm::sin(phase)) * scale);
    }
    Ok(v)
}

/// Signed element offset `omega_k = (2k - n - 1) / 2` of the 1-based element
/// `k` from the array centre, in units of the spacing.
fn element_offset(k: usize, n: usize) -> f64 {
    (2.0 * k as f64 - n as f64 - 1.0) * 0.5
}

/// Distance from a source at `(r, theta)` (range and sine angle relative to
/// the array centre) to the 1-based element `k` of an `n`-element array with
/// spacing `delta`:
/// `sqrt(r^2 + omega_k^2 delta^2 - 2 r omega_k delta theta)`.
pub fn element_distance(r: f64, theta: f64, k: usize, n: usize, delta: f64) -> Result<f64> {
    check_n(n)?;
    check_angle(theta)?;
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidInput(format!(
            "source range must be positive and finite, got {r}"
        )));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidInput(format!(
            "element spacing must be positive and finite, got {delta}"
        )));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!(
            "element index {k} outside 1..={n}"
        )));
    }
    let w = element_offset(k, n) * delta;
    let d_sq = r * r + w * w - 2.0 * r * w * theta;
    if d_sq < 0.0 {
        // Unreachable for |theta| <= 1 since d_sq = (r - w theta)^2 + w^2 (1 - theta^2).
        return Err(Error::Numerical(format!(
            "negative squared distance {d_sq} for r = {r}, theta = {theta}"
        )));
    }
    Ok(libm::sqrt(d_sq))
}

/// Excess path length `r_k - r` of element `k` relative to the array centre,
/// written in terms of the inverse range `u = 1/r`:
///
/// `g(u) = (omega^2 delta^2 u - 2 omega delta theta) / (1 + s)`,
/// `s = sqrt(1 + omega^2 delta^2 u^2 - 2 omega delta theta u)`.
///
/// This rationalised form has no cancellation as `u -> 0` and satisfies
/// `g(0) = -omega delta theta`, the planar-wavefront limit.
fn excess_length(u: f64, theta: f64, w: f64) -> f64 {
    let s = libm::sqrt(1.0 + w * u * (w * u - 2.0 * theta));
    (w * (w * u - 2.0 * theta)) / (1.0 + s)
}

/// `excess_length` together with its partial derivatives in `theta` and `u`.
fn excess_length_grad(u: f64, theta: f64, w: f64) -> (f64, f64, f64) {
    let s = libm::sqrt(1.0 + w * u * (w * u - 2.0 * theta));
    let g = (w * (w * u - 2.0 * theta)) / (1.0 + s);
    let ds_dtheta = -w * u / s;
    let ds_du = (w * w * u - w * theta) / s;
    let dg_dtheta = (-2.0 * w - g * ds_dtheta) / (1.0 + s);
    let dg_du = (w * w - g * ds_du) / (1.0 + s);
    (g, dg_dtheta, dg_du)
}

/// Spherical-wavefront steering vector for a source at range `r` (metres,
/// positive; `f64::INFINITY` selects the planar limit) and sine angle
/// `theta`. Entry `k` is `exp(-j (2 pi / lambda) (r_k - r_1)) / sqrt(n)`;
/// unit norm, first entry real positive.
pub fn near_steering(r: f64, theta: f64, n: usize, wavelength: f64) -> Result<Vec<Complex64>> {
    if r == f64::INFINITY {
        return near_steering_inv_dist(0.0, theta, n, wavelength);
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidInput(format!(
            "source range must be positive (or +inf for the planar limit), got {r}"
        )));
    }
    near_steering_inv_dist(1.0 / r, theta, n, wavelength)
}

/// `near_steering` parameterised by the inverse range `u = 1/r >= 0`
/// (`u = 0` is exactly the planar-wavefront vector). This is the
/// parameterisation the off-grid refinement optimises over.
pub fn near_steering_inv_dist(
    u: f64,
    theta: f64,
    n: usize,
    wavelength: f64,
) -> Result<Vec<Complex64>> {
    check_n(n)?;
    check_angle(theta)?;
    if !(u >= 0.0) || !u.is_finite() {
        return Err(Error::InvalidInput(format!(
            "inverse range must be nonnegative and finite, got {u}"
        )));
    }
    if !(wavelength > 0.0) || !wavelength.is_finite() {
        return Err(Error::InvalidInput(format!(
            "wavelength must be positive and finite, got {wavelength}"
        )));
    }
    let delta = wavelength * 0.5;
    let wave_number = 2.0 * core::f64::consts::PI / wavelength;
    let scale = 1.0 / libm::sqrt(n as f64);
    let g1 = excess_length(u, theta, element_offset(1, n) * delta);
    let mut v = Vec::with_capacity(n);
    for k in 1..=n {
        let g = excess_length(u, theta, element_offset(k, n) * delta);
        let phase = -wave_number * (g - g1);
        v.push(Complex64::new(libm::cos(phase), libm::sin(phase)) * scale);
    }
    Ok(v)
}

/// Steering vector plus its entrywise derivatives with respect to `theta`
/// and `u`. Exact derivatives of `near_steering_inv_dist`; at `u = 0` the
/// `theta` derivative reduces to the planar-wavefront one.
pub fn near_steering_derivatives(
    u: f64,
    theta: f64,
    n: usize,
    wavelength: f64,
) -> Result<(Vec<Complex64>, Vec<Complex64>, Vec<Complex64>)> {
    let value = near_steering_inv_dist(u, theta, n, wavelength)?;
    let delta = wavelength * 0.5;
    let wave_number = 2.0 * core::f64::consts::PI / wavelength;
    let (_, dg1_dtheta, dg1_du) = excess_length_grad(u, theta, element_offset(1, n) * delta);
    let mut d_theta = Vec::with_capacity(n);
    let mut d_u = Vec::with_capacity(n);
    for k in 1..=n {
        let (_, dg_dtheta, dg_du) = excess_length_grad(u, theta, element_offset(k, n) * delta);
        // entry = c * exp(j phi), phi = -wave_number (g_k - g_1):
        // d entry / dz = entry * j * dphi/dz.
        let jphi_theta = Complex64::new(0.0, -wave_number * (dg_dtheta - dg1_dtheta));
        let jphi_u = Complex64::new(0.0, -wave_number * (dg_du - dg1_du));
        d_theta.push(value[k - 1] * jphi_theta);
        d_u.push(value[k - 1] * jphi_u);
    }
    Ok((value, d_theta, d_u))
}

/// Draw the per-path parameters for one channel realisation.
///
/// Draw order is fixed and documented so a seed pins the realisation: paths
/// are processed in index order, and each path draws its base-station angle,
/// then its user-side angle, then its gain (the line-of-sight gain is
/// deterministic), then its distances (near paths only: the line-of-sight
/// path draws one shared distance, scattered paths draw the base-station
/// side before the user side). Far paths draw no distances.
///
/// Distance ranges are intersected with `(0, d_Rayleigh]` of the
/// base-station aperture so near paths stay in the spherical regime; an
/// empty intersection is a configuration error.
pub fn draw_path_params(cfg: &SystemConfig, rng: &mut SimRng) -> Result<Vec<PathParam>> {
    cfg.validate()?;
    let l = cfg.n_paths;
    let l_far = cfg.n_far();
    let d_rayleigh = rayleigh_distance(cfg.bs_aperture(), cfg.wavelength)?;
    let clip = |name: &str, range: (f64, f64)| -> Result<(f64, f64)> {
        let hi = range.1.min(d_rayleigh);
        if range.0 > hi {
            return Err(Error::InvalidInput(format!(
                "{name} ({}, {}) does not intersect (0, {d_rayleigh}] (the base-station \
                 Rayleigh distance); near-field paths cannot be drawn",
                range.0, range.1
            )));
        }
        Ok((range.0, hi))
    };
    let nlos_var = 1.0 / (1.0 + cfg.kappa);
    let los_amp = libm::sqrt((l as f64 - 1.0) * cfg.kappa / (1.0 + cfg.kappa));

    let mut paths = Vec::with_capacity(l);
    for idx in 0..l {
        let kind = if idx < l_far {
            PathKind::Far
        } else {
            PathKind::Near
        };
        let theta_r = rng.uniform(-1.0, 1.0);
        let theta_t = rng.uniform(-1.0, 1.0);
        let gain = if idx == 0 {
            Complex64::new(los_amp, 0.0)
        } else {
            rng.complex_gaussian(nlos_var)
        };
        let (r_r, r_t) = match kind {
            PathKind::Far => (None, None),
            PathKind::Near => {
                if idx == 0 {
                    let (lo, hi) = clip("ue_distance_range", cfg.ue_distance_range)?;
                    let r = rng.uniform(lo, hi);
                    (Some(r), Some(r))
                } else {
                    let (lo, hi) = clip("scatterer_distance_range", cfg.scatterer_distance_range)?;
                    let r_bs = rng.uniform(lo, hi);
                    let r_ue = rng.uniform(lo, hi);
                    (Some(r_bs), Some(r_ue))
                }
            }
        };
        paths.push(PathParam {
            kind,
            gain,
            theta_r,
            theta_t,
            r_r,
            r_t,
        });
    }
    Ok(paths)
}

fn side_steering(
    kind: PathKind,
    theta: f64,
    r: Option<f64>,
    n: usize,
    wavelength: f64,
) -> Result<Vec<Complex64>> {
    match kind {
        PathKind::Far => far_steering(theta, n),
        PathKind::Near => {
            let r = r.ok_or_else(|| {
                Error::InvalidInput("near-field path is missing its distance".into())
            })?;
            near_steering(r, theta, n, wavelength)
        }
    }
}

/// Assemble the channel matrix
/// `H = sqrt(n_b n_u / (L - 1)) * sum_l gain_l a_R(l) a_T(l)^H`
/// from drawn path parameters.
pub fn synthesize_channel(cfg: &SystemConfig, paths: &[PathParam]) -> Result<CMat> {
    cfg.validate()?;
    if paths.len() != cfg.n_paths {
        return Err(Error::DimensionMismatch(format!(
            "expected {} paths, got {}",
            cfg.n_paths,
            paths.len()
        )));
    }
    let scale = libm::sqrt((cfg.n_b * cfg.n_u) as f64 / (cfg.n_paths as f64 - 1.0));
    let mut h = CMat::zeros(cfg.n_b, cfg.n_u);
    for p in paths {
        let a_r = side_steering(p.kind, p.theta_r, p.r_r, cfg.n_b, cfg.wavelength)?;
        let a_t = side_steering(p.kind, p.theta_t, p.r_t, cfg.n_u, cfg.wavelength)?;
        let c = p.gain * scale;
        for j in 0..cfg.n_u {
            let tj = a_t[j].conj() * c;
            let col = h.col_mut(j);
            for i in 0..cfg.n_b {
                col[i] += a_r[i] * tj;
            }
        }
    }
    Ok(h)
}

/// Draw paths and synthesize the channel in one step.
pub fn realize_channel(cfg: &SystemConfig, rng: &mut SimRng) -> Result<ChannelRealization> {
    let paths = draw_path_params(cfg, rng)?;
    let h = synthesize_channel(cfg, &paths)?;
    Ok(ChannelRealization {
        h,
        paths,
        los_gain: libm::sqrt(cfg.kappa / (1.0 + cfg.kappa)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot_h, norm, norm_sq};
    use proptest::prelude::*;

    fn test_cfg() -> SystemConfig {
        SystemConfig {
            n_b: 32,
            n_u: 2,
            wavelength: 0.01,
            n_paths: 10,
            kappa: 10.0,
            gamma: 0.5,
            ue_distance_range: (1.0, 4.0),
            scatterer_distance_range: (1.0, 4.0),
        }
    }

    #[test]
    fn rayleigh_distance_matches_reference_aperture() {
        // 256 half-wavelength elements at lambda = 1 cm: D = 1.28 m.
        let d = rayleigh_distance(256.0 * 0.005, 0.01).unwrap();
        assert!((d - 327.68).abs() < 1e-10, "got {d}");
        assert_eq!(rayleigh_distance(0.0, 0.01).unwrap(), 0.0);
        assert!(rayleigh_distance(-1.0, 0.01).is_err());
        assert!(rayleigh_distance(1.0, 0.0).is_err());
    }

    #[test]
    fn far_steering_four_element_values() {
        let v = far_steering(0.5, 4).unwrap();
        // Entries 0.5 * exp(j pi 0.5 k) for k = 0..3: 0.5, 0.5j, -0.5, -0.5j.
        let want = [
            Complex64::new(0.5, 0.0),
            Complex64::new(0.0, 0.5),
            Complex64::new(-0.5, 0.0),
            Complex64::new(0.0, -0.5),
        ];
        for (got, want) in v.iter().zip(want.iter()) {
            assert!((got - want).norm() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn far_steering_broadside_is_constant() {
        let v = far_steering(0.0, 16).unwrap();
        for e in &v {
            assert!((e - Complex64::new(0.25, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn far_steering_rejects_out_of_range_angles() {
        assert!(far_steering(1.0001, 8).is_err());
        assert!(far_steering(f64::NAN, 8).is_err());
        assert!(far_steering(0.0, 0).is_err());
    }

    #[test]
    fn element_distance_centre_element_of_odd_array_sees_the_range() {
        // n odd: the middle element sits at the array centre (omega = 0).
        let r = 3.7;
        let d = element_distance(r, 0.83, 3, 5, 0.005).unwrap();
        assert!((d - r).abs() < 1e-12);
    }

    #[test]
    fn element_distance_matches_law_of_cosines() {
        let (r, theta, delta, n) = (2.0, 0.3, 0.005, 8usize);
        for k in 1..=n {
            let w = (2.0 * k as f64 - n as f64 - 1.0) * 0.5 * delta;
            let direct = (r * r + w * w - 2.0 * r * w * theta).sqrt();
            let d = element_distance(r, theta, k, n, delta).unwrap();
            assert!((d - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn element_distance_rejects_bad_arguments() {
        assert!(element_distance(0.0, 0.0, 1, 4, 0.005).is_err());
        assert!(element_distance(-2.0, 0.0, 1, 4, 0.005).is_err());
        assert!(element_distance(1.0, 1.5, 1, 4, 0.005).is_err());
        assert!(element_distance(1.0, 0.0, 0, 4, 0.005).is_err());
        assert!(element_distance(1.0, 0.0, 5, 4, 0.005).is_err());
        assert!(element_distance(1.0, 0.0, 1, 4, 0.0).is_err());
    }

    #[test]
    fn near_steering_agrees_with_naive_element_distances() {
        // Moderate range where the naive sqrt difference is still accurate.
        let (r, theta, n, lambda) = (3.0, -0.42, 16usize, 0.01);
        let delta = lambda / 2.0;
        let v = near_steering(r, theta, n, lambda).unwrap();
        let d1 = element_distance(r, theta, 1, n, delta).unwrap();
        let scale = 1.0 / (n as f64).sqrt();
        for k in 1..=n {
            let dk = element_distance(r, theta, k, n, delta).unwrap();
            let phase = -2.0 * core::f64::consts::PI / lambda * (dk - d1);
            let want = Complex64::new(phase.cos(), phase.sin()) * scale;
            assert!(
                (v[k - 1] - want).norm() < 1e-9,
                "entry {k}: {} vs naive {want}",
                v[k - 1]
            );
        }
    }

    #[test]
    fn near_steering_first_entry_is_real_positive() {
        let v = near_steering(1.3, 0.7, 12, 0.01).unwrap();
        assert!(v[0].im.abs() < 1e-15);
        assert!((v[0].re - 1.0 / (12f64).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn near_steering_far_limit_matches_far_steering() {
        let (n, lambda) = (32usize, 0.01);
        let d_rayleigh = rayleigh_distance(n as f64 * lambda / 2.0, lambda).unwrap();
        for &theta in &[-0.9, -0.3, 0.0, 0.55, 1.0] {
            let far = far_steering(theta, n).unwrap();
            let near = near_steering(1e6 * d_rayleigh, theta, n, lambda).unwrap();
            let inf = near_steering(f64::INFINITY, theta, n, lambda).unwrap();
            for k in 0..n {
                assert!(
                    (near[k] - far[k]).norm() < 1e-4,
                    "theta {theta}, entry {k}: {} vs {}",
                    near[k],
                    far[k]
                );
                assert!(
                    (inf[k] - far[k]).norm() < 1e-13,
                    "infinite range must equal the planar vector exactly"
                );
            }
        }
    }

    #[test]
    fn near_steering_rejects_nonpositive_range() {
        assert!(near_steering(0.0, 0.0, 8, 0.01).is_err());
        assert!(near_steering(-1.0, 0.0, 8, 0.01).is_err());
        assert!(near_steering_inv_dist(-0.1, 0.0, 8, 0.01).is_err());
        assert!(near_steering(1.0, 0.0, 8, 0.0).is_err());
    }

    #[test]
    fn near_steering_derivative_far_limits() {
        // At u = 0 the analytic derivatives must reduce to the planar forms:
        // d entry / d theta = entry * (+j pi (k-1)) (element-1 reference),
        // d entry / d u = entry * (-j 2 pi / lambda) * (w_k^2 - w_1^2) delta^2 (1 - theta^2) / 2.
        let (n, lambda, theta) = (8usize, 0.01, 0.6);
        let delta = lambda / 2.0;
        let (v, dth, du) = near_steering_derivatives(0.0, theta, n, lambda).unwrap();
        for k in 1..=n {
            let want_th = v[k - 1] * Complex64::new(0.0, core::f64::consts::PI * (k as f64 - 1.0));
            assert!(
                (dth[k - 1] - want_th).norm() < 1e-10,
                "theta derivative far limit, entry {k}"
            );
            let w_k = (2.0 * k as f64 - n as f64 - 1.0) * 0.5 * delta;
            let w_1 = (2.0 - n as f64 - 1.0) * 0.5 * delta;
            let coeff = -(2.0 * core::f64::consts::PI / lambda)
                * ((w_k * w_k - w_1 * w_1) * (1.0 - theta * theta) / 2.0);
            let want_u = v[k - 1] * Complex64::new(0.0, coeff);
            assert!(
                (du[k - 1] - want_u).norm() < 1e-10,
                "u derivative far limit, entry {k}"
            );
        }
    }

    #[test]
    fn draw_respects_kind_layout_and_ranges() {
        let cfg = test_cfg();
        let mut rng = SimRng::from_seed(5);
        let paths = draw_path_params(&cfg, &mut rng).unwrap();
        assert_eq!(paths.len(), 10);
        let d_rayleigh = rayleigh_distance(cfg.bs_aperture(), cfg.wavelength).unwrap();
        for (i, p) in paths.iter().enumerate() {
            let want_kind = if i < 5 { PathKind::Far } else { PathKind::Near };
            assert_eq!(p.kind, want_kind, "path {i}");
            assert!(p.theta_r.abs() <= 1.0 && p.theta_t.abs() <= 1.0);
            match p.kind {
                PathKind::Far => {
                    assert!(
                        p.r_r.is_none() && p.r_t.is_none(),
                        "far path {i} has a distance"
                    )
                }
                PathKind::Near => {
                    for r in [p.r_r.unwrap(), p.r_t.unwrap()] {
                        assert!(r >= 1.0 && r <= 4.0_f64.min(d_rayleigh), "path {i} r = {r}");
                    }
                }
            }
        }
        // Line-of-sight gain is deterministic: sqrt((L-1) kappa / (1 + kappa)).
        let want = ((10.0 - 1.0) * 10.0 / 11.0_f64).sqrt();
        assert!((paths[0].gain.re - want).abs() < 1e-12);
        assert_eq!(paths[0].gain.im, 0.0);
    }

    #[test]
    fn draw_is_deterministic_per_seed() {
        let cfg = test_cfg();
        let a = draw_path_params(&cfg, &mut SimRng::from_seed(77)).unwrap();
        let b = draw_path_params(&cfg, &mut SimRng::from_seed(77)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gamma_one_yields_no_near_paths_and_gamma_zero_no_far() {
        let mut cfg = test_cfg();
        cfg.gamma = 1.0;
        let paths = draw_path_params(&cfg, &mut SimRng::from_seed(3)).unwrap();
        assert!(paths.iter().all(|p| p.kind == PathKind::Far));
        cfg.gamma = 0.0;
        let paths = draw_path_params(&cfg, &mut SimRng::from_seed(3)).unwrap();
        assert!(paths.iter().all(|p| p.kind == PathKind::Near));
        // A near line-of-sight path shares one distance on both sides.
        assert_eq!(paths[0].r_r, paths[0].r_t);
    }

    #[test]
    fn empty_distance_intersection_is_a_config_error() {
        let mut cfg = test_cfg();
        // d_Rayleigh for 32 elements at 1 cm is 5.12 m; a range beyond it is empty.
        cfg.scatterer_distance_range = (6.0, 9.0);
        let err = draw_path_params(&cfg, &mut SimRng::from_seed(1)).unwrap_err();
        match err {
            Error::InvalidInput(msg) => {
                assert!(msg.contains("scatterer_distance_range"), "message: {msg}")
            }
            other => panic!("expected InvalidInput, got {other:?}"),
        }
    }

    #[test]
    fn synthesize_matches_manual_two_path_sum() {
        let cfg = SystemConfig {
            n_b: 2,
            n_u: 1,
            wavelength: 0.01,
            n_paths: 2,
            kappa: 1.0,
            gamma: 1.0,
            ue_distance_range: (1.0, 2.0),
            scatterer_distance_range: (1.0, 2.0),
        };
        let paths = vec![
            PathParam {
                kind: PathKind::Far,
                gain: Complex64::new(0.8, 0.0),
                theta_r: 0.5,
                theta_t: 0.0,
                r_r: None,
                r_t: None,
            },
            PathParam {
                kind: PathKind::Far,
                gain: Complex64::new(-0.1, 0.4),
                theta_r: -0.25,
                theta_t: 0.0,
                r_r: None,
                r_t: None,
            },
        ];
        let h = synthesize_channel(&cfg, &paths).unwrap();
        let scale = (2.0_f64 / 1.0).sqrt();
        let mut want = [Complex64::ZERO; 2];
        for p in &paths {
            let a_r = far_steering(p.theta_r, 2).unwrap();
            let a_t = far_steering(p.theta_t, 1).unwrap();
            for i in 0..2 {
                want[i] += p.gain * scale * a_r[i] * a_t[0].conj();
            }
        }
        for i in 0..2 {
            assert!((h.get(i, 0) - want[i]).norm() < 1e-13);
        }
    }

    #[test]
    fn average_channel_energy_is_antenna_product() {
        // E ||H||_F^2 = n_b n_u under the gain normalisation.
        let cfg = test_cfg();
        let trials = 2000;
        let mut acc = 0.0;
        for t in 0..trials {
            let mut rng = SimRng::from_seed(1000 + t);
            let real = realize_channel(&cfg, &mut rng).unwrap();
            acc += real.h.norm_sq();
        }
        let mean = acc / trials as f64;
        let want = (cfg.n_b * cfg.n_u) as f64;
        assert!(
            (mean - want).abs() / want < 0.05,
            "mean energy {mean}, expected about {want}"
        );
    }

    #[test]
    fn validate_rejects_each_bad_field() {
        let good = test_cfg();
        let mut c = good.clone();
        c.n_b = 0;
        assert!(c.validate().is_err());
        let mut c = good.clone();
        c.n_paths = 1;
        assert!(c.validate().is_err());
        let mut c = good.clone();
        c.kappa = -0.1;
        assert!(c.validate().is_err());
        let mut c = good.clone();
        c.gamma = 1.2;
        assert!(c.validate().is_err());
        let mut c = good.clone();
        c.ue_distance_range = (0.0, 1.0);
        assert!(c.validate().is_err());
        let mut c = good;
        c.scatterer_distance_range = (3.0, 2.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn steering_vectors_are_unit_norm_spot_checks() {
        for &n in &[1usize, 2, 7, 64] {
            let f = far_steering(0.37, n).unwrap();
            assert!((norm(&f) - 1.0).abs() < 1e-12);
            let v = near_steering(2.5, -0.6, n, 0.01).unwrap();
            assert!((norm(&v) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn distinct_far_angles_on_the_dft_grid_are_orthogonal() {
        let n = 16;
        let a = far_steering(2.0 / n as f64, n).unwrap();
        let b = far_steering(6.0 / n as f64, n).unwrap();
        assert!(dot_h(&a, &b).norm() < 1e-12);
        assert!((norm_sq(&a) - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn prop_far_steering_unit_norm(theta in -1.0f64..1.0, n in 1usize..96) {
            let v = far_steering(theta, n).unwrap();
            prop_assert!((norm(&v) - 1.0).abs() < 1e-10);
        }

        #[test]
        fn prop_near_steering_unit_norm_and_far_limit_monotone(
            theta in -0.999f64..0.999,
            n in 1usize..48,
            r in 0.05f64..100.0,
        ) {
            let v = near_steering(r, theta, n, 0.01).unwrap();
            prop_assert!((norm(&v) - 1.0).abs() < 1e-10);
            prop_assert!(v[0].im.abs() < 1e-12);
        }
    }
}
