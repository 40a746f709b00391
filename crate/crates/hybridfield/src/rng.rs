//! Deterministic random number generation.
//!
//! Every stochastic quantity in the simulator flows from an explicit 64-bit
//! seed through a ChaCha stream generator. The uniform and Gaussian mappings
//! are implemented here rather than taken from a distributions crate so the
//! exact draw sequence is pinned by this crate alone: a (seed, configuration)
//! pair fully determines every byte of simulator output.

use num_complex::Complex64;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded generator with the simulator's draw conventions.
pub struct SimRng {
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn from_seed(seed: u64) -> Self {
        SimRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Next raw 64-bit word.
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[0, 1)` using the top 53 bits of one 64-bit word.
    pub fn uniform01(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        (self.next_u64() >> 11) as f64 * SCALE
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform01()
    }

    /// One standard-normal pair via the Box-Muller transform.
    pub fn standard_normal_pair(&mut self) -> (f64, f64) {
        // 1 - u in (0, 1] keeps the logarithm finite.
        let u = 1.0 - self.uniform01();
        let v = self.uniform01();
        let radius = libm::sqrt(-2.0 * libm::log(u));
        let angle = 2.0 * core::f64::consts::PI * v;
        (radius * libm::cos(angle), radius * libm::sin(angle))
    }

    /// Circularly symmetric complex Gaussian with total variance `var`
    /// (real and imaginary parts each carry `var / 2`). Consumes exactly one
    /// normal pair per call.
    pub fn complex_gaussian(&mut self, var: f64) -> Complex64 {
        debug_assert!(var >= 0.0);
        let (re, im) = self.standard_normal_pair();
        let s = libm::sqrt(var * 0.5);
        Complex64::new(re * s, im * s)
    }
}

/// SplitMix64 step, the standard finaliser used to decorrelate seed material.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a per-trial seed from the master seed, the sweep-axis value and the
/// trial index. Feeding each component through a SplitMix64 chain keeps
/// nearby (value, trial) pairs statistically unrelated while remaining a pure
/// function of its inputs, so every trial can be reproduced in isolation.
pub fn derive_seed(master: u64, axis_bits: u64, trial: u64) -> u64 {
    let mut state = master;
    let a = splitmix64(&mut state);
    state ^= axis_bits.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let b = splitmix64(&mut state);
    state ^= trial.wrapping_add(a);
    let c = splitmix64(&mut state);
    b ^ c.rotate_left(17)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_reproduces_the_sequence() {
        let mut a = SimRng::from_seed(42);
        let mut b = SimRng::from_seed(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = SimRng::from_seed(43);
        let first: alloc::vec::Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        let mut d = SimRng::from_seed(42);
        let other: alloc::vec::Vec<u64> = (0..8).map(|_| d.next_u64()).collect();
        assert_ne!(first, other, "different seeds should diverge");
    }

    #[test]
    fn uniform01_stays_in_unit_interval_with_plausible_mean() {
        let mut rng = SimRng::from_seed(7);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let u = rng.uniform01();
            assert!((0.0..1.0).contains(&u));
            sum += u;
        }
        let mean = sum / n as f64;
        assert!(
            (mean - 0.5).abs() < 0.01,
            "uniform mean {mean} far from 0.5"
        );
    }

    #[test]
    fn uniform_respects_bounds() {
        let mut rng = SimRng::from_seed(11);
        for _ in 0..1000 {
            let x = rng.uniform(-3.0, 5.0);
            assert!((-3.0..5.0).contains(&x));
        }
    }

    #[test]
    fn complex_gaussian_moments_match_requested_variance() {
        let mut rng = SimRng::from_seed(1234);
        let n = 200_000;
        let var = 0.4;
        let mut mean = Complex64::ZERO;
        let mut second = 0.0;
        for _ in 0..n {
            let z = rng.complex_gaussian(var);
            mean += z;
            second += z.norm_sqr();
        }
        mean /= n as f64;
        second /= n as f64;
        assert!(
            mean.norm() < 0.01,
            "complex mean {mean} should be near zero"
        );
        assert!(
            (second - var).abs() / var < 0.02,
            "E|z|^2 = {second}, requested {var}"
        );
    }

    #[test]
    fn gaussian_parts_are_uncorrelated_and_balanced() {
        let mut rng = SimRng::from_seed(99);
        let n = 200_000;
        let (mut vre, mut vim, mut cross) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let z = rng.complex_gaussian(2.0);
            vre += z.re * z.re;
            vim += z.im * z.im;
            cross += z.re * z.im;
        }
        vre /= n as f64;
        vim /= n as f64;
        cross /= n as f64;
        assert!((vre - 1.0).abs() < 0.03, "re variance {vre}");
        assert!((vim - 1.0).abs() < 0.03, "im variance {vim}");
        assert!(cross.abs() < 0.02, "re/im correlation {cross}");
    }

    #[test]
    fn derive_seed_is_stable_and_sensitive_to_every_input() {
        let base = derive_seed(1, 2, 3);
        assert_eq!(base, derive_seed(1, 2, 3), "derivation must be pure");
        assert_ne!(base, derive_seed(2, 2, 3));
        assert_ne!(base, derive_seed(1, 3, 3));
        assert_ne!(base, derive_seed(1, 2, 4));
    }

    #[test]
    fn derive_seed_has_no_obvious_collisions_over_a_grid() {
        use std::collections::HashSet;
        let mut seen = HashSet::new();
        for master in 0..8u64 {
            for axis in 0..16u64 {
                for trial in 0..32u64 {
                    seen.insert(derive_seed(master, axis.wrapping_mul(0x10001), trial));
                }
            }
        }
        assert_eq!(seen.len(), 8 * 16 * 32, "grid of derived seeds collided");
    }
}
