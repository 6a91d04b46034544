//! Closed-form representation kernels.
//!
//! For a cylindrical functional `phi(W(k))` with a unit-norm direction `k`,
//! the predictable integrand at time `s` pairs the derivative measure of
//! `phi` against
//!
//! ```text
//! K(x, s) = k(s) * exp(-x^2 / (2 tau(s)^2)) / (sqrt(2 pi) tau(s)),
//! tau(s) = || k restricted to ]s, T] ||_2,
//! ```
//!
//! and for the running maximum against the half-normal density of the
//! maximum over the remaining time. Exponents below the underflow guard
//! evaluate to exactly 0, and `K(., s) = 0` whenever `k(s) = 0` or the tail
//! norm vanishes (the representative convention at the horizon).

use crate::error::{ensure_finite, Error, Result};
use crate::step::StepFunction;

pub const SQRT_2PI: f64 = 2.5066282746310002;

/// Exponents below this evaluate to an exact zero.
const EXP_UNDERFLOW: f64 = -700.0;

pub fn guarded_exp(exponent: f64) -> f64 {
    if exponent < EXP_UNDERFLOW {
        0.0
    } else {
        exponent.exp()
    }
}

/// Standard normal density `rho(x)`.
pub fn std_normal_density(x: f64) -> f64 {
    guarded_exp(-0.5 * x * x) / SQRT_2PI
}

/// Standard normal CDF via `erfc` (accurate in both tails).
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Density of the maximum of a Brownian motion over a window of *time
/// length* `tau` started at 0, evaluated at `x`:
/// `m_tau(x) = 2 exp(-x^2/(2 tau)) / sqrt(2 pi tau)` for `x > 0`, else 0.
pub fn max_density(x: f64, tau: f64) -> Result<f64> {
    ensure_finite(x, "max_density argument")?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("remaining time must be positive, got {tau}")));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * guarded_exp(-x * x / (2.0 * tau)) / (SQRT_2PI * tau.sqrt()))
}

/// A unit-L^2-norm step direction together with precomputed tail masses, the
/// data defining the cylindrical representation kernel.
#[derive(Clone, Debug)]
pub struct NormalizedDirection {
    k: StepFunction,
    /// `int_{b_j}^{inf} k^2` at each breakpoint.
    suffix_sq: Vec<f64>,
}

impl NormalizedDirection {
    /// Wraps `k`, requiring `| ||k||_2 - 1 | <= 1e-12`.
    pub fn new(k: StepFunction) -> Result<Self> {
        let norm = k.l2_norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "direction must have unit L2 norm, got {norm}"
            )));
        }
        let mut suffix_sq = vec![0.0; k.breakpoints().len()];
        for j in (0..k.levels().len()).rev() {
            let gap = k.breakpoints()[j + 1] - k.breakpoints()[j];
            suffix_sq[j] = suffix_sq[j + 1] + k.levels()[j] * k.levels()[j] * gap;
        }
        Ok(NormalizedDirection { k, suffix_sq })
    }

    /// Rescales an arbitrary nonzero `k` to unit norm first.
    pub fn normalized(k: StepFunction) -> Result<Self> {
        let norm = k.l2_norm();
        if norm == 0.0 {
            return Err(Error::invalid("cannot normalize the zero direction"));
        }
        Self::new(k.scale(1.0 / norm))
    }

    pub fn k(&self) -> &StepFunction {
        &self.k
    }

    /// `tau(s)^2 = int_s^inf k^2`, exact on partial intervals.
    pub fn tail_norm_sq(&self, s: f64) -> f64 {
        let bps = self.k.breakpoints();
        if bps.is_empty() || s >= *bps.last().unwrap() {
            return 0.0;
        }
        if s <= bps[0] {
            return self.suffix_sq[0];
        }
        let j = bps.partition_point(|&b| b <= s) - 1;
        let lev = self.k.levels()[j];
        self.suffix_sq[j + 1] + lev * lev * (bps[j + 1] - s)
    }

    pub fn tail_norm(&self, s: f64) -> f64 {
        self.tail_norm_sq(s).sqrt()
    }

    /// The representation kernel `K(x, s)`; zero when `k(s) = 0` or when the
    /// tail norm vanishes.
    pub fn kernel(&self, x: f64, s: f64) -> f64 {
        let ks = self.k.value_right(s);
        if ks == 0.0 {
            return 0.0;
        }
        let tau_sq = self.tail_norm_sq(s);
        if tau_sq == 0.0 {
            return 0.0;
        }
        ks * guarded_exp(-0.5 * x * x / tau_sq) / (SQRT_2PI * tau_sq.sqrt())
    }

    /// Level-set weight `xi(x) = rho(x) E[ |grad W(k)|_2 | W(k) = x ]`; the
    /// gradient has constant norm `||k||_2 = 1`, so this is just `rho(x)`.
    pub fn xi(&self, x: f64) -> f64 {
        std_normal_density(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::gl16_composite;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn digital_direction(t: f64) -> NormalizedDirection {
        NormalizedDirection::normalized(StepFunction::indicator(0.0, t).unwrap()).unwrap()
    }

    #[test]
    fn normal_density_and_cdf_match_references() {
        assert_relative_eq!(std_normal_density(0.0), 0.3989422804014327, epsilon = 1e-15);
        assert_relative_eq!(std_normal_density(1.0), 0.24197072451914337, epsilon = 1e-15);
        assert_relative_eq!(std_normal_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(std_normal_cdf(1.0), 0.8413447460685429, epsilon = 1e-14);
        // mass check by quadrature
        let mass = gl16_composite(std_normal_density, -8.0, 8.0, 32);
        assert_relative_eq!(mass, 1.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn density_is_symmetric_and_bounded(x in -20.0f64..20.0) {
            prop_assert!((std_normal_density(x) - std_normal_density(-x)).abs() < 1e-300);
            prop_assert!(std_normal_density(x) <= std_normal_density(0.0));
        }
    }

    #[test]
    fn unit_norm_is_enforced() {
        let k = StepFunction::indicator(0.0, 4.0).unwrap();
        assert!(NormalizedDirection::new(k.clone()).is_err());
        let dir = NormalizedDirection::normalized(k).unwrap();
        assert_relative_eq!(dir.k().l2_norm(), 1.0, epsilon = 1e-14);
        assert!(NormalizedDirection::normalized(StepFunction::zero()).is_err());
    }

    #[test]
    fn tail_norm_matches_closed_form() {
        let dir = digital_direction(1.0);
        assert_relative_eq!(dir.tail_norm(0.0), 1.0, epsilon = 1e-14);
        assert_relative_eq!(dir.tail_norm(0.75), 0.5, epsilon = 1e-14);
        assert_eq!(dir.tail_norm(1.0), 0.0);
        assert_eq!(dir.tail_norm(2.0), 0.0);
    }

    #[test]
    fn kernel_values_match_hand_computation() {
        let dir = digital_direction(1.0);
        // K(0, 0) = 1/sqrt(2 pi)
        assert_relative_eq!(dir.kernel(0.0, 0.0), 0.3989422804014327, epsilon = 1e-14);
        // tau(0.75) = 1/2 -> K(0, 0.75) = 2/sqrt(2 pi)
        assert_relative_eq!(dir.kernel(0.0, 0.75), 0.7978845608028654, epsilon = 1e-14);
        // outside the support of k the kernel vanishes identically
        let dir2 = NormalizedDirection::normalized(
            StepFunction::indicator(0.0, 0.5).unwrap(),
        )
        .unwrap();
        assert_eq!(dir2.kernel(0.3, 0.7), 0.0);
    }

    #[test]
    fn kernel_mass_in_x_equals_direction_level() {
        let dir = digital_direction(1.0);
        for s in [0.0, 0.3, 0.9] {
            let mass = gl16_composite(|x| dir.kernel(x, s), -9.0, 9.0, 40);
            assert_relative_eq!(mass, dir.k().value_right(s), epsilon = 1e-10);
        }
    }

    #[test]
    fn digital_kernel_reproduces_time_changed_gaussian() {
        // with k = 1_{]0,t]}/sqrt(t): K(-w/sqrt(t), s) =
        // exp(-w^2/(2(t-s))) / sqrt(2 pi (t-s)) for s < t
        let t = 0.8;
        let dir = digital_direction(t);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..20 {
            let s = rng.random::<f64>() * t * 0.999;
            let w: f64 = rng.sample::<f64, _>(StandardNormal) * s.sqrt();
            let via_kernel = dir.kernel(-w / t.sqrt(), s);
            let closed = (-w * w / (2.0 * (t - s))).exp() / (SQRT_2PI * (t - s).sqrt());
            assert_relative_eq!(via_kernel, closed, epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn max_density_references() {
        assert_eq!(max_density(-0.5, 1.0).unwrap(), 0.0);
        assert_eq!(max_density(0.0, 1.0).unwrap(), 0.0);
        assert_relative_eq!(max_density(1.0, 1.0).unwrap(), 0.4839414490382867, epsilon = 1e-14);
        assert!(max_density(1.0, 0.0).is_err());
        assert!(max_density(1.0, -1.0).is_err());
        for tau in [0.1f64, 1.0, 10.0] {
            let hi = 10.0 * tau.sqrt().max(1.0);
            let mass = gl16_composite(|x| max_density(x, tau).unwrap(), 0.0, hi, 64);
            assert_relative_eq!(mass, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn xi_matches_kernel_regression_oracle() {
        // xi(x) = rho(x) E[|grad g|_2 | g = x] with |grad g|_2 = 1; estimate
        // the product density*regression directly by a smoothing kernel:
        // (1/(N b)) sum rho((g_i - x)/b) |grad g_i|_2  ->  xi(x)
        let dir = digital_direction(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 1_000_000usize;
        let b = 0.05;
        let mut at0 = 0.0;
        let mut at1 = 0.0;
        for _ in 0..n {
            let g: f64 = rng.sample(StandardNormal);
            let grad_norm = 1.0;
            at0 += std_normal_density(g / b) * grad_norm;
            at1 += std_normal_density((g - 1.0) / b) * grad_norm;
        }
        at0 /= n as f64 * b;
        at1 /= n as f64 * b;
        assert!((at0 - dir.xi(0.0)).abs() < 0.01, "xi(0) est {at0}");
        assert!((at1 - dir.xi(1.0)).abs() < 0.01, "xi(1) est {at1}");
        assert!(dir.xi(0.7) <= std_normal_density(0.0));
    }
}
