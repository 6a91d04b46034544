//! Distributional chain rule for BV functions of a Wiener integral.
//!
//! For `g = W(k)` with `||k||_2 = 1`, `phi` BV, `u` a smooth cylindrical
//! functional and `h` a Cameron-Martin direction, the pairing identity reads
//!
//! ```text
//! E[phi(g) (u W(h') - d_h u)] = <k, h'>_2 int rho(x) E[u | g = x] Dphi(dx).
//! ```
//!
//! The left side is plain Monte Carlo over paths. The right side needs no
//! paths at all: conditionally on `g = x`, the increments of `u` are jointly
//! Gaussian with mean `c x` and covariance `D - c c^T` (`c_i = int k` over
//! the increment, `D` the diagonal of interval lengths), so `E[u | g = x]`
//! is sampled exactly and the measure pairing is quadrature. A singular
//! conditional covariance - `g` almost surely determined by `u`'s increments
//! - is refused as a conditioning error rather than silently regularized.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{ensure_finite, Error, Result};
use crate::functional::{skorokhod_term, Cylindrical, Direction};
use crate::grid::{RngStream, ALIGN_TOL, LANE_CONDITIONAL};
use crate::kernels::{std_normal_density, NormalizedDirection};
use crate::mc::{map_paths, McConfig};
use crate::measure::BvFunction;
use crate::report::{mean_stderr, Estimate, IdentityReport};

/// Exact conditional law of a block of Brownian increments given `W(k) = x`.
#[derive(Debug)]
pub struct GaussianConditioner {
    /// `c_i = Cov(D_i, g) = int k` over the i-th increment interval.
    coeffs: Vec<f64>,
    /// Lower Cholesky factor of `D - c c^T`.
    chol: DMatrix<f64>,
}

impl GaussianConditioner {
    /// `times` are the increment boundaries of the conditioned block
    /// (strictly increasing, nonnegative).
    pub fn new(dir: &NormalizedDirection, times: &[f64]) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::invalid("conditioning needs at least one increment"));
        }
        let m = times.len() - 1;
        let mut coeffs = Vec::with_capacity(m);
        let mut gaps = Vec::with_capacity(m);
        for w in times.windows(2) {
            if !(w[0] < w[1]) || w[0] < 0.0 {
                return Err(Error::invalid("increment boundaries must be increasing and nonnegative"));
            }
            coeffs.push(dir.k().integral_over(w[0], w[1]));
            gaps.push(w[1] - w[0]);
        }
        let sigma = DMatrix::from_fn(m, m, |i, j| {
            let diag = if i == j { gaps[i] } else { 0.0 };
            diag - coeffs[i] * coeffs[j]
        });
        let chol = sigma.cholesky().ok_or_else(|| {
            Error::Conditioning(format!(
                "conditional covariance of {m} increments given the Wiener integral is singular \
                 (the integral is determined by the increments)"
            ))
        })?;
        Ok(GaussianConditioner { coeffs, chol: chol.l() })
    }

    pub fn conditional_mean(&self, x: f64) -> Vec<f64> {
        self.coeffs.iter().map(|c| c * x).collect()
    }

    /// One exact draw of the increments given `W(k) = x`.
    pub fn sample<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> Vec<f64> {
        let m = self.coeffs.len();
        let z: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mut out = self.conditional_mean(x);
        for (i, out_i) in out.iter_mut().enumerate() {
            for (j, zj) in z.iter().enumerate().take(i + 1) {
                *out_i += self.chol[(i, j)] * zj;
            }
        }
        out
    }
}

/// `E[u | W(k) = x]` by exact conditional sampling (`draws` draws from the
/// given stream). Constant functionals short-circuit to their value - no
/// conditioning is attempted, so the block `[0, T]` against a full-support
/// `k` stays usable for `u = const` even though its conditional covariance
/// is singular.
pub fn conditional_expectation(
    dir: &NormalizedDirection,
    u: &Cylindrical,
    x: f64,
    draws: usize,
    stream: &RngStream,
) -> Result<Estimate> {
    ensure_finite(x, "conditioning level")?;
    if let Some(c) = u.constant_value() {
        return Ok(Estimate::exact(c));
    }
    if draws < 2 {
        return Err(Error::invalid("conditional sampling needs at least two draws"));
    }
    let cond = GaussianConditioner::new(dir, u.times())?;
    let mut rng = stream.substream(LANE_CONDITIONAL);
    let vals: Vec<f64> = (0..draws)
        .map(|_| u.eval_increments(&cond.sample(x, &mut rng)))
        .collect::<Result<_>>()?;
    Ok(mean_stderr(&vals))
}

/// Monte Carlo side of the level-set pairing: `E[1_{g > x} (u W(h') - d_h u)]`.
pub fn lhs_levelset(
    dir: &NormalizedDirection,
    u: &Cylindrical,
    h: &Direction,
    x: f64,
    mc: &McConfig,
) -> Result<Estimate> {
    Ok(lhs_levelset_scan(dir, u, h, &[x], mc)?.pop().unwrap())
}

/// [`lhs_levelset`] at several levels over one shared set of paths, so the
/// scan exposes the x-continuity of the pairing without fresh noise per
/// level.
pub fn lhs_levelset_scan(
    dir: &NormalizedDirection,
    u: &Cylindrical,
    h: &Direction,
    xs: &[f64],
    mc: &McConfig,
) -> Result<Vec<Estimate>> {
    let terms = map_paths(mc, |_, path| {
        Ok((path.wiener_integral(dir.k())?, skorokhod_term(u, h, path)?))
    })?;
    Ok(xs
        .iter()
        .map(|&x| {
            let vals: Vec<f64> =
                terms.iter().map(|&(g, s)| if g > x { s } else { 0.0 }).collect();
            mean_stderr(&vals)
        })
        .collect())
}

/// Closed-form side of the level-set pairing:
/// `rho(x) <k, h'>_2 E[u | g = x]`, with the conditional expectation sampled
/// exactly (`draws` draws seeded from `seed`).
pub fn rhs_levelset(
    dir: &NormalizedDirection,
    u: &Cylindrical,
    h: &Direction,
    x: f64,
    draws: usize,
    seed: u64,
) -> Result<Estimate> {
    let ip = dir.k().inner(h.hprime());
    let ce = conditional_expectation(dir, u, x, draws, &RngStream::new(seed, 0))?;
    let scale = std_normal_density(x) * ip;
    Ok(Estimate { value: scale * ce.value, stderr: scale.abs() * ce.stderr })
}

/// Both sides of the pairing for a general BV `phi`, plus the deterministic
/// quadrature allowance of the measure side.
fn pairing_sides(
    dir: &NormalizedDirection,
    phi: &BvFunction,
    u: &Cylindrical,
    h: &Direction,
    mc: &McConfig,
) -> Result<(Estimate, Estimate, f64)> {
    let vals = map_paths(mc, |_, path| {
        let g = path.wiener_integral(dir.k())?;
        Ok(phi.eval(g) * skorokhod_term(u, h, path)?)
    })?;
    let mc_side = mean_stderr(&vals);

    let ip = dir.k().inner(h.hprime());
    let mut value = 0.0;
    let mut var = 0.0;
    for (node, &(x, mass)) in phi.derivative().quadrature_nodes().iter().enumerate() {
        let stream = RngStream::new(mc.seed, node as u64);
        let ce = conditional_expectation(dir, u, x, mc.paths, &stream)?;
        let w = mass * std_normal_density(x) * ip;
        value += w * ce.value;
        var += (w * ce.stderr) * (w * ce.stderr);
    }
    let quad_side = Estimate { value, stderr: var.sqrt() };
    // GL16 on the smooth density integrand leaves far less than this
    let budget = 1e-8 * (1.0 + value.abs());
    Ok((mc_side, quad_side, budget))
}

/// Two-sided chain-rule check for a BV `phi`, with the context needed to
/// audit it: the Cameron-Martin inner product, the weight ceiling
/// `c_M = sup rho over [-M, M]` (`M` bounding the measure's support), the
/// total variation, and the resulting ceiling on the pairing - valid when
/// `|u| <= 1`, which the supplied test functionals satisfy.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ChainReport {
    pub identity: IdentityReport,
    pub inner_product: f64,
    pub c_m: f64,
    pub tv_phi: f64,
    pub pairing_bound: f64,
    pub bound_ok: bool,
}

/// Checks `E[phi(g) d*_h u] = <k, h'> int rho E[u | g = x] Dphi(dx)` at
/// `3 sigma` plus the quadrature budget. The Monte Carlo side runs on
/// `mc.paths` paths; each measure node gets the same number of conditional
/// draws from its own stream.
pub fn chain_rule_check_phi(
    dir: &NormalizedDirection,
    phi: &BvFunction,
    u: &Cylindrical,
    h: &Direction,
    mc: &McConfig,
) -> Result<ChainReport> {
    let (mc_side, quad_side, budget) = pairing_sides(dir, phi, u, h, mc)?;
    let stderr_diff = (mc_side.stderr.powi(2) + quad_side.stderr.powi(2)).sqrt();
    let identity = IdentityReport::from_sides(mc_side, quad_side, stderr_diff, budget);
    let ip = dir.k().inner(h.hprime());
    let c_m = std_normal_density(0.0); // [-M, M] always contains the mode
    let tv_phi = phi.derivative().total_variation();
    let pairing_bound = c_m * tv_phi * ip.abs();
    let bound_ok = quad_side.value.abs() <= pairing_bound + 3.0 * quad_side.stderr + budget;
    Ok(ChainReport { identity, inner_product: ip, c_m, tv_phi, pairing_bound, bound_ok })
}

/// Same identity with the roles swapped: the quadrature pairing is the
/// *definition* side of the distributional derivative, the Monte Carlo
/// expectation the adjoint side it must reproduce.
pub fn bv_defining_identity_check(
    dir: &NormalizedDirection,
    phi: &BvFunction,
    u: &Cylindrical,
    h: &Direction,
    mc: &McConfig,
) -> Result<IdentityReport> {
    let (mc_side, quad_side, budget) = pairing_sides(dir, phi, u, h, mc)?;
    let stderr_diff = (mc_side.stderr.powi(2) + quad_side.stderr.powi(2)).sqrt();
    Ok(IdentityReport::from_sides(quad_side, mc_side, stderr_diff, budget))
}

/// One probe time of a disintegration check.
#[derive(Clone, Debug, Serialize)]
pub struct DisintegratedRow {
    pub r: f64,
    pub direct: f64,
    pub direct_stderr: f64,
    pub windows: Vec<WindowCheck>,
}

/// One shrinking window at a probe time.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct WindowCheck {
    pub delta: f64,
    pub value: f64,
    pub stderr: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DisintegratedReport {
    pub rows: Vec<DisintegratedRow>,
    pub pass: bool,
}

/// Disintegration in time: the pairing density `U(x, r) = rho(x) k(r)
/// E[u | g = x]` integrated against `Dphi` must match the windowed pairings
/// `E[phi(g) d*_{h_delta} u]` with `h_delta' = 1_{]r, r+delta]} / delta`,
/// exactly (up to noise) whenever the window sits inside one level interval
/// of `k`. `u` must be measurable up to `s <= r`, so the windows probe only
/// the direction's future.
pub fn disintegrated_check(
    dir: &NormalizedDirection,
    phi: &BvFunction,
    u: &Cylindrical,
    s: f64,
    r_probes: &[f64],
    deltas: &[f64],
    mc: &McConfig,
) -> Result<DisintegratedReport> {
    let horizon = mc.grid.horizon();
    if u.times().last().copied().unwrap_or(0.0) > s + ALIGN_TOL {
        return Err(Error::invalid(format!(
            "the conditioned functional must be measurable by s = {s}"
        )));
    }
    if r_probes.is_empty() || deltas.is_empty() {
        return Err(Error::invalid("need at least one probe time and one window"));
    }
    for &r in r_probes {
        if r < s - ALIGN_TOL || r >= horizon {
            return Err(Error::invalid(format!("probe time {r} must lie in [s, horizon)")));
        }
    }

    // pairing density, sans the k(r) factor: shared by all probes
    let mut base = 0.0;
    let mut base_var = 0.0;
    for (node, &(x, mass)) in phi.derivative().quadrature_nodes().iter().enumerate() {
        let stream = RngStream::new(mc.seed, node as u64);
        let ce = conditional_expectation(dir, u, x, mc.paths, &stream)?;
        let w = mass * std_normal_density(x);
        base += w * ce.value;
        base_var += (w * ce.stderr) * (w * ce.stderr);
    }
    let base_stderr = base_var.sqrt();
    let budget = 1e-8 * (1.0 + base.abs());

    let mut rows = Vec::with_capacity(r_probes.len());
    let mut all_pass = true;
    for &r in r_probes {
        let kr = dir.k().value_right(r);
        let direct = kr * base;
        let direct_stderr = kr.abs() * base_stderr;
        let mut windows = Vec::with_capacity(deltas.len());
        for &delta in deltas {
            if !(delta > 0.0) || r + delta > horizon + ALIGN_TOL {
                return Err(Error::invalid(format!(
                    "window ]{r}, {}] must fit inside the horizon",
                    r + delta
                )));
            }
            let h = Direction::new(crate::step::StepFunction::scaled_indicator(
                r,
                r + delta,
                1.0 / delta,
            )?);
            let vals = map_paths(mc, |_, path| {
                let g = path.wiener_integral(dir.k())?;
                Ok(phi.eval(g) * skorokhod_term(u, &h, path)?)
            })?;
            let est = mean_stderr(&vals);
            let pass = (est.value - direct).abs()
                <= 3.0 * (est.stderr.powi(2) + direct_stderr.powi(2)).sqrt() + budget;
            all_pass &= pass;
            windows.push(WindowCheck { delta, value: est.value, stderr: est.stderr, pass });
        }
        rows.push(DisintegratedRow { r, direct, direct_stderr, windows });
    }
    Ok(DisintegratedReport { rows, pass: all_pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Refinement, TimeGrid};
    use crate::step::StepFunction;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn full_dir() -> NormalizedDirection {
        NormalizedDirection::new(StepFunction::indicator(0.0, 1.0).unwrap()).unwrap()
    }

    fn mc(paths: usize, n: usize, seed: u64) -> McConfig {
        let grid = Arc::new(TimeGrid::new(1.0, n, Refinement::Uniform).unwrap());
        McConfig::new(paths, grid, seed).unwrap()
    }

    #[test]
    fn conditioner_reproduces_the_half_increment_law() {
        // D over ]0, 1/2] given W_1 = x: mean x/2, variance 1/2 - 1/4 = 1/4
        let cond = GaussianConditioner::new(&full_dir(), &[0.0, 0.5]).unwrap();
        assert_relative_eq!(cond.conditional_mean(2.0)[0], 1.0);
        let mut rng = RngStream::new(314, 0).substream(LANE_CONDITIONAL);
        let draws: Vec<f64> = (0..100_000).map(|_| cond.sample(1.0, &mut rng)[0]).collect();
        let est = mean_stderr(&draws);
        assert!((est.value - 0.5).abs() <= 3.0 * est.stderr);
        let var = draws.iter().map(|d| (d - est.value) * (d - est.value)).sum::<f64>()
            / (draws.len() - 1) as f64;
        assert!((var - 0.25).abs() < 0.005, "conditional variance {var}");
    }

    #[test]
    fn degenerate_conditioning_is_a_conditioning_error() {
        // the full increment determines W_1: residual covariance is singular
        let err = GaussianConditioner::new(&full_dir(), &[0.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::Conditioning(_)), "{err}");
        // same through any partition of the full interval
        let err = GaussianConditioner::new(&full_dir(), &[0.0, 0.5, 1.0]).unwrap_err();
        assert!(matches!(err, Error::Conditioning(_)));
        // and surfaced through the sampling front-end for non-constant u
        let u = Cylindrical::terminal(1.0, |x| x.tanh(), |x| 1.0 - x.tanh().powi(2)).unwrap();
        let err = conditional_expectation(&full_dir(), &u, 0.0, 100, &RngStream::new(0, 0))
            .unwrap_err();
        assert!(matches!(err, Error::Conditioning(_)));
    }

    #[test]
    fn constant_functionals_bypass_conditioning() {
        let u = Cylindrical::constant(0.75, 1.0).unwrap();
        let est =
            conditional_expectation(&full_dir(), &u, 1.3, 10, &RngStream::new(0, 0)).unwrap();
        assert_eq!(est.value, 0.75);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn conditional_expectation_matches_the_lognormal_closed_form() {
        // E[exp(l D) | W_1 = x] with D over ]0, 1/2]:
        // exp(l x / 2 + l^2 / 8), here l = 0.7, x = 1
        let l = 0.7;
        let u = Cylindrical::of_increment(0.0, 0.5, move |d| (l * d).exp(), move |d| {
            l * (l * d).exp()
        })
        .unwrap();
        let est =
            conditional_expectation(&full_dir(), &u, 1.0, 200_000, &RngStream::new(88, 0))
                .unwrap();
        let expect = (l * 0.5 + l * l / 8.0).exp();
        assert!(
            (est.value - expect).abs() <= 3.0 * est.stderr,
            "{} vs {expect} +- {}",
            est.value,
            est.stderr
        );
    }

    #[test]
    fn levelset_pairing_recovers_the_gaussian_density() {
        // u = 1, h' = k: E[1_{g > x} W(k)] = rho(x)
        let dir = full_dir();
        let u = Cylindrical::constant(1.0, 1.0).unwrap();
        let h = Direction::new(dir.k().clone());
        let cfg = mc(100_000, 8, 606);
        for (x, rho) in [
            (0.0, 0.3989422804014327),
            (0.5, 0.3520653267642995),
            (1.0, 0.24197072451914337),
        ] {
            let lhs = lhs_levelset(&dir, &u, &h, x, &cfg).unwrap();
            assert!(
                (lhs.value - rho).abs() <= 3.0 * lhs.stderr,
                "x = {x}: {} vs {rho} +- {}",
                lhs.value,
                lhs.stderr
            );
            let rhs = rhs_levelset(&dir, &u, &h, x, 10, 0).unwrap();
            assert_relative_eq!(rhs.value, rho, epsilon = 1e-14);
            assert_eq!(rhs.stderr, 0.0);
        }
    }

    #[test]
    fn levelset_scan_is_continuous_in_the_level() {
        let dir = full_dir();
        let u = Cylindrical::constant(1.0, 1.0).unwrap();
        let h = Direction::new(dir.k().clone());
        let cfg = mc(100_000, 8, 11);
        let xs: Vec<f64> = (0..9).map(|i| 0.3 + 0.05 * i as f64).collect();
        let ests = lhs_levelset_scan(&dir, &u, &h, &xs, &cfg).unwrap();
        for pair in ests.windows(2) {
            // shared paths: adjacent levels differ by the sliver x < g <= x'
            assert!((pair[0].value - pair[1].value).abs() < 0.03);
        }
    }

    #[test]
    fn pairing_scales_exactly_with_the_direction() {
        let dir = full_dir();
        let u = Cylindrical::of_increment(0.0, 0.5, |d| d.tanh(), |d| 1.0 - d.tanh().powi(2))
            .unwrap();
        let h = Direction::new(StepFunction::indicator(0.0, 0.5).unwrap());
        let cfg = mc(2_000, 8, 5);
        let one = lhs_levelset(&dir, &u, &h, 0.2, &cfg).unwrap();
        let two = lhs_levelset(&dir, &u, &h.scale(2.0), 0.2, &cfg).unwrap();
        // doubling h' doubles every pathwise term exactly in floating point
        assert_eq!(two.value, 2.0 * one.value);
    }

    #[test]
    fn chain_rule_two_sided_for_a_smooth_u_and_an_atomic_phi() {
        let dir = full_dir();
        let u = Cylindrical::of_increment(0.0, 0.5, |d| d.tanh(), |d| 1.0 - d.tanh().powi(2))
            .unwrap();
        let h = Direction::new(StepFunction::indicator(0.25, 0.75).unwrap());
        let phi = BvFunction::heaviside(0.3).unwrap();
        let report = chain_rule_check_phi(&dir, &phi, &u, &h, &mc(60_000, 8, 1212)).unwrap();
        assert!(
            report.identity.pass,
            "lhs {} rhs {} diff se {}",
            report.identity.lhs, report.identity.rhs, report.identity.stderr_diff
        );
        assert!(report.bound_ok);
        assert_relative_eq!(report.inner_product, 0.5, epsilon = 1e-14);
        assert_relative_eq!(report.tv_phi, 1.0);
        // defining-identity orientation is the same check, flipped
        let def = bv_defining_identity_check(&dir, &phi, &u, &h, &mc(60_000, 8, 1212)).unwrap();
        assert!(def.pass);
        assert_relative_eq!(def.lhs, report.identity.rhs, epsilon = 1e-15);
    }

    #[test]
    fn chain_rule_handles_density_measures() {
        let dir = full_dir();
        let u = Cylindrical::of_increment(0.0, 0.25, |d| (d * 1.3).sin(), |d| {
            1.3 * (d * 1.3).cos()
        })
        .unwrap();
        let h = Direction::new(dir.k().clone());
        let phi = BvFunction::new(
            0.0,
            crate::measure::SignedMeasure::from_density(vec![-0.5, 0.5], vec![1.0]).unwrap(),
        )
        .unwrap();
        let report = chain_rule_check_phi(&dir, &phi, &u, &h, &mc(40_000, 8, 77)).unwrap();
        assert!(report.identity.pass, "lhs {} rhs {}", report.identity.lhs, report.identity.rhs);
    }

    #[test]
    fn disintegration_matches_windowed_pairings_inside_one_level() {
        let dir = full_dir();
        let u = Cylindrical::of_increment(0.0, 0.25, |d| d.tanh(), |d| 1.0 - d.tanh().powi(2))
            .unwrap();
        let phi = BvFunction::heaviside(0.0).unwrap();
        let cfg = mc(60_000, 16, 3030);
        let report =
            disintegrated_check(&dir, &phi, &u, 0.25, &[0.25, 0.5], &[0.25, 0.125], &cfg)
                .unwrap();
        assert!(report.pass, "{report:?}");
        // k = 1 everywhere: every window must reproduce the same density
        let d0 = report.rows[0].direct;
        assert_relative_eq!(report.rows[1].direct, d0, epsilon = 1e-14);
        // late functionals are rejected
        assert!(disintegrated_check(&dir, &phi, &u, 0.1, &[0.5], &[0.25], &cfg).is_err());
    }
}
