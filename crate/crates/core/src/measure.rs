//! Finite signed measures on the real line and the scalar BV functions they
//! differentiate.
//!
//! A measure is finitely many atoms plus a piecewise-constant density (more
//! general singular parts are out of scope). A BV function is determined by
//! its value at -infinity (`base`) and its derivative measure, evaluated
//! right-continuously: `phi(x) = base + Dphi((-inf, x])`.
//!
//! Measure pairings `int f dDphi` are deterministic: exact sums over atoms
//! plus Gauss-Legendre panels per density interval (order 16, far beyond the
//! 1e-10 accuracy the callers assert).

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::kernels::{std_normal_density, NormalizedDirection};
use crate::mc::{map_paths, McConfig};
use crate::quad::{gl16, gl16_composite};
use crate::report::{mean_stderr, TvEstimate};

#[derive(Clone, Debug)]
pub struct SignedMeasure {
    /// Sorted by location; locations distinct, weights nonzero.
    atoms: Vec<(f64, f64)>,
    /// Density knots (empty, or at least two, strictly increasing).
    knots: Vec<f64>,
    /// One density level per knot interval.
    levels: Vec<f64>,
}

impl SignedMeasure {
    pub fn new(atoms: Vec<(f64, f64)>, knots: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        let mut atoms = atoms;
        for &(x, w) in &atoms {
            ensure_finite(x, "atom location")?;
            ensure_finite(w, "atom weight")?;
            if w == 0.0 {
                return Err(Error::invalid(format!("atom at {x} has zero weight")));
            }
        }
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for pair in atoms.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::invalid(format!(
                    "duplicate atom location {}",
                    pair[0].0
                )));
            }
        }
        if knots.is_empty() != levels.is_empty() {
            return Err(Error::invalid("density needs both knots and levels"));
        }
        if !knots.is_empty() {
            if knots.len() != levels.len() + 1 || knots.len() < 2 {
                return Err(Error::invalid(format!(
                    "density needs one level per knot interval: {} knots vs {} levels",
                    knots.len(),
                    levels.len()
                )));
            }
            for w in knots.windows(2) {
                if !(w[0] < w[1]) {
                    return Err(Error::invalid("density knots must be strictly increasing"));
                }
            }
            if !knots.iter().all(|k| k.is_finite()) || !levels.iter().all(|l| l.is_finite()) {
                return Err(Error::invalid("density knots and levels must be finite"));
            }
        }
        Ok(SignedMeasure { atoms, knots, levels })
    }

    pub fn zero() -> Self {
        SignedMeasure { atoms: Vec::new(), knots: Vec::new(), levels: Vec::new() }
    }

    pub fn dirac(x: f64, w: f64) -> Result<Self> {
        Self::new(vec![(x, w)], Vec::new(), Vec::new())
    }

    pub fn from_density(knots: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        Self::new(Vec::new(), knots, levels)
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn density_intervals(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.knots
            .windows(2)
            .zip(self.levels.iter())
            .map(|(w, &lev)| (w[0], w[1], lev))
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty() && self.levels.iter().all(|&l| l == 0.0)
    }

    /// Total variation `|mu|(R)`.
    pub fn total_variation(&self) -> f64 {
        let atom_part: f64 = self.atoms.iter().map(|(_, w)| w.abs()).sum();
        let dens_part: f64 = self
            .density_intervals()
            .map(|(a, b, lev)| lev.abs() * (b - a))
            .sum();
        atom_part + dens_part
    }

    /// Smallest `M` with all atoms and density support inside `[-M, M]`.
    pub fn support_bound(&self) -> f64 {
        let mut m: f64 = 0.0;
        for &(x, _) in &self.atoms {
            m = m.max(x.abs());
        }
        for &k in &self.knots {
            m = m.max(k.abs());
        }
        m
    }

    /// Supremum of the support (`-inf` for the zero measure).
    pub fn sup_support(&self) -> f64 {
        let mut s = f64::NEG_INFINITY;
        if let Some(&(x, _)) = self.atoms.last() {
            s = s.max(x);
        }
        if let Some(&k) = self.knots.last() {
            s = s.max(k);
        }
        s
    }

    /// `mu((-inf, x])`.
    pub fn cdf(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for &(loc, w) in &self.atoms {
            if loc <= x {
                acc += w;
            } else {
                break;
            }
        }
        for (a, b, lev) in self.density_intervals() {
            if x <= a {
                break;
            }
            acc += lev * (x.min(b) - a);
        }
        acc
    }

    fn integrate_impl<F: Fn(f64) -> f64>(
        &self,
        f: &F,
        abs_weights: bool,
        lower: Option<f64>,
        splits: &[f64],
    ) -> Result<f64> {
        let weight = |w: f64| if abs_weights { w.abs() } else { w };
        let mut acc = 0.0;
        for &(x, w) in &self.atoms {
            if lower.is_some_and(|l| x <= l) {
                continue;
            }
            let term = weight(w) * f(x);
            if !term.is_finite() {
                return Err(Error::numeric(format!("kernel not finite at atom x = {x}")));
            }
            acc += term;
        }
        for (a, b, lev) in self.density_intervals() {
            let mut lo = a;
            if let Some(l) = lower {
                if b <= l {
                    continue;
                }
                lo = lo.max(l);
            }
            // refine at caller-declared kink points so panels stay spectral
            let mut cuts = vec![lo];
            for &s in splits {
                if s > lo && s < b {
                    cuts.push(s);
                }
            }
            cuts.push(b);
            let lev = weight(lev);
            for w in cuts.windows(2) {
                let piece = lev * gl16(f, w[0], w[1]);
                if !piece.is_finite() {
                    return Err(Error::numeric(format!(
                        "kernel not finite on density cell [{}, {}]",
                        w[0], w[1]
                    )));
                }
                acc += piece;
            }
        }
        Ok(acc)
    }

    /// `int f dmu` (exact on atoms, GL16 per density interval).
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        self.integrate_impl(&f, false, None, &[])
    }

    /// `int f dmu` with extra panel boundaries where `f` has kinks.
    pub fn integrate_split<F: Fn(f64) -> f64>(&self, f: F, splits: &[f64]) -> Result<f64> {
        self.integrate_impl(&f, false, None, splits)
    }

    /// `int_{(lower, inf)} f dmu`: atoms at `lower` are excluded, density
    /// intervals are clipped.
    pub fn integrate_above<F: Fn(f64) -> f64>(&self, lower: f64, f: F) -> Result<f64> {
        self.integrate_impl(&f, false, Some(lower), &[])
    }

    /// `int f d|mu|`.
    pub fn integrate_abs<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        self.integrate_impl(&f, true, None, &[])
    }

    /// `int f d|mu|` with declared kink points.
    pub fn integrate_abs_split<F: Fn(f64) -> f64>(&self, f: F, splits: &[f64]) -> Result<f64> {
        self.integrate_impl(&f, true, None, splits)
    }

    /// Flattens the measure into weighted point masses: atoms verbatim, then
    /// one GL16 node set per density interval. Summing `weight * f(x)` over
    /// the nodes reproduces [`SignedMeasure::integrate`] up to summation
    /// rounding (same nodes, same weights), which lets hot loops skip the
    /// per-call dispatch.
    pub fn quadrature_nodes(&self) -> Vec<(f64, f64)> {
        let mut nodes: Vec<(f64, f64)> = self.atoms.clone();
        for (a, b, lev) in self.density_intervals() {
            let mid = 0.5 * (a + b);
            let half = 0.5 * (b - a);
            for &(x, w) in crate::quad::GL16.iter() {
                nodes.push((mid + half * x, lev * half * w));
            }
        }
        nodes
    }

    fn density_value(&self, x: f64) -> f64 {
        if self.knots.is_empty() {
            return 0.0;
        }
        let m = self.knots.len() - 1;
        if x < self.knots[0] || x >= self.knots[m] {
            return 0.0;
        }
        let j = self.knots.partition_point(|&k| k <= x) - 1;
        self.levels[j]
    }

    /// Measure sum; coinciding atoms merge (and vanish if weights cancel).
    pub fn add(&self, other: &SignedMeasure) -> Result<SignedMeasure> {
        let mut atoms: Vec<(f64, f64)> = Vec::new();
        let mut merged: Vec<(f64, f64)> =
            self.atoms.iter().chain(other.atoms.iter()).copied().collect();
        merged.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for (x, w) in merged {
            match atoms.last_mut() {
                Some(last) if last.0 == x => last.1 += w,
                _ => atoms.push((x, w)),
            }
        }
        atoms.retain(|&(_, w)| w != 0.0);

        let mut knots: Vec<f64> =
            self.knots.iter().chain(other.knots.iter()).copied().collect();
        knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        knots.dedup();
        let levels: Vec<f64> = knots
            .windows(2)
            .map(|w| self.density_value(w[0]) + other.density_value(w[0]))
            .collect();
        if knots.len() < 2 {
            knots.clear();
        }
        SignedMeasure::new(atoms, knots, levels)
    }

    pub fn scale(&self, c: f64) -> Result<SignedMeasure> {
        if c == 0.0 {
            return Ok(SignedMeasure::zero());
        }
        SignedMeasure::new(
            self.atoms.iter().map(|&(x, w)| (x, c * w)).collect(),
            self.knots.clone(),
            self.levels.iter().map(|l| c * l).collect(),
        )
    }
}

/// Scalar BV function `phi(x) = base + Dphi((-inf, x])`.
#[derive(Clone, Debug)]
pub struct BvFunction {
    base: f64,
    derivative: SignedMeasure,
}

impl BvFunction {
    pub fn new(base: f64, derivative: SignedMeasure) -> Result<Self> {
        ensure_finite(base, "base value")?;
        Ok(BvFunction { base, derivative })
    }

    /// Unit jump at `x0` (right-continuous Heaviside).
    pub fn heaviside(x0: f64) -> Result<Self> {
        BvFunction::new(0.0, SignedMeasure::dirac(x0, 1.0)?)
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn derivative(&self) -> &SignedMeasure {
        &self.derivative
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.base + self.derivative.cdf(x)
    }
}

/// JSON-facing description of a BV function via its derivative measure.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeasureSpec {
    #[serde(default)]
    pub base: f64,
    #[serde(default)]
    pub atoms: Vec<AtomSpec>,
    #[serde(default)]
    pub density: Option<DensitySpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AtomSpec {
    pub x: f64,
    pub w: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensitySpec {
    pub knots: Vec<f64>,
    pub levels: Vec<f64>,
}

impl BvFunction {
    pub fn from_measure_spec(spec: &MeasureSpec) -> Result<Self> {
        let atoms = spec.atoms.iter().map(|a| (a.x, a.w)).collect();
        let (knots, levels) = match &spec.density {
            Some(d) => (d.knots.clone(), d.levels.clone()),
            None => (Vec::new(), Vec::new()),
        };
        BvFunction::new(spec.base, SignedMeasure::new(atoms, knots, levels)?)
    }

    pub fn to_measure_spec(&self) -> MeasureSpec {
        MeasureSpec {
            base: self.base,
            atoms: self.derivative.atoms.iter().map(|&(x, w)| AtomSpec { x, w }).collect(),
            density: if self.derivative.knots.is_empty() {
                None
            } else {
                Some(DensitySpec {
                    knots: self.derivative.knots.clone(),
                    levels: self.derivative.levels.clone(),
                })
            },
        }
    }
}

/// The ramp `phi_n^x(t) = clamp(n (t - x), 0, 1)` smoothing the level-set
/// indicator `1_{t > x}` from above.
#[derive(Clone, Copy, Debug)]
pub struct LevelRamp {
    pub x: f64,
    pub n: u32,
}

impl LevelRamp {
    pub fn new(x: f64, n: u32) -> Result<Self> {
        ensure_finite(x, "ramp level")?;
        if n == 0 {
            return Err(Error::invalid("ramp steepness must be at least 1"));
        }
        Ok(LevelRamp { x, n })
    }

    pub fn value(&self, t: f64) -> f64 {
        (self.n as f64 * (t - self.x)).clamp(0.0, 1.0)
    }

    /// `n` on the open interval `]x, x + 1/n[`, 0 elsewhere.
    pub fn derivative(&self, t: f64) -> f64 {
        let n = self.n as f64;
        if t > self.x && t < self.x + 1.0 / n {
            n
        } else {
            0.0
        }
    }

    pub fn width(&self) -> f64 {
        1.0 / self.n as f64
    }
}

/// How to evaluate the level-set total-variation sequence.
pub enum TvMode<'a> {
    /// `n int_x^{x+1/n} rho`, deterministic.
    Quadrature,
    /// `n P(W(k) in ]x, x+1/n[)` estimated over the configured paths.
    MonteCarlo { dir: &'a NormalizedDirection, mc: &'a McConfig },
}

/// The gradient-mass sequence `E |grad (phi_n^x o g)|_2 = n P(g in ]x, x+1/n[)`
/// for a unit-norm Wiener integral `g`; it converges to the level-set weight
/// `xi(x) = rho(x)` as `n` grows.
pub fn tv_estimate_level_set(x: f64, ns: &[u32], mode: TvMode) -> Result<Vec<TvEstimate>> {
    ensure_finite(x, "level")?;
    if ns.contains(&0) {
        return Err(Error::invalid("ramp steepness must be at least 1"));
    }
    match mode {
        TvMode::Quadrature => ns
            .iter()
            .map(|&n| {
                let width = 1.0 / n as f64;
                let value = n as f64 * gl16_composite(std_normal_density, x, x + width, 4);
                Ok(TvEstimate { n, value, stderr: 0.0 })
            })
            .collect(),
        TvMode::MonteCarlo { dir, mc } => {
            let gs = map_paths(mc, |_, path| path.wiener_integral(dir.k()))?;
            ns.iter()
                .map(|&n| {
                    let width = 1.0 / n as f64;
                    let vals: Vec<f64> = gs
                        .iter()
                        .map(|&g| {
                            if g > x && g < x + width {
                                n as f64
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    let est = mean_stderr(&vals);
                    Ok(TvEstimate { n, value: est.value, stderr: est.stderr })
                })
                .collect()
        }
    }
}

/// `E |grad (phi_n o g)|_2` for the *triangular* mollification of `phi` at
/// width `1/n` and a unit-norm Wiener integral `g`:
/// `int |(Dphi * kappa_n)(t)| rho(t) dt`, by composite quadrature.
///
/// Diagnostic companion to [`tv_estimate_level_set`]; its limit is the
/// xi-weighted total variation and the finite-n value never exceeds it by
/// more than the quadrature error (panels are kept narrower than the
/// mollifier, but density-knot kinks inside the convolution window leave
/// this a ~1e-6 diagnostic rather than a 1e-12 pairing).
pub fn mollified_gradient_mass(phi: &BvFunction, n: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("mollifier steepness must be at least 1"));
    }
    let mu = phi.derivative();
    if mu.is_zero() {
        return Ok(0.0);
    }
    let width = 1.0 / n as f64;
    let kappa = |t: f64| {
        let u = 1.0 - (t * n as f64).abs();
        if u > 0.0 {
            u * n as f64
        } else {
            0.0
        }
    };
    let convolved = |t: f64| -> Result<f64> {
        let mut acc = 0.0;
        for &(x, w) in mu.atoms() {
            acc += w * kappa(t - x);
        }
        for (a, b, lev) in mu.density_intervals() {
            let lo = a.max(t - width);
            let hi = b.min(t + width);
            if lo < hi {
                // kappa is linear on each side of t
                let mid = t.clamp(lo, hi);
                acc += lev * (gl16(|u| kappa(t - u), lo, mid) + gl16(|u| kappa(t - u), mid, hi));
            }
        }
        Ok(acc)
    };
    let lo = -mu.support_bound() - width;
    let hi = mu.support_bound() + width;
    let panels = (((hi - lo) / width).ceil() as usize * 2).clamp(8, 20_000);
    let mut err = None;
    let value = gl16_composite(
        |t| match convolved(t) {
            Ok(v) => v.abs() * std_normal_density(t),
            Err(e) => {
                err = Some(e);
                0.0
            }
        },
        lo,
        hi,
        panels,
    );
    match err {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Refinement, TimeGrid};
    use crate::kernels::std_normal_cdf;
    use crate::step::StepFunction;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn heaviside() -> BvFunction {
        BvFunction::heaviside(0.0).unwrap()
    }

    fn ramp_density() -> BvFunction {
        // phi increases linearly from 0 to 1 across [0, 1]
        BvFunction::new(0.0, SignedMeasure::from_density(vec![0.0, 1.0], vec![1.0]).unwrap())
            .unwrap()
    }

    #[test]
    fn eval_is_right_continuous_with_base() {
        let h = heaviside();
        assert_eq!(h.eval(-1e-12), 0.0);
        assert_eq!(h.eval(0.0), 1.0);
        assert_eq!(h.eval(5.0), 1.0);
        let r = ramp_density();
        assert_relative_eq!(r.eval(0.25), 0.25);
        assert_eq!(r.eval(2.0), 1.0);
        let c = BvFunction::new(3.5, SignedMeasure::zero()).unwrap();
        assert_eq!(c.eval(-7.0), 3.5);
        assert_eq!(c.eval(7.0), 3.5);
    }

    #[test]
    fn total_variation_sums_atoms_and_density() {
        let m = SignedMeasure::new(
            vec![(0.0, 1.0), (1.0, -2.0)],
            vec![-1.0, 0.5],
            vec![-0.5],
        )
        .unwrap();
        assert_relative_eq!(m.total_variation(), 1.0 + 2.0 + 0.5 * 1.5);
        assert_relative_eq!(m.support_bound(), 1.0);
        assert_relative_eq!(m.sup_support(), 1.0);
    }

    #[test]
    fn integrate_handles_atoms_and_densities_to_quadrature_accuracy() {
        let dirac = SignedMeasure::dirac(0.3, 2.0).unwrap();
        assert_relative_eq!(dirac.integrate(|x| x * x).unwrap(), 2.0 * 0.09, epsilon = 1e-15);
        let dens = SignedMeasure::from_density(vec![0.0, 1.0], vec![1.0]).unwrap();
        let got = dens.integrate(std_normal_density).unwrap();
        let expect = std_normal_cdf(1.0) - 0.5; // 0.3413447460685429
        assert_relative_eq!(got, expect, epsilon = 1e-10);
        assert_relative_eq!(dens.integrate(|_| 1.0).unwrap(), 1.0, epsilon = 1e-14);
        // non-finite kernels are reported, not propagated silently
        assert!(dirac.integrate(|_| f64::NAN).is_err());
    }

    #[test]
    fn integrate_above_clips_strictly() {
        let m = SignedMeasure::new(
            vec![(0.5, 2.0), (1.5, 4.0)],
            vec![0.0, 1.0],
            vec![1.0],
        )
        .unwrap();
        // atom exactly at the cut is excluded; density is clipped
        assert_relative_eq!(m.integrate_above(0.5, |_| 1.0).unwrap(), 4.0 + 0.5, epsilon = 1e-13);
        assert_relative_eq!(m.integrate_above(2.0, |_| 1.0).unwrap(), 0.0);
        assert_relative_eq!(m.integrate_above(-5.0, |_| 1.0).unwrap(), 2.0 + 4.0 + 1.0, epsilon = 1e-13);
    }

    #[test]
    fn arithmetic_merges_atoms_and_densities() {
        let a = SignedMeasure::dirac(0.0, 1.0).unwrap();
        let b = SignedMeasure::new(
            vec![(0.0, -1.0), (2.0, 3.0)],
            vec![0.0, 2.0],
            vec![0.25],
        )
        .unwrap();
        let sum = a.add(&b).unwrap();
        // atom at 0 cancels
        assert_eq!(sum.atoms(), &[(2.0, 3.0)]);
        assert_relative_eq!(sum.total_variation(), 3.0 + 0.5);
        let scaled = sum.scale(-2.0).unwrap();
        assert_relative_eq!(scaled.total_variation(), 2.0 * (3.0 + 0.5));
        assert!(scaled.scale(0.0).unwrap().is_zero());
    }

    #[test]
    fn constructor_rejects_malformed_measures() {
        assert!(SignedMeasure::new(vec![(0.0, 0.0)], vec![], vec![]).is_err());
        assert!(SignedMeasure::new(vec![(0.0, 1.0), (0.0, 2.0)], vec![], vec![]).is_err());
        assert!(SignedMeasure::new(vec![], vec![0.0], vec![]).is_err());
        assert!(SignedMeasure::new(vec![], vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(SignedMeasure::new(vec![(f64::NAN, 1.0)], vec![], vec![]).is_err());
    }

    #[test]
    fn measure_spec_round_trips_through_json() {
        let phi = BvFunction::new(
            0.25,
            SignedMeasure::new(vec![(0.0, 1.0)], vec![-1.0, 1.0], vec![0.5]).unwrap(),
        )
        .unwrap();
        let spec = phi.to_measure_spec();
        let json = serde_json::to_string(&spec).unwrap();
        let back: MeasureSpec = serde_json::from_str(&json).unwrap();
        let phi2 = BvFunction::from_measure_spec(&back).unwrap();
        for x in [-2.0, -0.5, 0.0, 0.7, 3.0] {
            assert_eq!(phi.eval(x), phi2.eval(x));
        }
        // minimal spec: atoms only
        let min: MeasureSpec =
            serde_json::from_str(r#"{"atoms":[{"x":0.0,"w":1.0}]}"#).unwrap();
        let h = BvFunction::from_measure_spec(&min).unwrap();
        assert_eq!(h.eval(0.0), 1.0);
    }

    #[test]
    fn ramp_matches_hand_values() {
        let r = LevelRamp::new(0.0, 2).unwrap();
        assert_eq!(r.value(-1.0), 0.0);
        assert_eq!(r.value(0.25), 0.5);
        assert_eq!(r.value(0.5), 1.0);
        assert_eq!(r.value(3.0), 1.0);
        assert_eq!(r.derivative(0.25), 2.0);
        assert_eq!(r.derivative(-0.1), 0.0);
        assert_eq!(r.derivative(0.5), 0.0);
        assert!(LevelRamp::new(0.0, 0).is_err());
    }

    #[test]
    fn tv_quadrature_sequence_recovers_density_value() {
        // n = 1 at x = 0: int_0^1 rho = Phi(1) - 1/2
        let seq = tv_estimate_level_set(0.0, &[1, 10, 100, 1000], TvMode::Quadrature).unwrap();
        assert_relative_eq!(seq[0].value, 0.34134474606854295, epsilon = 1e-10);
        // monotone increase toward rho(0) for the unimodal density
        assert!(seq.windows(2).all(|w| w[0].value <= w[1].value));
        assert!((seq[3].value - 0.3989422804014327).abs() < 1e-3);
    }

    #[test]
    fn tv_monte_carlo_agrees_with_quadrature() {
        let dir = NormalizedDirection::new(StepFunction::indicator(0.0, 1.0).unwrap()).unwrap();
        let grid = Arc::new(TimeGrid::new(1.0, 8, Refinement::Uniform).unwrap());
        let mc = McConfig::new(100_000, grid, 77).unwrap();
        let ns = [1u32, 10, 100];
        let quad = tv_estimate_level_set(0.0, &ns, TvMode::Quadrature).unwrap();
        let mcs = tv_estimate_level_set(0.0, &ns, TvMode::MonteCarlo { dir: &dir, mc: &mc }).unwrap();
        for (q, m) in quad.iter().zip(&mcs) {
            assert!(
                (q.value - m.value).abs() <= 3.0 * m.stderr,
                "n = {}: quad {} vs mc {} +- {}",
                q.n,
                q.value,
                m.value,
                m.stderr
            );
        }
    }

    #[test]
    fn mollified_gradient_mass_stays_below_weighted_tv() {
        // atoms: int kappa_n(t) rho(t) dt < rho(0) since rho peaks at 0
        let h = heaviside();
        let weighted_tv = h.derivative().integrate_abs(std_normal_density).unwrap();
        for n in [5, 20, 100] {
            let est = mollified_gradient_mass(&h, n).unwrap();
            assert!(est <= weighted_tv + 1e-6, "n = {n}: {est} vs {weighted_tv}");
            assert!(est > 0.9 * weighted_tv);
        }
        // mixed-sign measures lose mass to cancellation, never gain
        let mixed = BvFunction::new(
            0.0,
            SignedMeasure::new(vec![(0.05, -1.0)], vec![0.0, 1.0], vec![1.0]).unwrap(),
        )
        .unwrap();
        let tv_mixed = mixed.derivative().integrate_abs(std_normal_density).unwrap();
        let est = mollified_gradient_mass(&mixed, 10).unwrap();
        assert!(est <= tv_mixed + 1e-6);
    }

    proptest! {
        #[test]
        fn tv_is_subadditive_and_homogeneous(
            w1 in -3.0f64..3.0, w2 in -3.0f64..3.0, c in -4.0f64..4.0,
            x1 in -1.0f64..1.0,
        ) {
            prop_assume!(w1 != 0.0 && w2 != 0.0);
            let a = SignedMeasure::dirac(x1, w1).unwrap();
            let b = SignedMeasure::new(vec![(0.5, w2)], vec![0.0, 1.0], vec![w1]).unwrap();
            let sum = a.add(&b).unwrap();
            prop_assert!(sum.total_variation() <= a.total_variation() + b.total_variation() + 1e-12);
            let scaled = a.scale(c).unwrap();
            prop_assert!((scaled.total_variation() - c.abs() * a.total_variation()).abs() < 1e-12);
        }

        #[test]
        fn eval_is_monotone_for_nonnegative_measures(
            x1 in -2.0f64..2.0, x2 in -2.0f64..2.0,
        ) {
            let phi = BvFunction::new(
                1.0,
                SignedMeasure::new(vec![(0.0, 2.0)], vec![-1.0, 1.0], vec![0.5]).unwrap(),
            ).unwrap();
            let (lo, hi) = if x1 <= x2 { (x1, x2) } else { (x2, x1) };
            prop_assert!(phi.eval(lo) <= phi.eval(hi) + 1e-12);
        }
    }
}
