//! Smooth cylindrical functionals `u = psi(D_1, ..., D_m)` of grid-aligned
//! Brownian increments `D_i = W(t_i) - W(t_{i-1})`, Cameron-Martin
//! directions, and the Gaussian integration-by-parts identity they satisfy.
//!
//! These are the test functionals the distributional checks pair BV
//! functions against; the derivative data is supplied exactly (closures for
//! `psi` and its gradient), so every Monte Carlo identity here is unbiased.

use std::fmt;
use std::sync::Arc;

use crate::error::{ensure_finite, Error, Result};
use crate::grid::BrownianPath;
use crate::mc::{map_paths, McConfig};
use crate::report::{mean_stderr, IdentityReport};
use crate::step::StepFunction;

type Psi = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type Grad = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A Cameron-Martin direction, stored via its derivative `h'` (piecewise
/// constant, so `h(t) = int_0^t h'` is piecewise linear with `h(0) = 0`).
#[derive(Clone, Debug)]
pub struct Direction {
    hprime: StepFunction,
}

impl Direction {
    pub fn new(hprime: StepFunction) -> Self {
        Direction { hprime }
    }

    pub fn hprime(&self) -> &StepFunction {
        &self.hprime
    }

    /// `h(t)`.
    pub fn value(&self, t: f64) -> f64 {
        self.hprime.antiderivative(t)
    }

    pub fn scale(&self, c: f64) -> Direction {
        Direction { hprime: self.hprime.scale(c) }
    }

    /// `W(h') = int h' dW` along a sampled path.
    pub fn wiener_integral(&self, path: &BrownianPath) -> Result<f64> {
        path.wiener_integral(&self.hprime)
    }
}

/// `psi` applied to finitely many increments over `]times[i-1], times[i]]`.
#[derive(Clone)]
pub struct Cylindrical {
    times: Vec<f64>,
    psi: Psi,
    grad: Grad,
    constant_value: Option<f64>,
}

impl fmt::Debug for Cylindrical {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Cylindrical")
            .field("times", &self.times)
            .field("constant_value", &self.constant_value)
            .finish_non_exhaustive()
    }
}

impl Cylindrical {
    /// `times` are the increment boundaries `0 <= t_0 < t_1 < ... < t_m`;
    /// `psi` and `grad` act on the `m` increments. `grad` must return one
    /// partial derivative per increment.
    pub fn new(
        times: Vec<f64>,
        psi: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::invalid("a cylindrical functional needs at least one increment"));
        }
        if times[0] < 0.0 || !times.iter().all(|t| t.is_finite()) {
            return Err(Error::invalid("increment boundaries must be finite and nonnegative"));
        }
        for w in times.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::invalid("increment boundaries must be strictly increasing"));
            }
        }
        Ok(Cylindrical { times, psi: Arc::new(psi), grad: Arc::new(grad), constant_value: None })
    }

    /// The constant functional on `[0, horizon]`; its gradient vanishes
    /// identically, which downstream code may exploit.
    pub fn constant(c: f64, horizon: f64) -> Result<Self> {
        ensure_finite(c, "constant value")?;
        let mut u = Cylindrical::new(vec![0.0, horizon], move |_| c, |d| vec![0.0; d.len()])?;
        u.constant_value = Some(c);
        Ok(u)
    }

    /// `psi(W(horizon))` for a scalar `psi` with derivative `dpsi`.
    pub fn terminal(
        horizon: f64,
        psi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dpsi: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        Cylindrical::new(vec![0.0, horizon], move |d| psi(d[0]), move |d| vec![dpsi(d[0])])
    }

    /// `psi(W(b) - W(a))` of a single increment.
    pub fn of_increment(
        a: f64,
        b: f64,
        psi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dpsi: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        Cylindrical::new(vec![a, b], move |d| psi(d[0]), move |d| vec![dpsi(d[0])])
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn increment_count(&self) -> usize {
        self.times.len() - 1
    }

    /// `Some(c)` iff built by [`Cylindrical::constant`].
    pub fn constant_value(&self) -> Option<f64> {
        self.constant_value
    }

    /// Extract this functional's increments from a sampled path. Errors if an
    /// increment boundary is not a grid point.
    pub fn increments(&self, path: &BrownianPath) -> Result<Vec<f64>> {
        let grid = path.grid();
        let vals = path.values();
        let mut out = Vec::with_capacity(self.increment_count());
        let mut prev = vals[grid.index_at(self.times[0])?];
        for &t in &self.times[1..] {
            let v = vals[grid.index_at(t)?];
            out.push(v - prev);
            prev = v;
        }
        Ok(out)
    }

    pub fn eval(&self, path: &BrownianPath) -> Result<f64> {
        Ok((self.psi)(&self.increments(path)?))
    }

    /// `psi` on explicitly supplied increments (used by conditional-law
    /// samplers that never materialize a path).
    pub fn eval_increments(&self, increments: &[f64]) -> Result<f64> {
        if increments.len() != self.increment_count() {
            return Err(Error::invalid(format!(
                "expected {} increments, got {}",
                self.increment_count(),
                increments.len()
            )));
        }
        Ok((self.psi)(increments))
    }

    fn gradient_at(&self, increments: &[f64]) -> Result<Vec<f64>> {
        let g = (self.grad)(increments);
        if g.len() != self.increment_count() {
            return Err(Error::invalid(format!(
                "gradient returned {} partials for {} increments",
                g.len(),
                self.increment_count()
            )));
        }
        Ok(g)
    }

    /// The pathwise derivative as a step function of time: `D_s u` is
    /// constant equal to `d_i psi` on `]t_{i-1}, t_i]` and zero elsewhere.
    pub fn malliavin_gradient(&self, path: &BrownianPath) -> Result<StepFunction> {
        let g = self.gradient_at(&self.increments(path)?)?;
        StepFunction::new(self.times.clone(), g)
    }

    /// `d_h u = <Du, h'>_2` along a path.
    pub fn directional_derivative(&self, path: &BrownianPath, h: &Direction) -> Result<f64> {
        let g = self.gradient_at(&self.increments(path)?)?;
        let mut acc = 0.0;
        for (i, gi) in g.iter().enumerate() {
            acc += gi * h.hprime.integral_over(self.times[i], self.times[i + 1]);
        }
        Ok(acc)
    }
}

/// The adjoint term `d*_h u = u W(h') - d_h u`, pathwise. Its expectation
/// against any smooth `F` reproduces `E[d_h F u]`, which is what the
/// distributional pairings integrate against.
pub fn skorokhod_term(u: &Cylindrical, h: &Direction, path: &BrownianPath) -> Result<f64> {
    Ok(u.eval(path)? * h.wiener_integral(path)? - u.directional_derivative(path, h)?)
}

/// Monte Carlo check of the product-rule integration by parts
/// `E[g d_h f + f d_h g] = E[f g W(h')]`, with the variance taken on the
/// pathwise difference so the verdict does not drown in the shared noise of
/// the two sides.
pub fn ibp_check(
    f: &Cylindrical,
    g: &Cylindrical,
    h: &Direction,
    mc: &McConfig,
) -> Result<IdentityReport> {
    let sides = map_paths(mc, |_, path| {
        let fv = f.eval(path)?;
        let gv = g.eval(path)?;
        let lhs = f.directional_derivative(path, h)? * gv + fv * g.directional_derivative(path, h)?;
        let rhs = fv * gv * h.wiener_integral(path)?;
        Ok((lhs, rhs))
    })?;
    let lhs: Vec<f64> = sides.iter().map(|s| s.0).collect();
    let rhs: Vec<f64> = sides.iter().map(|s| s.1).collect();
    let diff: Vec<f64> = sides.iter().map(|s| s.0 - s.1).collect();
    let ed = mean_stderr(&diff);
    Ok(IdentityReport::from_sides(mean_stderr(&lhs), mean_stderr(&rhs), ed.stderr, 0.0))
}
