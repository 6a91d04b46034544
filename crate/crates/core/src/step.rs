//! Piecewise-constant functions of time (the square-integrable directions
//! `h'` and Wiener-integral kernels `k` used everywhere in this crate).
//!
//! A step function is a finite list of breakpoints `b_0 < ... < b_m` in
//! `[0, inf)` with one level per interval `]b_j, b_{j+1}]`; it vanishes
//! outside `]b_0, b_m]`. All L^2 quantities (norms, inner products,
//! antiderivatives) are exact.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct StepFunction {
    breakpoints: Vec<f64>,
    levels: Vec<f64>,
}

impl StepFunction {
    pub fn new(breakpoints: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if breakpoints.is_empty() && levels.is_empty() {
            return Ok(StepFunction { breakpoints, levels });
        }
        if breakpoints.len() != levels.len() + 1 {
            return Err(Error::invalid(format!(
                "step function needs one level per interval: {} breakpoints vs {} levels",
                breakpoints.len(),
                levels.len()
            )));
        }
        if breakpoints.len() < 2 {
            return Err(Error::invalid("step function needs at least two breakpoints"));
        }
        for w in breakpoints.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::invalid(format!(
                    "breakpoints must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if breakpoints[0] < 0.0 || !breakpoints.iter().all(|b| b.is_finite()) {
            return Err(Error::invalid("breakpoints must be finite and nonnegative"));
        }
        if !levels.iter().all(|l| l.is_finite()) {
            return Err(Error::invalid("levels must be finite"));
        }
        Ok(StepFunction { breakpoints, levels })
    }

    /// The zero element of L^2.
    pub fn zero() -> Self {
        StepFunction { breakpoints: Vec::new(), levels: Vec::new() }
    }

    /// Indicator of `]a, b]`.
    pub fn indicator(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![a, b], vec![1.0])
    }

    /// `c * 1_{]a, b]}`.
    pub fn scaled_indicator(a: f64, b: f64, c: f64) -> Result<Self> {
        Self::new(vec![a, b], vec![c])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn is_zero(&self) -> bool {
        self.levels.iter().all(|&l| l == 0.0)
    }

    /// Right-continuous pointwise representative: the level on the interval
    /// immediately to the right of `t`. This is the value a left-point Ito
    /// sum multiplies against the increment over `]t, t + dt]`.
    pub fn value_right(&self, t: f64) -> f64 {
        if self.breakpoints.is_empty() {
            return 0.0;
        }
        let m = self.breakpoints.len() - 1;
        if t < self.breakpoints[0] || t >= self.breakpoints[m] {
            return 0.0;
        }
        // first breakpoint strictly greater than t, minus one
        let j = self.breakpoints.partition_point(|&b| b <= t) - 1;
        self.levels[j]
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.levels
            .iter()
            .zip(self.breakpoints.windows(2))
            .map(|(l, w)| l * l * (w[1] - w[0]))
            .sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// Exact L^2 inner product, computed on the common refinement.
    pub fn inner(&self, other: &StepFunction) -> f64 {
        let mut acc = 0.0;
        let mut cuts: Vec<f64> = self
            .breakpoints
            .iter()
            .chain(other.breakpoints.iter())
            .copied()
            .collect();
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup();
        for w in cuts.windows(2) {
            acc += self.value_right(w[0]) * other.value_right(w[0]) * (w[1] - w[0]);
        }
        acc
    }

    /// `int_0^t` of the step function (piecewise linear in `t`).
    pub fn antiderivative(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for (l, w) in self.levels.iter().zip(self.breakpoints.windows(2)) {
            if t <= w[0] {
                break;
            }
            acc += l * (t.min(w[1]) - w[0]);
        }
        acc
    }

    /// `int_a^b` of the step function.
    pub fn integral_over(&self, a: f64, b: f64) -> f64 {
        self.antiderivative(b) - self.antiderivative(a)
    }

    pub fn scale(&self, c: f64) -> StepFunction {
        StepFunction {
            breakpoints: self.breakpoints.clone(),
            levels: self.levels.iter().map(|l| l * c).collect(),
        }
    }
}
