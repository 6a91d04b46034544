//! Report types shared across modules, their pass criteria, and the CSV
//! renderings consumed by the command-line runner.
//!
//! Floats are rendered with Rust's shortest round-trip formatting, so a
//! report serialized twice from the same numbers is byte-identical.

use serde::Serialize;

/// A Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, stderr: 0.0 }
    }
}

/// Sample mean and its standard error (two-pass, summed in slice order so the
/// result does not depend on scheduling).
pub fn mean_stderr(xs: &[f64]) -> Estimate {
    let n = xs.len();
    if n == 0 {
        return Estimate { value: f64::NAN, stderr: f64::NAN };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Estimate { value: mean, stderr: 0.0 };
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    let var = ss / (n as f64 - 1.0);
    Estimate { value: mean, stderr: (var / n as f64).sqrt() }
}

/// Two-sided identity check: both sides, their standard errors, the share of
/// the tolerance owed to deterministic quadrature, and the verdict
/// `|lhs - rhs| <= 3 * stderr_diff + quad_budget`.
///
/// `stderr_diff` is the standard error of the *discrepancy*: when both sides
/// are estimated on common paths it comes from the pathwise differences,
/// otherwise the two independent errors are combined in quadrature.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct IdentityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub stderr_lhs: f64,
    pub stderr_rhs: f64,
    pub stderr_diff: f64,
    pub quad_budget: f64,
    pub pass: bool,
}

impl IdentityReport {
    pub fn from_sides(lhs: Estimate, rhs: Estimate, stderr_diff: f64, quad_budget: f64) -> Self {
        let pass = (lhs.value - rhs.value).abs() <= 3.0 * stderr_diff + quad_budget;
        IdentityReport {
            lhs: lhs.value,
            rhs: rhs.value,
            stderr_lhs: lhs.stderr,
            stderr_rhs: rhs.stderr,
            stderr_diff,
            quad_budget,
            pass,
        }
    }

    /// Swaps the roles of the two sides (the verdict is symmetric).
    pub fn flipped(self) -> Self {
        IdentityReport {
            lhs: self.rhs,
            rhs: self.lhs,
            stderr_lhs: self.stderr_rhs,
            stderr_rhs: self.stderr_lhs,
            ..self
        }
    }
}

/// One grid resolution of a representation run.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConvergenceRow {
    pub n_steps: usize,
    pub paths: usize,
    pub mean_f: f64,
    pub mean_f_stderr: f64,
    pub l1_error: f64,
    pub l1_stderr: f64,
    pub l2_error: f64,
}

/// Outcome of a full representation check `f = E[f] + int H dW`.
///
/// The headline numbers come from the finest grid; `convergence` holds the
/// coarser resolutions run with the same seeds and path budget.
#[derive(Clone, Debug, Serialize)]
pub struct RepReport {
    pub expected_mean: f64,
    pub mean_f: f64,
    pub mean_f_stderr: f64,
    pub repr_error_l1: f64,
    pub repr_error_l1_stderr: f64,
    pub repr_error_l2: f64,
    pub l1_tolerance: f64,
    /// Running-maximum specs: whether the integrand was exactly zero after
    /// the hitting time on every path of the finest grid.
    pub integrand_zero_after_hit: Option<bool>,
    pub convergence: Vec<ConvergenceRow>,
    pub pass: bool,
}

impl RepReport {
    pub fn row(&self, n_steps: usize) -> Option<&ConvergenceRow> {
        self.convergence.iter().find(|r| r.n_steps == n_steps)
    }
}

/// Integrability diagnostic: `int_0^T E|H_s| ds` against its theoretical
/// ceiling `sqrt(T) * (xi-weighted total variation)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundReport {
    pub integral_estimate: f64,
    pub stderr: f64,
    pub tv_weighted: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Kernel integrand versus the conditional-expectation closed form at fixed
/// probe prefixes (no Monte Carlo on either side).
#[derive(Clone, Debug, Serialize)]
pub struct ProjectionReport {
    /// (prefix Wiener integral, kernel pairing, closed form) per probe.
    pub probes: Vec<(f64, f64, f64)>,
    pub sup_discrepancy: f64,
}

/// One entry of the level-set total-variation sequence.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TvEstimate {
    pub n: u32,
    pub value: f64,
    pub stderr: f64,
}

/// Empirical Orlicz norm of `E[f | dyadic level n] - f` at one level.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LevelNorm {
    pub level: u32,
    pub norm: f64,
    pub stderr: f64,
}

/// Outcome of the Young-pairing inequality check `E|XY| <= C(Y) ||X||`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PairingReport {
    pub e_abs_xy: f64,
    pub stderr: f64,
    pub lux_norm_x: f64,
    pub constant: f64,
    pub pass: bool,
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from("n_steps,paths,l1_error,l2_error,stderr\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.n_steps, r.paths, r.l1_error, r.l2_error, r.l1_stderr
        ));
    }
    out
}

pub fn orlicz_csv(rows: &[LevelNorm]) -> String {
    let mut out = String::from("level,norm,stderr\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.level, r.norm, r.stderr));
    }
    out
}

pub fn tv_csv(rows: &[TvEstimate]) -> String {
    let mut out = String::from("n,value,stderr\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.n, r.value, r.stderr));
    }
    out
}
