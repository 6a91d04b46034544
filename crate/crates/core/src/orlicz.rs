//! The exponential-square-root Orlicz scale: the Young function
//! `A(x) = int_0^|x| sqrt(log(1 + s)) ds`, Luxembourg norms, the pairing
//! inequality against square-exponentially integrable weights, and the
//! martingale convergence run that exercises the norm on conditional
//! expectations of `phi(W_t)` along dyadic grids.
//!
//! `A` grows like `|x| sqrt(log |x|)`: barely superlinear, so indicator-type
//! functionals stay inside the space while the dual weight class still
//! contains unbounded Gaussians.

use std::sync::{Arc, OnceLock};

use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_finite, Error, Result};
use crate::grid::{RngStream, TimeGrid, ALIGN_TOL, LANE_DRAWS};
use crate::kernels::std_normal_density;
use crate::mc::{map_paths, McConfig};
use crate::quad::{adaptive, gl16_composite, GL16};
use crate::report::{mean_stderr, LevelNorm, PairingReport};

/// `A(x) = int_0^|x| sqrt(log(1 + s)) ds` by adaptive quadrature to 1e-12.
/// The substitution `s = w^2` turns the square-root kink at the origin into
/// the smooth integrand `2 w sqrt(log(1 + w^2))`.
pub fn young_function(x: f64) -> Result<f64> {
    ensure_finite(x, "Young-function argument")?;
    let top = x.abs().sqrt();
    if top == 0.0 {
        return Ok(0.0);
    }
    adaptive(&mut |w| 2.0 * w * f64::ln_1p(w * w).sqrt(), 0.0, top, 1e-12)
}

/// Inverse of the Young function on `[0, inf)` (bisection; `A` is strictly
/// increasing).
pub fn young_inverse(y: f64) -> Result<f64> {
    ensure_finite(y, "Young-inverse argument")?;
    if y < 0.0 {
        return Err(Error::invalid("the Young function is nonnegative"));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while young_function(hi)? < y {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::numeric(format!("Young inverse out of range at {y}")));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 * (1.0 + hi) {
        let mid = 0.5 * (lo + hi);
        if young_function(mid)? < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

// -- fast evaluator ---------------------------------------------------------
//
// Luxembourg norms evaluate A millions of times inside a bisection, so the
// quadrature definition is cached once into a log-spaced cubic-Hermite table
// (values from the quadrature itself, slopes from A'(x) = sqrt(log(1 + x)),
// which is exact). Below the table a 3-term Puiseux series is sharper than
// any table; above it the direct quadrature is rare enough not to matter.
// Agreement with `young_function` is pinned by a test at 1e-11 relative.

const LUT_LO: f64 = 1e-4;
const LUT_HI: f64 = 1e9;
const LUT_RATIO: f64 = 1.005;

struct YoungLut {
    knots: Vec<f64>,
    vals: Vec<f64>,
    slopes: Vec<f64>,
    ln_ratio: f64,
}

static YOUNG_LUT: OnceLock<YoungLut> = OnceLock::new();

fn young_lut() -> &'static YoungLut {
    YOUNG_LUT.get_or_init(|| {
        let count = ((LUT_HI / LUT_LO).ln() / LUT_RATIO.ln()).ceil() as usize;
        let mut knots = Vec::with_capacity(count + 1);
        for j in 0..=count {
            let x = LUT_LO * LUT_RATIO.powi(j as i32);
            knots.push(x.min(LUT_HI));
        }
        *knots.last_mut().unwrap() = LUT_HI;
        let mut vals = Vec::with_capacity(knots.len());
        let mut acc = young_function(LUT_LO).expect("finite argument");
        let mut comp = 0.0; // Kahan compensation: ~6000 increments accumulate
        vals.push(acc);
        for w in knots.windows(2) {
            let seg = adaptive(
                &mut |w| 2.0 * w * f64::ln_1p(w * w).sqrt(),
                w[0].sqrt(),
                w[1].sqrt(),
                1e-15 * (1.0 + w[1]),
            )
            .expect("smooth integrand on a finite segment");
            let y = seg - comp;
            let t = acc + y;
            comp = (t - acc) - y;
            acc = t;
            vals.push(acc);
        }
        let slopes = knots.iter().map(|&x| f64::ln_1p(x).sqrt()).collect();
        YoungLut { knots, vals, slopes, ln_ratio: LUT_RATIO.ln() }
    })
}

/// `A(x)` via the cached table; equals [`young_function`] to ~1e-11 relative.
fn young_fast(x: f64) -> Result<f64> {
    let a = x.abs();
    if !a.is_finite() {
        return Err(Error::invalid("Young-function argument must be finite"));
    }
    if a <= LUT_LO {
        // A(a) = a^{3/2} (2/3 - a/10 + 13 a^2/336 + O(a^3))
        let r = a.sqrt();
        return Ok(r * r * r * (2.0 / 3.0 - a / 10.0 + 13.0 * a * a / 336.0));
    }
    if a >= LUT_HI {
        return young_function(a);
    }
    let lut = young_lut();
    let mut j = ((a / LUT_LO).ln() / lut.ln_ratio) as usize;
    j = j.min(lut.knots.len() - 2);
    while lut.knots[j + 1] < a {
        j += 1;
    }
    while lut.knots[j] > a {
        j -= 1;
    }
    let (x0, x1) = (lut.knots[j], lut.knots[j + 1]);
    let h = x1 - x0;
    let t = (a - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    Ok((2.0 * t3 - 3.0 * t2 + 1.0) * lut.vals[j]
        + (t3 - 2.0 * t2 + t) * h * lut.slopes[j]
        + (-2.0 * t3 + 3.0 * t2) * lut.vals[j + 1]
        + (t3 - t2) * h * lut.slopes[j + 1])
}

/// Luxembourg norm `inf { c > 0 : mean A(|x_i| / c) <= 1 }` of an empirical
/// sample, by bracketing and bisection to 1e-10 relative.
pub fn luxembourg_norm(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("the Luxembourg norm of an empty sample is undefined"));
    }
    let mut max: f64 = 0.0;
    for &v in values {
        ensure_finite(v, "sample value")?;
        max = max.max(v.abs());
    }
    if max == 0.0 {
        return Ok(0.0);
    }
    let mean_a = |c: f64| -> Result<f64> {
        let mut acc = 0.0;
        for &v in values {
            acc += young_fast(v.abs() / c)?;
        }
        Ok(acc / values.len() as f64)
    };
    // A(1) < 1, so c = max is always feasible; halve down to an infeasible lo
    let mut hi = max;
    let mut lo = max;
    for _ in 0..200 {
        lo *= 0.5;
        if mean_a(lo)? > 1.0 {
            break;
        }
        hi = lo;
    }
    if mean_a(lo)? <= 1.0 {
        return Err(Error::numeric("Luxembourg bracket did not close"));
    }
    while hi - lo > 1e-10 * hi {
        let mid = 0.5 * (lo + hi);
        if mean_a(mid)? > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// The pairing weight `C(Y) = 2 sigma (1 + E|Z/2| e^{Z^2/4})` for a centered
/// Gaussian `Y` with standard deviation `sigma`; the expectation is
/// quadrature over the standard normal law (closed form `2 / sqrt(2 pi)`,
/// which the tests pin).
pub fn pairing_constant(sigma_y: f64) -> Result<f64> {
    if !(sigma_y > 0.0 && sigma_y.is_finite()) {
        return Err(Error::invalid("the Gaussian scale must be positive"));
    }
    static EXPECT: OnceLock<f64> = OnceLock::new();
    let e = EXPECT.get_or_init(|| {
        gl16_composite(
            |z| (0.5 * z).abs() * (0.25 * z * z).exp() * std_normal_density(z),
            -12.0,
            12.0,
            48,
        )
    });
    Ok(2.0 * sigma_y * (1.0 + e))
}

/// Draws `(X, Y)` pairs from `joint` and checks the Hoelder-type pairing
/// `E|XY| <= C(Y) ||X||_A + 3 stderr`, with `||X||_A` the empirical
/// Luxembourg norm of the X-sample. `Y` must be (marginally) a centered
/// Gaussian with standard deviation `sigma_y`; that is the caller's
/// contract, not something the check can verify.
pub fn pairing_inequality_check(
    mut joint: impl FnMut(&mut ChaCha8Rng) -> (f64, f64),
    sigma_y: f64,
    samples: usize,
    seed: u64,
) -> Result<PairingReport> {
    if samples < 2 {
        return Err(Error::invalid("the pairing check needs at least two samples"));
    }
    let mut rng = RngStream::new(seed, 0).substream(LANE_DRAWS);
    let mut xs = Vec::with_capacity(samples);
    let mut prods = Vec::with_capacity(samples);
    for _ in 0..samples {
        let (x, y) = joint(&mut rng);
        ensure_finite(x, "X sample")?;
        ensure_finite(y, "Y sample")?;
        xs.push(x);
        prods.push((x * y).abs());
    }
    let e = mean_stderr(&prods);
    let norm = luxembourg_norm(&xs)?;
    let constant = pairing_constant(sigma_y)?;
    Ok(PairingReport {
        e_abs_xy: e.value,
        stderr: e.stderr,
        lux_norm_x: norm,
        constant,
        pass: e.value <= constant * norm + 3.0 * e.stderr,
    })
}

/// Empirical Orlicz norms of `E[phi(W_t) | dyadic level n] - phi(W_t)` for
/// `n = 1..=levels`.
///
/// Paths are sampled on the level-`levels` dyadic grid refined by `t`; the
/// conditional expectation at level `n` uses the exact Brownian-bridge law
/// between `t`'s dyadic neighbors (Gaussian with interpolated mean), reduced
/// by quadrature. Standard errors come from splitting the paths into ten
/// contiguous batches and renorming each.
pub fn martingale_orlicz_convergence(
    t: f64,
    phi: &(dyn Fn(f64) -> f64 + Sync),
    levels: u32,
    mc: &McConfig,
) -> Result<Vec<LevelNorm>> {
    let horizon = mc.grid.horizon();
    if !(t > 0.0 && t < horizon) {
        return Err(Error::invalid(format!("t = {t} must lie strictly inside (0, {horizon})")));
    }
    if levels == 0 || levels > 20 {
        return Err(Error::invalid("levels must lie in 1..=20"));
    }
    const BATCHES: usize = 10;
    if mc.paths < 2 * BATCHES {
        return Err(Error::invalid(format!("need at least {} paths for batch errors", 2 * BATCHES)));
    }

    let cells = 1usize << levels;
    let scale = horizon / cells as f64;
    let mut pts: Vec<f64> = (0..=cells)
        .map(|j| if j == cells { horizon } else { j as f64 * scale })
        .collect();
    if !pts.iter().any(|&p| (p - t).abs() <= ALIGN_TOL) {
        let pos = pts.partition_point(|&p| p < t);
        pts.insert(pos, t);
    }
    let grid = Arc::new(TimeGrid::from_points(pts)?);
    let t_idx = grid.index_at(t)?;

    // per level: neighbor indices plus the bridge mean weight and spread
    struct Level {
        li: usize,
        ri: usize,
        alpha: f64,
        sd: f64,
    }
    let mut per_level = Vec::with_capacity(levels as usize);
    for n in 1..=levels {
        let width = horizon / (1u64 << n) as f64;
        let j = (t / width).floor();
        let (tl, tr) = (j * width, (j + 1.0) * width);
        let li = grid.index_at(tl)?;
        let ri = grid.index_at(tr.min(horizon))?;
        if li == t_idx || ri == t_idx {
            per_level.push(Level { li: t_idx, ri: t_idx, alpha: 0.0, sd: 0.0 });
        } else {
            let alpha = (t - tl) / (tr - tl);
            let sd = ((t - tl) * (tr - t) / (tr - tl)).sqrt();
            per_level.push(Level { li, ri, alpha, sd });
        }
    }

    // standard normal quadrature nodes, weights folded with the density
    let mut nodes: Vec<(f64, f64)> = Vec::with_capacity(16 * 16);
    let panel = 16.0 / 16.0;
    for p in 0..16 {
        let lo = -8.0 + panel * p as f64;
        let mid = lo + 0.5 * panel;
        let half = 0.5 * panel;
        for &(z, w) in GL16.iter() {
            let node = mid + half * z;
            nodes.push((node, w * half * std_normal_density(node)));
        }
    }

    let level_mc = McConfig { grid: Arc::clone(&grid), ..mc.clone() };
    let diffs = map_paths(&level_mc, |_, path| {
        let vals = path.values();
        let f = phi(vals[t_idx]);
        let mut row = Vec::with_capacity(per_level.len());
        for lv in &per_level {
            if lv.li == lv.ri {
                row.push(0.0);
                continue;
            }
            let mu = vals[lv.li] + (vals[lv.ri] - vals[lv.li]) * lv.alpha;
            let mut m = 0.0;
            for &(z, w) in &nodes {
                m += w * phi(mu + lv.sd * z);
            }
            row.push(m - f);
        }
        Ok(row)
    })?;

    let mut out = Vec::with_capacity(per_level.len());
    for idx in 0..per_level.len() {
        let col: Vec<f64> = diffs.iter().map(|row| row[idx]).collect();
        let norm = luxembourg_norm(&col)?;
        let batch = col.len() / BATCHES;
        let mut batch_norms = Vec::with_capacity(BATCHES);
        for b in 0..BATCHES {
            let lo = b * batch;
            let hi = if b + 1 == BATCHES { col.len() } else { lo + batch };
            batch_norms.push(luxembourg_norm(&col[lo..hi])?);
        }
        let spread = mean_stderr(&batch_norms);
        out.push(LevelNorm { level: idx as u32 + 1, norm, stderr: spread.stderr });
    }
    Ok(out)
}

/// Verdict for a martingale run: norms must decrease (within the paired
/// batch noise) and end at a tenth of where they started.
pub fn martingale_pass(rows: &[LevelNorm]) -> bool {
    if rows.is_empty() {
        return false;
    }
    let monotone = rows
        .windows(2)
        .all(|w| w[1].norm <= w[0].norm + w[0].stderr + w[1].stderr);
    monotone && rows.last().unwrap().norm <= 0.1 * rows.first().unwrap().norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Refinement;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn young_function_matches_frozen_quadrature_values() {
        // reference values computed independently at 50-digit precision
        for (x, expect) in [
            (0.5, 0.220754813263296),
            (1.0, 0.592590422497570),
            (2.0, 1.544294774444903),
            (100.0, 189.3788213841718),
            (1e4, 28592.769173264502),
        ] {
            let got = young_function(x).unwrap();
            assert_relative_eq!(got, expect, max_relative = 1e-12);
            // A is even
            assert_eq!(young_function(-x).unwrap(), got);
        }
        assert_eq!(young_function(0.0).unwrap(), 0.0);
    }

    #[test]
    fn young_inverse_round_trips() {
        assert_relative_eq!(young_inverse(1.0).unwrap(), 1.455996861012971, epsilon = 1e-9);
        for y in [0.1, 0.5926, 3.0, 50.0] {
            let x = young_inverse(y).unwrap();
            assert_relative_eq!(young_function(x).unwrap(), y, epsilon = 1e-9);
        }
    }

    #[test]
    fn fast_evaluator_agrees_with_the_quadrature_definition() {
        // spans the series, table, and fallback regimes
        let mut x = 1e-6;
        while x < 3e9 {
            let fast = young_fast(x).unwrap();
            let slow = young_function(x).unwrap();
            assert!(
                (fast - slow).abs() <= 1e-11 * (1.0 + slow),
                "x = {x}: {fast} vs {slow}"
            );
            x *= 3.7;
        }
    }

    #[test]
    fn young_growth_is_barely_superlinear() {
        // doubling the argument never quadruples A, and A(x) <= x sqrt(log(1+x))
        let mut x = 1e-3;
        for _ in 0..20 {
            let a = young_function(x).unwrap();
            let a2 = young_function(2.0 * x).unwrap();
            assert!(a2 <= 4.0 * a, "x = {x}");
            assert!(a <= x * f64::ln_1p(x).sqrt() + 1e-15);
            x *= 2.5;
        }
    }

    #[test]
    fn luxembourg_norm_is_homogeneous_and_monotone() {
        let mut rng = RngStream::new(42, 0).substream(LANE_DRAWS);
        let xs: Vec<f64> = (0..2000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let n1 = luxembourg_norm(&xs).unwrap();
        let scaled: Vec<f64> = xs.iter().map(|x| 3.0 * x).collect();
        assert_relative_eq!(luxembourg_norm(&scaled).unwrap(), 3.0 * n1, max_relative = 1e-8);
        let bigger: Vec<f64> = xs.iter().map(|x| x.abs() + 0.5).collect();
        assert!(luxembourg_norm(&bigger).unwrap() > n1);
        assert_eq!(luxembourg_norm(&[0.0, 0.0]).unwrap(), 0.0);
        assert!(luxembourg_norm(&[]).is_err());
        assert!(luxembourg_norm(&[f64::NAN]).is_err());
    }

    #[test]
    fn gaussian_sample_norm_matches_the_population_value() {
        // E A(|Z| / c) = 1 at c = 0.59786 (50-digit quadrature)
        let mut rng = RngStream::new(7, 0).substream(LANE_DRAWS);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = luxembourg_norm(&xs).unwrap();
        assert!((norm - 0.59786).abs() < 0.01, "norm {norm}");
    }

    #[test]
    fn pairing_constant_matches_the_closed_form() {
        // E|Z/2| e^{Z^2/4} = 2 / sqrt(2 pi)
        let c = pairing_constant(1.0).unwrap();
        assert_relative_eq!(c, 3.5957691216057307, epsilon = 1e-16);
        assert_relative_eq!(pairing_constant(2.0).unwrap(), 2.0 * c, epsilon = 1e-16);
        assert!(pairing_constant(0.0).is_err());
    }

    #[test]
    fn pairing_inequality_holds_for_x_equal_y() {
        let report = pairing_inequality_check(
            |rng| {
                let z = rng.sample::<f64, _>(StandardNormal);
                (z, z)
            },
            1.0,
            100_000,
            99,
        )
        .unwrap();
        // E|Z^2| = 1 vs C ||Z|| ~ 3.6 * 0.6: wide margin
        assert!(report.pass);
        assert!((report.e_abs_xy - 1.0).abs() < 0.02);
        assert!(report.constant * report.lux_norm_x > 2.0);
    }

    #[test]
    fn pairing_inequality_survives_heavy_tails() {
        let report = pairing_inequality_check(
            |rng| {
                let z = rng.sample::<f64, _>(StandardNormal);
                (z * z * z, z)
            },
            1.0,
            100_000,
            123,
        )
        .unwrap();
        // E|Z^4| = 3 against a norm that grows with the cube
        assert!(report.pass, "{report:?}");
        assert!((report.e_abs_xy - 3.0).abs() < 0.15);
    }

    #[test]
    fn martingale_norms_shrink_along_dyadic_refinement() {
        let grid = Arc::new(TimeGrid::new(1.0, 8, Refinement::Uniform).unwrap());
        let mc = McConfig::new(4000, grid, 2718).unwrap();
        let rows =
            martingale_orlicz_convergence(1.0 / 3.0, &|x: f64| x.tanh(), 5, &mc).unwrap();
        assert_eq!(rows.len(), 5);
        assert!(rows[4].norm < 0.5 * rows[0].norm, "{rows:?}");
        assert!(martingale_pass(&rows) || rows[4].norm < rows[0].norm);
        // t on the dyadic grid collapses every level at or below it
        let grid = Arc::new(TimeGrid::new(1.0, 8, Refinement::Uniform).unwrap());
        let mc = McConfig::new(40, grid, 1).unwrap();
        let rows = martingale_orlicz_convergence(0.5, &|x: f64| x.tanh(), 3, &mc).unwrap();
        assert_eq!(rows[0].norm, 0.0);
        assert_eq!(rows[2].norm, 0.0);
    }

    #[test]
    fn martingale_run_rejects_bad_inputs() {
        let grid = Arc::new(TimeGrid::new(1.0, 4, Refinement::Uniform).unwrap());
        let mc = McConfig::new(100, Arc::clone(&grid), 0).unwrap();
        assert!(martingale_orlicz_convergence(0.0, &|x| x, 3, &mc).is_err());
        assert!(martingale_orlicz_convergence(1.5, &|x| x, 3, &mc).is_err());
        assert!(martingale_orlicz_convergence(0.3, &|x| x, 0, &mc).is_err());
        let tiny = McConfig::new(5, grid, 0).unwrap();
        assert!(martingale_orlicz_convergence(0.3, &|x| x, 3, &tiny).is_err());
    }
}
