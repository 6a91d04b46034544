//! Time grids, exact Brownian sampling, and the bridge corrections for
//! running maxima and hitting times.
//!
//! Increments are drawn from their exact Gaussian law (no Euler scheme), so
//! the only discretization anywhere is the left-point Ito sum itself. Paths
//! are reproducible from a `(master seed, path index)` pair; independent
//! lanes keep increment draws and bridge draws on separate substreams so
//! operations that must share a bridge draw can do so by reusing a lane.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure_finite, Error, Result};
use crate::step::StepFunction;

/// Absolute snap tolerance when matching user times against grid points.
pub const ALIGN_TOL: f64 = 1e-9;

/// Substream lane for Gaussian increments.
pub const LANE_INCREMENTS: u32 = 0;
/// Substream lane for Brownian-bridge uniforms (interval maxima).
pub const LANE_BRIDGE: u32 = 1;
/// Substream lane for conditional-law draws (no path attached).
pub const LANE_CONDITIONAL: u32 = 2;
/// Substream lane for generic scalar sampling.
pub const LANE_DRAWS: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Refinement {
    Uniform,
    /// Gaps shrink toward the horizon with the given ratio in (0, 1),
    /// clustering points where the representation kernels blow up.
    GeometricTerminal(f64),
    /// Caller-supplied points (no rebuilding at other resolutions).
    Explicit,
}

#[derive(Clone, Debug)]
pub struct TimeGrid {
    points: Vec<f64>,
    refinement: Refinement,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize, refinement: Refinement) -> Result<Self> {
        ensure_finite(horizon, "horizon")?;
        if horizon <= 0.0 {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if n_steps == 0 {
            return Err(Error::invalid("grid needs at least one step"));
        }
        let points = match refinement {
            Refinement::Uniform => {
                let mut pts: Vec<f64> = (0..=n_steps)
                    .map(|i| horizon * i as f64 / n_steps as f64)
                    .collect();
                *pts.last_mut().unwrap() = horizon;
                pts
            }
            Refinement::GeometricTerminal(ratio) => {
                if !(ratio > 0.0 && ratio < 1.0) {
                    return Err(Error::invalid(format!(
                        "geometric-terminal ratio must lie in (0, 1), got {ratio}"
                    )));
                }
                geometric_terminal_points(horizon, n_steps, ratio)?
            }
            Refinement::Explicit => {
                return Err(Error::invalid(
                    "explicit refinement requires TimeGrid::from_points",
                ))
            }
        };
        let grid = TimeGrid { points, refinement };
        grid.check_monotone()?;
        Ok(grid)
    }

    /// Grid over caller-supplied points (must start at 0, strictly increase).
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("grid needs at least two points"));
        }
        if points[0] != 0.0 {
            return Err(Error::invalid(format!("grid must start at 0, got {}", points[0])));
        }
        if !points.iter().all(|p| p.is_finite()) {
            return Err(Error::invalid("grid points must be finite"));
        }
        let grid = TimeGrid { points, refinement: Refinement::Explicit };
        grid.check_monotone()?;
        Ok(grid)
    }

    fn check_monotone(&self) -> Result<()> {
        for w in self.points.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::numeric(format!(
                    "grid points not strictly increasing near t = {}",
                    w[0]
                )));
            }
        }
        Ok(())
    }

    /// Same horizon and refinement rule at a different resolution.
    pub fn with_steps(&self, n_steps: usize) -> Result<TimeGrid> {
        if n_steps == self.n_steps() {
            return Ok(self.clone());
        }
        match self.refinement {
            Refinement::Explicit => Err(Error::invalid(
                "explicit grids cannot be rebuilt at another resolution",
            )),
            r => TimeGrid::new(self.horizon(), n_steps, r),
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn horizon(&self) -> f64 {
        *self.points.last().unwrap()
    }

    pub fn n_steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn refinement(&self) -> Refinement {
        self.refinement
    }

    pub fn gap(&self, i: usize) -> f64 {
        self.points[i + 1] - self.points[i]
    }

    /// Index of the grid point matching `t` within the snap tolerance.
    pub fn index_at(&self, t: f64) -> Result<usize> {
        let i = self.points.partition_point(|&p| p < t);
        for cand in [i.saturating_sub(1), i] {
            if cand < self.points.len() && (self.points[cand] - t).abs() <= ALIGN_TOL {
                return Ok(cand);
            }
        }
        Err(Error::alignment(format!("time {t} is not a grid point")))
    }

    /// The level of `k` on each grid interval `]s_i, s_{i+1}]`, after
    /// validating that every breakpoint of `k` lands on a grid point.
    pub fn interval_levels(&self, k: &StepFunction) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_steps()];
        if k.breakpoints().is_empty() {
            return Ok(out);
        }
        let idx: Vec<usize> = k
            .breakpoints()
            .iter()
            .map(|&b| self.index_at(b))
            .collect::<Result<_>>()?;
        for j in 0..k.levels().len() {
            for slot in &mut out[idx[j]..idx[j + 1]] {
                *slot = k.levels()[j];
            }
        }
        Ok(out)
    }
}

/// Geometric-terminal point construction.
///
/// When the literal geometric sequence keeps its smallest gap above a
/// representability floor, it is used exactly (`s_i = T (1-r^i)/(1-r^n)`).
/// Beyond that the sequence would collapse in f64 near the horizon, so the
/// construction switches to a graded hybrid: block boundaries sit at
/// distances `T r^j` from the horizon (block ratio still `r`) and each block
/// is subdivided uniformly, longest blocks first, so gap size stays
/// proportional to distance-from-horizon.
fn geometric_terminal_points(horizon: f64, n: usize, r: f64) -> Result<Vec<f64>> {
    let one_minus_rn = 1.0 - r.powi(n as i32);
    let last_gap = horizon * r.powi(n as i32 - 1) * (1.0 - r) / one_minus_rn;
    if last_gap >= horizon * (2f64).powi(-48) {
        let mut pts = Vec::with_capacity(n + 1);
        let mut ri = 1.0;
        for _ in 0..n {
            pts.push(horizon * (1.0 - ri) / one_minus_rn);
            ri *= r;
        }
        pts.push(horizon);
        return Ok(pts);
    }

    // hybrid: pick the largest block count whose final sub-gap stays safe
    let floor = (2f64).powi(-46);
    let mut blocks = 1usize;
    while blocks < n {
        let next = blocks + 1;
        let per_block = (n as f64 / next as f64).ceil();
        if r.powi(next as i32 - 1) < per_block * floor {
            break;
        }
        blocks = next;
    }
    let q = n / blocks;
    let rem = n % blocks;
    let mut pts = Vec::with_capacity(n + 1);
    // walk distances-to-horizon downward; block j spans [T r^(j+1), T r^j]
    let mut u_hi = horizon;
    for j in 0..blocks {
        let u_lo = if j + 1 == blocks { 0.0 } else { horizon * r.powi(j as i32 + 1) };
        let count = q + usize::from(j < rem);
        for l in 0..count {
            let u = u_hi + (u_lo - u_hi) * l as f64 / count as f64;
            pts.push(horizon - u);
        }
        u_hi = u_lo;
    }
    pts.push(horizon);
    Ok(pts)
}

/// Counter-style RNG stream: every `(master seed, path index)` pair owns
/// independent substream lanes, so parallel and serial execution draw the
/// same numbers for the same path.
#[derive(Clone, Copy, Debug)]
pub struct RngStream {
    pub master_seed: u64,
    pub index: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64, index: u64) -> Self {
        RngStream { master_seed, index }
    }

    pub fn substream(&self, lane: u32) -> ChaCha8Rng {
        let mut state = self.master_seed;
        let _ = splitmix64(&mut state);
        state ^= self.index.wrapping_mul(0xA24B_AED4_963E_E407);
        let _ = splitmix64(&mut state);
        state ^= u64::from(lane).wrapping_mul(0x9FB2_1C65_1E98_DF25);
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

/// A Brownian path sampled at the grid points, `W(0) = 0`.
#[derive(Clone, Debug)]
pub struct BrownianPath {
    grid: Arc<TimeGrid>,
    values: Vec<f64>,
}

/// Exact-increment sampling on the grid (lane [`LANE_INCREMENTS`]).
pub fn sample_path(grid: &Arc<TimeGrid>, stream: &RngStream) -> BrownianPath {
    let mut rng = stream.substream(LANE_INCREMENTS);
    let mut values = Vec::with_capacity(grid.points().len());
    values.push(0.0);
    let mut w = 0.0;
    for i in 0..grid.n_steps() {
        let z: f64 = rng.sample(StandardNormal);
        w += grid.gap(i).sqrt() * z;
        values.push(w);
    }
    BrownianPath { grid: Arc::clone(grid), values }
}

impl BrownianPath {
    pub fn from_values(grid: Arc<TimeGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.points().len() {
            return Err(Error::invalid(format!(
                "path has {} values for {} grid points",
                values.len(),
                grid.points().len()
            )));
        }
        if values[0] != 0.0 {
            return Err(Error::invalid("Brownian path must start at 0"));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("path values must be finite"));
        }
        Ok(BrownianPath { grid, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Left-point Wiener integral `int k dW = sum k(s_i) (W_{s_{i+1}} - W_{s_i})`,
    /// exact for step functions whose breakpoints lie on the grid.
    pub fn wiener_integral(&self, k: &StepFunction) -> Result<f64> {
        let levels = self.grid.interval_levels(k)?;
        let mut acc = 0.0;
        for (i, lev) in levels.iter().enumerate() {
            acc += lev * (self.values[i + 1] - self.values[i]);
        }
        Ok(acc)
    }

    /// The same path reflected through 0 (useful for symmetry checks).
    pub fn negated(&self) -> BrownianPath {
        BrownianPath {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|v| -v).collect(),
        }
    }
}

/// Running maximum of a path, optionally bridge-corrected.
#[derive(Clone, Debug)]
pub struct MaxRecord {
    /// `M_{[0, s_i]}` per grid point.
    pub running_max: Vec<f64>,
    pub overall: f64,
    /// Grid point achieving the max, or the midpoint of the bridge interval
    /// that supplied it (grid-resolution diagnostic only).
    pub argmax_time: f64,
}

/// Conditional maximum of a Brownian bridge over an interval of length `gap`
/// with endpoint values `a`, `b`, inverted from `P(max <= m) =
/// 1 - exp(-2 (m-a)(m-b)/gap)` at the uniform draw `u` in (0, 1].
pub fn bridge_interval_max(a: f64, b: f64, gap: f64, u: f64) -> f64 {
    0.5 * (a + b + ((b - a) * (b - a) - 2.0 * gap * u.ln()).sqrt())
}

fn draw_unit_open<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>() // (0, 1]
}

/// Running maximum at every grid point. With `bridge`, each interval's
/// conditional maximum is drawn from the exact bridge law (one uniform per
/// interval, in grid order), so the overall maximum has the law of the
/// continuous-time maximum.
pub fn running_max<R: Rng + ?Sized>(path: &BrownianPath, bridge: bool, rng: &mut R) -> MaxRecord {
    let pts = path.grid().points();
    let vals = path.values();
    let mut run = Vec::with_capacity(vals.len());
    run.push(0.0);
    let mut best = 0.0;
    let mut best_time = pts[0];
    for i in 1..vals.len() {
        let cand;
        let cand_time;
        if bridge {
            let u = draw_unit_open(rng);
            cand = bridge_interval_max(vals[i - 1], vals[i], pts[i] - pts[i - 1], u);
            cand_time = 0.5 * (pts[i - 1] + pts[i]);
        } else {
            cand = vals[i];
            cand_time = pts[i];
        }
        if cand > best {
            best = cand;
            best_time = cand_time;
        }
        run.push(best);
    }
    MaxRecord { running_max: run, overall: best, argmax_time: best_time }
}

/// First time the path reaches level `y`, or `None` if it never does before
/// the horizon.
///
/// With `bridge`, crossings inside an interval are detected from the same
/// bridge-max law as [`running_max`] (one uniform per interval, grid order):
/// feeding both functions RNGs with identical state yields `hit != None`
/// exactly when the bridge-corrected maximum reaches `y`. The reported time
/// interpolates linearly to the level — between the endpoints when the right
/// endpoint already exceeds `y`, otherwise between the nearer endpoint and
/// the interval midpoint standing in for the maximum's time; only the event
/// `{hit before T}` is exact, the timestamp is a grid-resolution heuristic.
pub fn hitting_time<R: Rng + ?Sized>(
    path: &BrownianPath,
    y: f64,
    bridge: bool,
    rng: &mut R,
) -> Option<f64> {
    let pts = path.grid().points();
    let vals = path.values();
    if y <= 0.0 {
        return Some(pts[0]);
    }
    for i in 1..vals.len() {
        let (a, b) = (vals[i - 1], vals[i]);
        if bridge {
            let gap = pts[i] - pts[i - 1];
            let u = draw_unit_open(rng);
            let m = bridge_interval_max(a, b, gap, u);
            if m >= y {
                let t = if b >= y {
                    pts[i - 1] + gap * (y - a) / (b - a)
                } else {
                    let mid = 0.5 * (pts[i - 1] + pts[i]);
                    if a >= b {
                        pts[i - 1] + (mid - pts[i - 1]) * (y - a) / (m - a)
                    } else {
                        pts[i] - (pts[i] - mid) * (y - b) / (m - b)
                    }
                };
                return Some(t);
            }
        } else if b >= y {
            return Some(pts[i]);
        }
    }
    None
}
