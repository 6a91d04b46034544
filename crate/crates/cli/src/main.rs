//! Command-line front door: runs the verification suites and emits their
//! reports as JSON or plot-ready CSV. All randomness flows from `--seed`;
//! identical (seed, workers) settings produce byte-identical output files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use wiener_bv::chain::{chain_rule_check_phi, lhs_levelset_scan, rhs_levelset};
use wiener_bv::clark::{verify_representation, FunctionalSpec};
use wiener_bv::functional::{ibp_check, Cylindrical, Direction};
use wiener_bv::grid::{Refinement, TimeGrid};
use wiener_bv::kernels::NormalizedDirection;
use wiener_bv::mc::McConfig;
use wiener_bv::measure::{tv_estimate_level_set, BvFunction, MeasureSpec, TvMode};
use wiener_bv::orlicz::{luxembourg_norm, martingale_orlicz_convergence, martingale_pass};
use wiener_bv::report::{convergence_csv, orlicz_csv, tv_csv};
use wiener_bv::step::StepFunction;
use wiener_bv::Error;

#[derive(Parser)]
#[command(
    name = "wiener-bv",
    version,
    about = "Monte Carlo and quadrature checks for stochastic-integral \
             representations of bounded-variation functionals of Brownian motion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Sampling and output settings shared by every command.
#[derive(Args, Clone)]
struct RunOpts {
    /// Time horizon
    #[arg(long = "T", default_value_t = 1.0)]
    horizon: f64,
    /// Grid steps
    #[arg(long, default_value_t = 4096)]
    steps: usize,
    /// Grid refinement: uniform | geo:RATIO
    #[arg(long, default_value = "uniform")]
    refine: String,
    /// Monte Carlo paths
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    /// Master seed; everything random derives from it
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Within-interval maximum sampling: on | off
    #[arg(long, default_value = "off")]
    bridge: String,
    /// Output path (for `represent`, a stem: writes <out>.json and <out>.csv)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format for --out
    #[arg(long, default_value = "json", value_parser = ["json", "csv"])]
    format: String,
}

#[derive(Subcommand)]
enum Command {
    /// Verify f = E[f] + int_0^T H_s dW_s on a refinement ladder
    Represent {
        #[command(subcommand)]
        target: RepresentTarget,
    },
    /// Level-set chain rule and general BV pairing checks
    Chain {
        #[command(subcommand)]
        target: ChainTarget,
    },
    /// Luxembourg norms and the dyadic martingale convergence run
    Orlicz {
        #[command(subcommand)]
        target: OrliczTarget,
    },
    /// Integration-by-parts identity on a fixed smooth preset triple
    Ibp {
        #[command(flatten)]
        run: RunOpts,
    },
    /// Level-set total-variation sequence n P(g in ]x, x+1/n])
    Tv {
        /// Level
        #[arg(long, default_value_t = 0.0)]
        x: f64,
        /// Window counts
        #[arg(long, value_delimiter = ',', default_value = "1,10,100,1000")]
        n: Vec<u32>,
        /// Estimate by Monte Carlo instead of quadrature (and cross-check)
        #[arg(long)]
        mc: bool,
        #[command(flatten)]
        run: RunOpts,
    },
}

#[derive(Subcommand)]
enum RepresentTarget {
    /// Indicator of W_t > 0
    Digital {
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        /// L1 residual tolerance
        #[arg(long, default_value_t = 0.05)]
        l1_tol: f64,
        #[command(flatten)]
        run: RunOpts,
    },
    /// Indicator of the running maximum reaching y
    Barrier {
        #[arg(long, default_value_t = 1.0)]
        y: f64,
        #[arg(long, default_value_t = 0.08)]
        l1_tol: f64,
        #[command(flatten)]
        run: RunOpts,
    },
    /// Functional from a measure-spec JSON file
    Custom {
        /// Path to the measure spec (base value, atoms, optional density)
        #[arg(long)]
        spec: PathBuf,
        /// Apply the measure to the running maximum instead of the
        /// normalized-window integral W(k), k = 1_{]0,T]} / sqrt(T)
        #[arg(long)]
        running_max: bool,
        #[arg(long, default_value_t = 0.1)]
        l1_tol: f64,
        #[command(flatten)]
        run: RunOpts,
    },
}

#[derive(Subcommand)]
enum ChainTarget {
    /// E[1_{W(k) > x} d*_h u] vs rho(x) <k, h'> E[u | W(k) = x] with u == 1
    Levelset {
        /// Levels to probe
        #[arg(long, value_delimiter = ',', default_value = "0")]
        x: Vec<f64>,
        /// Window of the (normalized) direction k, as LO:HI
        #[arg(long, default_value = "full")]
        k_window: String,
        /// Window of h', as LO:HI (defaults to the k window)
        #[arg(long)]
        h_window: Option<String>,
        #[command(flatten)]
        run: RunOpts,
    },
    /// Two-sided pairing for a BV function from a measure-spec JSON file,
    /// with u = tanh of the first-quarter increment and h' = k
    Pairing {
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        run: RunOpts,
    },
}

#[derive(Subcommand)]
enum OrliczTarget {
    /// Orlicz norms of E[tanh(W_t) | dyadic level n] - tanh(W_t)
    Martingale {
        #[arg(long, default_value_t = 1.0 / 3.0)]
        t: f64,
        #[arg(long, default_value_t = 8)]
        levels: u32,
        #[command(flatten)]
        run: RunOpts,
    },
    /// Luxembourg norm of a sample (JSON array of numbers)
    Norm {
        #[arg(long)]
        values: PathBuf,
        #[command(flatten)]
        run: RunOpts,
    },
}

// -- plumbing -----------------------------------------------------------------

enum AppError {
    Input(String),
    Numeric(String),
}

impl From<Error> for AppError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::Alignment(_) => AppError::Input(e.to_string()),
            Error::Numeric(_) | Error::Conditioning(_) => AppError::Numeric(e.to_string()),
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Input(e.to_string())
    }
}

impl From<serde_json::Error> for AppError {
    fn from(e: serde_json::Error) -> Self {
        AppError::Input(e.to_string())
    }
}

fn input_err(msg: impl Into<String>) -> AppError {
    AppError::Input(msg.into())
}

impl RunOpts {
    fn refinement(&self) -> Result<Refinement, AppError> {
        if self.refine == "uniform" {
            Ok(Refinement::Uniform)
        } else if let Some(ratio) = self.refine.strip_prefix("geo:") {
            let r: f64 = ratio
                .parse()
                .map_err(|_| input_err(format!("bad refinement ratio {ratio:?}")))?;
            Ok(Refinement::GeometricTerminal(r))
        } else {
            Err(input_err(format!(
                "unknown refinement {:?}; expected uniform or geo:RATIO",
                self.refine
            )))
        }
    }

    fn bridge_flag(&self) -> Result<bool, AppError> {
        match self.bridge.as_str() {
            "on" => Ok(true),
            "off" => Ok(false),
            other => Err(input_err(format!("--bridge takes on or off, got {other:?}"))),
        }
    }

    fn mc(&self) -> Result<McConfig, AppError> {
        let grid = Arc::new(TimeGrid::new(self.horizon, self.steps, self.refinement()?)?);
        Ok(McConfig::new(self.paths, grid, self.seed)?
            .with_workers(self.workers)?
            .with_bridge(self.bridge_flag()?))
    }

    /// Emit the primary artifact: to `--out` in the chosen format, else
    /// pretty JSON on stdout.
    fn emit<T: Serialize>(&self, report: &T, csv: Option<String>) -> Result<(), AppError> {
        match &self.out {
            Some(path) => {
                let body = match self.format.as_str() {
                    "csv" => csv.ok_or_else(|| {
                        input_err("this command has no CSV form; use --format json")
                    })?,
                    _ => serde_json::to_string_pretty(report)? + "\n",
                };
                fs::write(path, body)?;
            }
            None => println!("{}", serde_json::to_string_pretty(report)?),
        }
        Ok(())
    }
}

fn parse_window(text: &str, horizon: f64) -> Result<(f64, f64), AppError> {
    if text == "full" {
        return Ok((0.0, horizon));
    }
    let (lo, hi) = text
        .split_once(':')
        .ok_or_else(|| input_err(format!("window {text:?} must be LO:HI")))?;
    let lo: f64 = lo.parse().map_err(|_| input_err(format!("bad window bound {lo:?}")))?;
    let hi: f64 = hi.parse().map_err(|_| input_err(format!("bad window bound {hi:?}")))?;
    Ok((lo, hi))
}

fn read_measure(path: &Path) -> Result<BvFunction, AppError> {
    let text = fs::read_to_string(path)
        .map_err(|e| input_err(format!("cannot read {}: {e}", path.display())))?;
    let spec: MeasureSpec = serde_json::from_str(&text)?;
    Ok(BvFunction::from_measure_spec(&spec)?)
}

fn uniform_direction(horizon: f64) -> Result<NormalizedDirection, AppError> {
    Ok(NormalizedDirection::normalized(StepFunction::indicator(0.0, horizon)?)?)
}

// -- commands -------------------------------------------------------------------

fn cmd_represent(target: RepresentTarget) -> Result<bool, AppError> {
    let (spec, run, l1_tol) = match target {
        RepresentTarget::Digital { t, l1_tol, run } => {
            (FunctionalSpec::digital(t, run.horizon)?, run, l1_tol)
        }
        RepresentTarget::Barrier { y, l1_tol, run } => {
            (FunctionalSpec::barrier(y)?, run, l1_tol)
        }
        RepresentTarget::Custom { spec, running_max, l1_tol, run } => {
            let phi = read_measure(&spec)?;
            let spec = if running_max {
                FunctionalSpec::running_max(phi)
            } else {
                FunctionalSpec::cylindrical(uniform_direction(run.horizon)?, phi)
            };
            (spec, run, l1_tol)
        }
    };
    let mc = run.mc()?;
    let report = verify_representation(&spec, &mc, l1_tol)?;
    match &run.out {
        Some(stem) => {
            let json = serde_json::to_string_pretty(&report)? + "\n";
            fs::write(stem.with_extension("json"), json)?;
            fs::write(stem.with_extension("csv"), convergence_csv(&report.convergence))?;
        }
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(report.pass)
}

#[derive(Serialize)]
struct LevelsetRow {
    x: f64,
    lhs: f64,
    lhs_stderr: f64,
    rhs: f64,
    rhs_stderr: f64,
    pass: bool,
}

#[derive(Serialize)]
struct LevelsetReport {
    rows: Vec<LevelsetRow>,
    pass: bool,
}

fn levelset_csv(rows: &[LevelsetRow]) -> String {
    let mut out = String::from("x,lhs,lhs_stderr,rhs,rhs_stderr,pass\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.x, r.lhs, r.lhs_stderr, r.rhs, r.rhs_stderr, r.pass
        ));
    }
    out
}

fn cmd_chain(target: ChainTarget) -> Result<bool, AppError> {
    match target {
        ChainTarget::Levelset { x, k_window, h_window, run } => {
            let (klo, khi) = parse_window(&k_window, run.horizon)?;
            let dir = NormalizedDirection::normalized(StepFunction::indicator(klo, khi)?)?;
            let (hlo, hhi) = match &h_window {
                Some(w) => parse_window(w, run.horizon)?,
                None => (klo, khi),
            };
            let h = Direction::new(StepFunction::indicator(hlo, hhi)?);
            let u = Cylindrical::constant(1.0, run.horizon)?;
            let mc = run.mc()?;
            let lhs = lhs_levelset_scan(&dir, &u, &h, &x, &mc)?;
            let mut rows = Vec::with_capacity(x.len());
            for (&xi, l) in x.iter().zip(&lhs) {
                let r = rhs_levelset(&dir, &u, &h, xi, mc.paths, mc.seed)?;
                let se = (l.stderr.powi(2) + r.stderr.powi(2)).sqrt();
                rows.push(LevelsetRow {
                    x: xi,
                    lhs: l.value,
                    lhs_stderr: l.stderr,
                    rhs: r.value,
                    rhs_stderr: r.stderr,
                    pass: (l.value - r.value).abs() <= 3.0 * se + 1e-12,
                });
            }
            let pass = rows.iter().all(|r| r.pass);
            let report = LevelsetReport { rows, pass };
            run.emit(&report, Some(levelset_csv(&report.rows)))?;
            Ok(pass)
        }
        ChainTarget::Pairing { spec, run } => {
            let phi = read_measure(&spec)?;
            let quarter = run.horizon / 4.0;
            if run.steps % 4 != 0 || run.refinement()? != Refinement::Uniform {
                return Err(input_err(
                    "the pairing preset conditions on the first-quarter increment; \
                     use a uniform grid with steps divisible by 4",
                ));
            }
            let dir = uniform_direction(run.horizon)?;
            let h = Direction::new(dir.k().clone());
            let u = Cylindrical::of_increment(0.0, quarter, |v| v.tanh(), |v| {
                1.0 - v.tanh().powi(2)
            })?;
            let mc = run.mc()?;
            let report = chain_rule_check_phi(&dir, &phi, &u, &h, &mc)?;
            run.emit(&report, None)?;
            Ok(report.identity.pass && report.bound_ok)
        }
    }
}

fn cmd_orlicz(target: OrliczTarget) -> Result<bool, AppError> {
    match target {
        OrliczTarget::Martingale { t, levels, run } => {
            let mc = run.mc()?;
            let rows = martingale_orlicz_convergence(t, &|v: f64| v.tanh(), levels, &mc)?;
            let pass = martingale_pass(&rows);
            #[derive(Serialize)]
            struct MartingaleReport {
                rows: Vec<wiener_bv::report::LevelNorm>,
                pass: bool,
            }
            let report = MartingaleReport { rows, pass };
            run.emit(&report, Some(orlicz_csv(&report.rows)))?;
            Ok(pass)
        }
        OrliczTarget::Norm { values, run } => {
            let text = fs::read_to_string(&values)
                .map_err(|e| input_err(format!("cannot read {}: {e}", values.display())))?;
            let sample: Vec<f64> = serde_json::from_str(&text)?;
            let norm = luxembourg_norm(&sample)?;
            #[derive(Serialize)]
            struct NormReport {
                samples: usize,
                norm: f64,
            }
            let report = NormReport { samples: sample.len(), norm };
            let csv = format!("samples,norm\n{},{}\n", report.samples, report.norm);
            run.emit(&report, Some(csv))?;
            Ok(true)
        }
    }
}

fn cmd_ibp(run: RunOpts) -> Result<bool, AppError> {
    if run.steps % 2 != 0 || run.refinement()? != Refinement::Uniform {
        return Err(input_err(
            "the preset triple uses the first-half increment; \
             use a uniform grid with an even number of steps",
        ));
    }
    let half = run.horizon / 2.0;
    let f = Cylindrical::terminal(run.horizon, |v| v.tanh(), |v| 1.0 - v.tanh().powi(2))?;
    let g = Cylindrical::of_increment(
        0.0,
        half,
        |v| (-0.5 * v * v).exp(),
        |v| -v * (-0.5 * v * v).exp(),
    )?;
    let h = Direction::new(StepFunction::indicator(0.0, half)?);
    let mc = run.mc()?;
    let report = ibp_check(&f, &g, &h, &mc)?;
    run.emit(&report, None)?;
    Ok(report.pass)
}

fn cmd_tv(x: f64, ns: Vec<u32>, mc_mode: bool, run: RunOpts) -> Result<bool, AppError> {
    if mc_mode {
        let dir = uniform_direction(run.horizon)?;
        let mc = run.mc()?;
        let rows = tv_estimate_level_set(x, &ns, TvMode::MonteCarlo { dir: &dir, mc: &mc })?;
        let quad = tv_estimate_level_set(x, &ns, TvMode::Quadrature)?;
        let pass = rows
            .iter()
            .zip(&quad)
            .all(|(m, q)| (m.value - q.value).abs() <= 3.0 * m.stderr + 1e-12);
        #[derive(Serialize)]
        struct TvReport {
            monte_carlo: Vec<wiener_bv::report::TvEstimate>,
            quadrature: Vec<wiener_bv::report::TvEstimate>,
            pass: bool,
        }
        let report = TvReport { monte_carlo: rows, quadrature: quad, pass };
        run.emit(&report, Some(tv_csv(&report.monte_carlo)))?;
        Ok(pass)
    } else {
        let rows = tv_estimate_level_set(x, &ns, TvMode::Quadrature)?;
        #[derive(Serialize)]
        struct TvReport {
            quadrature: Vec<wiener_bv::report::TvEstimate>,
        }
        let report = TvReport { quadrature: rows };
        run.emit(&report, Some(tv_csv(&report.quadrature)))?;
        Ok(true)
    }
}

fn run(cli: Cli) -> Result<bool, AppError> {
    match cli.command {
        Command::Represent { target } => cmd_represent(target),
        Command::Chain { target } => cmd_chain(target),
        Command::Orlicz { target } => cmd_orlicz(target),
        Command::Ibp { run } => cmd_ibp(run),
        Command::Tv { x, n, mc, run } => cmd_tv(x, n, mc, run),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("statistical check failed");
            ExitCode::from(1)
        }
        Err(AppError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(AppError::Numeric(msg)) => {
            eprintln!("numeric error: {msg}");
            ExitCode::from(3)
        }
    }
}
