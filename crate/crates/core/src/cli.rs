//! Command-line front end. Every subcommand maps onto one library operation.
//! Machine output (CSV series, JSON reports) goes to files under `--out`, or
//! to stdout when no directory is given; the human summary goes to stderr.
//!
//! Exit codes: 0 success, 1 a check failed, 2 usage or invalid system,
//! 3 I/O.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::certify::certify;
use crate::equilibria::{self, assert_no_boundary_equilibria, continue_curve, solve_on_levelset};
use crate::geometry::{self, build_trap_with, levelset_slice_sample, Mode, TrapOptions};
use crate::integrate::{integrate, order_preservation_trial, IntegrateOptions};
use crate::lyapunov::LyapunovEvaluator;
use crate::numerics::{norm, sub, Tol};
use crate::system::{sample_y, SystemSpec};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Check(String),
    Io(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Check(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Check(m) => write!(f, "check failed: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Builtin {
    Chem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Plus,
    Minus,
}

#[derive(Debug, Parser)]
#[command(name = "monoconv", version, about = "Monotone systems with increasing first integrals")]
pub struct Cli {
    #[command(flatten)]
    pub config: RunConfig,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    /// System file (.toml or .json), or `chem` for the built-in network.
    #[arg(long, global = true, conflicts_with = "builtin")]
    pub system: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub builtin: Option<Builtin>,
    /// Rate constants k1f,k1r,k2f,k2r for the built-in network.
    #[arg(long, global = true, value_delimiter = ',')]
    pub rates: Option<Vec<f64>>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Format of series output. Reports are always JSON.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long, global = true)]
    pub tol_abs: Option<f64>,
    #[arg(long, global = true)]
    pub tol_rel: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sampled certification of the structural hypotheses.
    Certify {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Integrate one trajectory.
    Simulate {
        #[arg(long, value_delimiter = ',', required = true)]
        x0: Vec<f64>,
        #[arg(long, default_value_t = 50.0)]
        t_end: f64,
        /// Uniform output points; every accepted step when 0.
        #[arg(long, default_value_t = 0)]
        points: usize,
    },
    /// Continue the equilibrium curve over a uniform grid of levels.
    Equilibria {
        #[arg(long, default_value_t = 0.0)]
        h_min: f64,
        #[arg(long, default_value_t = 10.0)]
        h_max: f64,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long, default_value_t = equilibria::DEFAULT_MULTISTART)]
        multistart: usize,
    },
    /// Evaluate L along a trajectory and check that it increases.
    Lyapunov {
        #[arg(long, value_delimiter = ',', required = true)]
        x0: Vec<f64>,
        #[arg(long, default_value_t = 50.0)]
        t_end: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Level-set geometry around a base point.
    Geometry {
        #[command(subcommand)]
        what: GeometryCommand,
    },
    /// End-to-end pipeline on a built-in system.
    Demo {
        #[arg(value_enum)]
        which: Builtin,
        #[arg(long, default_value_t = 20)]
        trajectories: usize,
    },
}

#[derive(Debug, Clone, Args)]
pub struct TrapArgs {
    /// Base point c; defaults to the equilibrium on H = 4.
    #[arg(long, value_delimiter = ',')]
    pub c: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = ModeArg::Plus)]
    pub mode: ModeArg,
    #[arg(long, value_delimiter = ',')]
    pub g: Option<Vec<f64>>,
    #[arg(long)]
    pub k2: Option<f64>,
    #[arg(long)]
    pub h: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum GeometryCommand {
    /// Build the trapping sandwich `Δ1 ⊂ {H < h} ⊂ Δ2`.
    Trap(TrapArgs),
    /// Sample the level-set slice seen from `s1` along tangent rays.
    Slice {
        #[command(flatten)]
        trap: TrapArgs,
        #[arg(long, default_value_t = 64)]
        rays: usize,
    },
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.code()
        }
    }
}

pub fn load_system(cfg: &RunConfig) -> Result<SystemSpec, CliError> {
    let defaults = Tol::default();
    let tol = Tol::new(cfg.tol_abs.unwrap_or(defaults.abs), cfg.tol_rel.unwrap_or(defaults.rel))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let builtin = cfg.builtin.is_some() || cfg.system.is_none() || cfg.system.as_deref() == Some("chem");
    if !builtin && cfg.rates.is_some() {
        return Err(CliError::Usage("--rates applies to the built-in network only".into()));
    }
    let spec = if builtin {
        let r = cfg.rates.clone().unwrap_or_else(|| vec![1.0; 4]);
        if r.len() != 4 {
            return Err(CliError::Usage(format!("--rates needs 4 values, got {}", r.len())));
        }
        SystemSpec::builtin_chem_with_tol(r[0], r[1], r[2], r[3], tol)
    } else {
        SystemSpec::load(Path::new(cfg.system.as_deref().unwrap_or_default()), tol)
    };
    spec.map_err(|e| CliError::Usage(e.to_string()))
}

struct Sink<'a> {
    out: Option<&'a Path>,
}

impl Sink<'_> {
    fn emit(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        match self.out {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                fs::write(dir.join(name), bytes)?;
            }
            None => io::stdout().lock().write_all(bytes)?,
        }
        Ok(())
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.emit(name, text.as_bytes())
    }

    fn series<T: Serialize>(
        &self,
        stem: &str,
        format: Format,
        value: &T,
        csv: impl FnOnce(&mut Vec<u8>) -> io::Result<()>,
    ) -> Result<(), CliError> {
        match format {
            Format::Json => self.json(&format!("{stem}.json"), value),
            Format::Csv => {
                let mut buf = Vec::new();
                csv(&mut buf)?;
                self.emit(&format!("{stem}.csv"), &buf)
            }
        }
    }
}

fn check_point(s: &SystemSpec, x: &[f64], what: &str) -> Result<(), CliError> {
    if x.len() != s.dim() {
        return Err(CliError::Usage(format!("{what} has {} components, system dimension is {}", x.len(), s.dim())));
    }
    if !s.cone_y().contains(x) {
        return Err(CliError::Usage(format!("{what} = {x:?} is not in Y")));
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = &cli.config;
    let s = load_system(cfg)?;
    let sink = Sink { out: cfg.out.as_deref() };
    match &cli.command {
        Command::Certify { samples } => {
            let rep = certify(&s, *samples, cfg.seed);
            sink.json("certify.json", &rep)?;
            eprintln!(
                "grad_dual {} integral {} cooperative {} irreducible {} (alpha {:.3e}); {}",
                verdict(rep.grad_dual.pass),
                verdict(rep.integral.pass),
                verdict(rep.cooperative_pass),
                verdict(rep.irreducible_pass),
                rep.alpha_used,
                rep.note
            );
            first_failure(&[
                ("check_grad_dual", rep.grad_dual.pass),
                ("check_integral", rep.integral.pass),
                ("check_cooperative", rep.cooperative_pass),
                ("check_irreducible", rep.irreducible_pass),
            ])
        }
        Command::Simulate { x0, t_end, points } => {
            check_point(&s, x0, "x0")?;
            let opts = if *points > 0 { IntegrateOptions::uniform(*t_end, *points) } else { IntegrateOptions::default() };
            let tr = integrate(&s, x0, *t_end, &opts).map_err(|e| CliError::Check(e.to_string()))?;
            sink.series("trajectory", cfg.format, &tr, |b| tr.write_csv(&s, b))?;
            eprintln!(
                "x({}) = {:?}, H drift {:.3e}, {} steps ({} rejected)",
                t_end,
                tr.last(),
                tr.drift,
                tr.steps,
                tr.rejected
            );
            Ok(())
        }
        Command::Equilibria { h_min, h_max, steps, multistart } => {
            if !(*h_min >= 0.0 && h_max >= h_min) {
                return Err(CliError::Usage(format!("need 0 <= h-min <= h-max, got {h_min}, {h_max}")));
            }
            let mut grid = equilibria::uniform_grid(*h_min, *h_max, *steps);
            if grid[0] > 0.0 {
                grid.insert(0, 0.0);
            }
            let mut curve = continue_curve(&s, &grid, *multistart, cfg.seed);
            let check = curve.check(&s);
            let order = assert_no_boundary_equilibria(&curve, &s);
            curve.samples.retain(|c| c.h >= *h_min);
            sink.series("equilibria", cfg.format, &curve, |b| curve.write_csv(b))?;
            eprintln!(
                "{} levels, frontier h = {}, {} failures, invariants {}, pairwise order {}",
                curve.samples.len(),
                curve.h_max_reached,
                curve.failures.len(),
                verdict(check.pass),
                verdict(order.pass)
            );
            for f in curve.failures.iter().take(5) {
                eprintln!("  h = {}: {}", f.h, f.reason);
            }
            first_failure(&[
                ("continuation", curve.failures.is_empty()),
                ("curve invariants", check.pass),
                ("no boundary equilibria", order.pass),
            ])
        }
        Command::Lyapunov { x0, t_end, points } => {
            check_point(&s, x0, "x0")?;
            let rep = lyapunov_orbit(&s, x0, *t_end, *points)?;
            sink.series("lyapunov", cfg.format, &rep.rows, |b| rep.write_csv(b))?;
            eprintln!(
                "L from {:.12} to {:.12}, H(x0) = {:.12}, {} violations",
                rep.l_initial,
                rep.rows.last().map_or(f64::NAN, |r| r.l),
                rep.h0,
                rep.violations.len()
            );
            first_failure(&[("L increases along the orbit", rep.pass)])
        }
        Command::Geometry { what } => match what {
            GeometryCommand::Trap(args) => {
                let trap = trap(&s, args, cfg.seed)?;
                sink.json("trap.json", &trap)?;
                eprintln!(
                    "k1 = {:.6} < k2 = {:.6}, h = {:.6}, margins {:.3e} / {:.3e}",
                    trap.k1, trap.k2, trap.h, trap.inner_margin, trap.outer_margin
                );
                Ok(())
            }
            GeometryCommand::Slice { trap: args, rays } => {
                let trap = trap(&s, args, cfg.seed)?;
                let sl = levelset_slice_sample(&s, &trap, *rays).map_err(|e| CliError::Check(e.to_string()))?;
                sink.series("slice", cfg.format, &sl, |b| sl.write_csv(b))?;
                eprintln!("{}", sl.note);
                first_failure(&[("single crossing per ray", sl.star_shaped)])
            }
        },
        Command::Demo { which: Builtin::Chem, trajectories } => demo(&s, *trajectories, cfg.seed, &sink),
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn first_failure(checks: &[(&str, bool)]) -> Result<(), CliError> {
    match checks.iter().find(|(_, ok)| !ok) {
        Some((name, _)) => Err(CliError::Check((*name).to_string())),
        None => Ok(()),
    }
}

fn lyapunov_orbit(s: &SystemSpec, x0: &[f64], t_end: f64, points: usize) -> Result<crate::lyapunov::OrbitReport, CliError> {
    let h0 = s.integral(x0).map_err(|e| CliError::Usage(e.to_string()))?;
    let ev = LyapunovEvaluator::for_system(s, (h0 * 1.05 + 0.1).max(0.1), 0.1).map_err(|e| CliError::Check(e.to_string()))?;
    let tr = integrate(s, x0, t_end, &IntegrateOptions::uniform(t_end, points.max(1)))
        .map_err(|e| CliError::Check(e.to_string()))?;
    ev.check_increase_along_orbit(&tr).map_err(|e| CliError::Check(e.to_string()))
}

fn trap(s: &SystemSpec, args: &TrapArgs, seed: u64) -> Result<geometry::TrapContext, CliError> {
    let c = match &args.c {
        Some(c) => {
            check_point(s, c, "c")?;
            c.clone()
        }
        None => default_center(s)?,
    };
    let mode = match args.mode {
        ModeArg::Plus => Mode::Plus,
        ModeArg::Minus => Mode::Minus,
    };
    let opts = TrapOptions { g: args.g.clone(), k2: args.k2, h: args.h, seed };
    build_trap_with(s, &c, mode, &opts).map_err(|e| CliError::Check(e.to_string()))
}

/// The equilibrium on the level `H = 4`.
fn default_center(s: &SystemSpec) -> Result<Vec<f64>, CliError> {
    let curve = continue_curve(s, &equilibria::uniform_grid(0.0, 4.0, 40), 0, 0);
    match (curve.failures.first(), curve.samples.last()) {
        (None, Some(last)) => Ok(last.x.clone()),
        (Some(f), _) => Err(CliError::Check(format!("equilibrium at h = {}: {}", f.h, f.reason))),
        _ => Err(CliError::Check("empty curve".into())),
    }
}

#[derive(Debug, Serialize)]
struct DemoCheck {
    name: String,
    pass: bool,
    detail: String,
}

#[derive(Debug, Serialize)]
struct TrajectorySummary {
    x0: Vec<f64>,
    h0: f64,
    x_final: Vec<f64>,
    equilibrium: Vec<f64>,
    distance: f64,
    drift: f64,
    l_initial: f64,
    l_final_gap: f64,
    l_violations: usize,
}

#[derive(Debug, Serialize)]
struct DemoReport {
    seed: u64,
    checks: Vec<DemoCheck>,
    first_failure: Option<String>,
    pass: bool,
}

const DEMO_T_END: f64 = 100.0;
const DEMO_H_MAX: f64 = 10.0;

/// certify → curve on [0, 10] → trajectories with conservation, convergence
/// and L-increase checks plus an order trial → trap and slice at e(4).
fn demo(s: &SystemSpec, n_traj: usize, seed: u64, sink: &Sink) -> Result<(), CliError> {
    let mut checks: Vec<DemoCheck> = vec![];
    let push = |checks: &mut Vec<DemoCheck>, name: &str, pass: bool, detail: String| {
        eprintln!("[{}] {name}: {detail}", verdict(pass));
        checks.push(DemoCheck { name: name.into(), pass, detail });
    };

    let cert = certify(s, 1000, seed);
    sink.json("certify.json", &cert)?;
    push(&mut checks, "check_grad_dual", cert.grad_dual.pass, format!("max violation {:.3e}", cert.grad_dual.max_violation));
    push(&mut checks, "check_integral", cert.integral.pass, format!("max violation {:.3e}", cert.integral.max_violation));
    push(&mut checks, "check_cooperative", cert.cooperative_pass, format!("margin {:.3e}", cert.cooperative.margin));
    push(&mut checks, "check_irreducible", cert.irreducible_pass, format!("alpha {:.3e}, margin {:.3e}", cert.alpha_used, cert.margin));

    let curve = continue_curve(s, &equilibria::uniform_grid(0.0, DEMO_H_MAX, 100), equilibria::DEFAULT_MULTISTART, seed);
    let mut buf = Vec::new();
    curve.write_csv(&mut buf)?;
    sink.emit("equilibria.csv", &buf)?;
    let cc = curve.check(s);
    let order = assert_no_boundary_equilibria(&curve, s);
    push(
        &mut checks,
        "equilibrium_curve",
        curve.failures.is_empty() && cc.pass,
        format!("frontier {}, {} failures, max residual {:.3e}", curve.h_max_reached, curve.failures.len(), cc.max_field_residual),
    );
    push(&mut checks, "no_boundary_equilibria", order.pass, format!("{} pairs, {} violations", order.pairs_checked, order.violations.len()));

    let ev = LyapunovEvaluator::new(s.clone(), curve.clone());
    let starts = demo_starts(s, n_traj, seed);
    let mut summaries = vec![];
    let mut errors = vec![];
    for x0 in &starts {
        match demo_trajectory(s, ev.as_ref().ok(), x0) {
            Ok((sum, rows)) => {
                if x0 == &starts[0] {
                    let mut buf = Vec::new();
                    rows.write_csv(&mut buf)?;
                    sink.emit("lyapunov.csv", &buf)?;
                }
                summaries.push(sum);
            }
            Err(e) => errors.push(format!("{x0:?}: {e}")),
        }
    }
    sink.json("trajectories.json", &summaries)?;
    let worst_drift = summaries.iter().map(|t| t.drift / (1.0 + t.h0)).fold(0.0, f64::max);
    let worst_dist = summaries.iter().map(|t| t.distance).fold(0.0, f64::max);
    let l_bad = summaries.iter().filter(|t| t.l_violations > 0 || t.l_final_gap.abs() > 1e-6).count();
    let all = errors.is_empty();
    push(&mut checks, "conservation", all && worst_drift <= 1e-9, format!("worst relative drift {worst_drift:.3e}"));
    push(&mut checks, "convergence", all && worst_dist <= 1e-6, format!("{} trajectories, worst distance {worst_dist:.3e}, errors {errors:?}", starts.len()));
    push(&mut checks, "lyapunov_increase", all && ev.is_ok() && l_bad == 0, format!("{l_bad} trajectories with violations"));
    let trial = order_preservation_trial(s, n_traj, 5.0, seed);
    push(&mut checks, "order_preservation", trial.pass, format!("{} pairs, worst margin {:.3e}", trial.n_pairs, trial.worst_margin));

    match default_center(s) {
        Ok(c) => {
            for mode in [Mode::Plus, Mode::Minus] {
                let name = format!("trap_{}", if mode == Mode::Plus { "plus" } else { "minus" });
                let opts = TrapOptions { seed, ..Default::default() };
                match build_trap_with(s, &c, mode, &opts) {
                    Ok(t) => {
                        sink.json(&format!("{name}.json"), &t)?;
                        let ok = t.inner_margin > 1e-6 && t.outer_margin > 1e-6;
                        push(&mut checks, &name, ok, format!("margins {:.3e} / {:.3e}", t.inner_margin, t.outer_margin));
                        let sl = levelset_slice_sample(s, &t, 64);
                        let (ok, detail) = match &sl {
                            Ok(sl) => (sl.star_shaped, sl.note.clone()),
                            Err(e) => (false, e.to_string()),
                        };
                        if let Ok(sl) = &sl {
                            let mut buf = Vec::new();
                            sl.write_csv(&mut buf)?;
                            sink.emit(&format!("slice_{name}.csv"), &buf)?;
                        }
                        push(&mut checks, &format!("slice_{name}"), ok, detail);
                    }
                    Err(e) => push(&mut checks, &name, false, e.to_string()),
                }
            }
        }
        Err(e) => push(&mut checks, "trap_plus", false, e.to_string()),
    }

    let first = checks.iter().find(|c| !c.pass).map(|c| c.name.clone());
    let report = DemoReport { seed, pass: first.is_none(), first_failure: first.clone(), checks };
    sink.json("demo.json", &report)?;
    match first {
        Some(name) => Err(CliError::Check(name)),
        None => Ok(()),
    }
}

/// `(0,0,2)`-style start on the last coordinate axis first, then random
/// points of `Y` rescaled onto levels in `[0.5, 9.5]`.
fn demo_starts(s: &SystemSpec, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let dim = s.dim();
    let mut axis = vec![0.0; dim];
    axis[dim - 1] = 1.0;
    let mut out = vec![];
    if s.cone_y().contains(&axis) {
        if let Ok(t) = equilibria::scale_to_level(s, &axis, 4.0) {
            out.push(axis.iter().map(|v| v * t).collect());
        }
    }
    for (k, p) in sample_y(s.cone_y(), n, seed).into_iter().enumerate() {
        let level = 0.5 + 9.0 * (k as f64 + 0.5) / n as f64;
        if norm(&p.x) == 0.0 {
            continue;
        }
        if let Ok(t) = equilibria::scale_to_level(s, &p.x, level) {
            out.push(p.x.iter().map(|v| v * t).collect());
        }
    }
    out
}

fn demo_trajectory(
    s: &SystemSpec,
    ev: Option<&LyapunovEvaluator>,
    x0: &[f64],
) -> Result<(TrajectorySummary, crate::lyapunov::OrbitReport), String> {
    let tr = integrate(s, x0, DEMO_T_END, &IntegrateOptions::uniform(DEMO_T_END, 200)).map_err(|e| e.to_string())?;
    let eq = solve_on_levelset(s, tr.h0, tr.last()).map_err(|e| e.to_string())?;
    let ev = ev.ok_or("no Lyapunov evaluator")?;
    let rep = ev.check_increase_along_orbit(&tr).map_err(|e| e.to_string())?;
    Ok((
        TrajectorySummary {
            x0: x0.to_vec(),
            h0: tr.h0,
            x_final: tr.last().to_vec(),
            distance: norm(&sub(tr.last(), &eq)),
            equilibrium: eq,
            drift: tr.drift,
            l_initial: rep.l_initial,
            l_final_gap: rep.final_gap,
            l_violations: rep.violations.len(),
        },
        rep,
    ))
}
