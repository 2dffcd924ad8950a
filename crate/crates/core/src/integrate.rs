//! Forward integration of `ẋ = F(x)` on `Y`.
//!
//! The default method is Dormand–Prince 5(4) with FSAL stages and the usual
//! fourth-order dense output; a fixed-step RK4 is available for
//! bit-reproducible debugging runs.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::cone::PolyCone;
use crate::expr::EvalError;
use crate::numerics::{axpy, dot, norm, sub};
use crate::system::SystemSpec;

const C2: f64 = 0.2;
const C3: f64 = 0.3;
const C4: f64 = 0.8;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 0.2;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

pub const CLIP_TOL: f64 = 1e-12;
pub const NORM_CAP: f64 = 1e9;
const CONVERGED_STEPS: usize = 3;
const MAX_DOMAIN_REJECTS: usize = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("trajectory left Y at t = {t}: facet violation {violation:.3e} at {x:?}")]
    LeftDomain { t: f64, x: Vec<f64>, violation: f64 },
    #[error("step size underflow at t = {t} (h = {h:.3e})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("diverged at t = {t}: |x| = {norm:.3e} exceeds cap")]
    Diverged { t: f64, norm: f64 },
    #[error("field evaluation failed at t = {t}: {source}")]
    Eval { t: f64, source: EvalError },
    #[error("bad input: {0}")]
    BadInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Dopri5,
    /// Classical RK4 with a fixed step.
    Rk4 { h: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    /// Every accepted step.
    Steps,
    /// Dense output at these (increasing) times in `[0, t_end]`.
    Times(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrateOptions {
    pub rtol: f64,
    pub atol: f64,
    pub method: Method,
    pub output: Output,
    pub stop_on_converge: bool,
    pub max_steps: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            rtol: 1e-10,
            atol: 1e-10,
            method: Method::Dopri5,
            output: Output::Steps,
            stop_on_converge: false,
            max_steps: 1_000_000,
        }
    }
}

impl IntegrateOptions {
    /// `n + 1` equally spaced output times on `[0, t_end]`.
    pub fn uniform(t_end: f64, n: usize) -> Self {
        let times = (0..=n).map(|i| t_end * i as f64 / n as f64).collect();
        IntegrateOptions { output: Output::Times(times), ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub h0: f64,
    /// Largest `|H(x) − H(x0)|` over every step and output point.
    pub drift: f64,
    /// Time at which the convergence rule first fired.
    pub converged_at: Option<f64>,
    pub steps: usize,
    pub rejected: usize,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory is nonempty")
    }

    /// CSV with header `t,x1..xn,H`, 17 significant digits.
    pub fn write_csv(&self, s: &SystemSpec, mut w: impl Write) -> io::Result<()> {
        let n = s.dim();
        let cols: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        writeln!(w, "t,{},H", cols.join(","))?;
        for (t, x) in self.times.iter().zip(&self.states) {
            let h = s.integral(x).unwrap_or(f64::NAN);
            let xs: Vec<String> = x.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{t:.16e},{},{h:.16e}", xs.join(","))?;
        }
        Ok(())
    }
}

/// Smallest `a·x / ‖a‖` over the facets of `Y`.
fn domain_margin(y: &PolyCone, x: &[f64]) -> f64 {
    y.facets().row_iter().map(|a| dot(a, x) / norm(a)).fold(f64::INFINITY, f64::min)
}

/// Projects away facet violations no larger than the clip tolerance.
/// Returns the violation if it is too large to clip.
pub(crate) fn clip_to_domain(y: &PolyCone, x: &mut Vec<f64>) -> Result<(), f64> {
    let m = domain_margin(y, x);
    if m >= 0.0 {
        return Ok(());
    }
    if -m > CLIP_TOL * (1.0 + norm(x)) {
        return Err(-m);
    }
    for _ in 0..4 {
        let mut moved = false;
        for a in y.facets().row_iter() {
            let v = dot(a, x);
            if v < 0.0 {
                *x = axpy(x, -v / dot(a, a), a);
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    Ok(())
}

struct Rhs<'a> {
    s: &'a SystemSpec,
}

impl Rhs<'_> {
    fn eval(&self, t: f64, x: &[f64]) -> Result<Vec<f64>, IntegrateError> {
        self.s.field(x).map_err(|source| IntegrateError::Eval { t, source })
    }
}

fn lin(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = y.to_vec();
    for (c, k) in terms {
        if *c != 0.0 {
            for (o, ki) in out.iter_mut().zip(k.iter()) {
                *o += h * c * ki;
            }
        }
    }
    out
}

struct Recorder<'a> {
    s: &'a SystemSpec,
    output: &'a Output,
    next: usize,
    traj: Trajectory,
}

impl Recorder<'_> {
    fn note_h(&mut self, x: &[f64]) {
        if let Ok(h) = self.s.integral(x) {
            self.traj.drift = self.traj.drift.max((h - self.traj.h0).abs());
        }
    }

    fn push(&mut self, t: f64, mut x: Vec<f64>) {
        let _ = clip_to_domain(self.s.cone_y(), &mut x);
        self.note_h(&x);
        self.traj.times.push(t);
        self.traj.states.push(x);
    }

    /// Emits pending output times in `(t0, t1]` via `interp(theta)`.
    fn dense(&mut self, t0: f64, t1: f64, interp: impl Fn(f64) -> Vec<f64>) {
        if let Output::Times(ts) = self.output {
            while self.next < ts.len() && ts[self.next] <= t1 {
                let ts_i = ts[self.next];
                let theta = ((ts_i - t0) / (t1 - t0)).clamp(0.0, 1.0);
                self.push(ts_i, interp(theta));
                self.next += 1;
            }
        }
    }
}

pub fn integrate(
    s: &SystemSpec,
    x0: &[f64],
    t_end: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory, IntegrateError> {
    if x0.len() != s.dim() {
        return Err(IntegrateError::BadInput(format!("x0 has {} components, need {}", x0.len(), s.dim())));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(IntegrateError::BadInput(format!("t_end must be positive, got {t_end}")));
    }
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(IntegrateError::BadInput("tolerances must be positive".into()));
    }
    if let Output::Times(ts) = &opts.output {
        if ts.windows(2).any(|w| w[1] <= w[0]) || ts.iter().any(|t| *t < 0.0 || *t > t_end) {
            return Err(IntegrateError::BadInput("output times must increase within [0, t_end]".into()));
        }
    }
    let mut x = x0.to_vec();
    if let Err(violation) = clip_to_domain(s.cone_y(), &mut x) {
        return Err(IntegrateError::LeftDomain { t: 0.0, x, violation });
    }
    let h0 = s.integral(&x).map_err(|source| IntegrateError::Eval { t: 0.0, source })?;
    let mut rec = Recorder {
        s,
        output: &opts.output,
        next: 0,
        traj: Trajectory {
            times: vec![],
            states: vec![],
            h0,
            drift: 0.0,
            converged_at: None,
            steps: 0,
            rejected: 0,
        },
    };
    match &opts.output {
        Output::Steps => rec.push(0.0, x.clone()),
        Output::Times(ts) => {
            while rec.next < ts.len() && ts[rec.next] == 0.0 {
                rec.push(0.0, x.clone());
                rec.next += 1;
            }
        }
    }
    match opts.method {
        Method::Dopri5 => dopri5(s, x, t_end, opts, &mut rec)?,
        Method::Rk4 { h } => rk4(s, x, t_end, h, opts, &mut rec)?,
    }
    Ok(rec.traj)
}

fn is_stationary(f: &[f64], x: &[f64]) -> bool {
    norm(f) <= 1e-8 * (1.0 + norm(x))
}

fn dopri5(
    s: &SystemSpec,
    mut y: Vec<f64>,
    t_end: f64,
    opts: &IntegrateOptions,
    rec: &mut Recorder,
) -> Result<(), IntegrateError> {
    let rhs = Rhs { s };
    let n = y.len();
    let mut t = 0.0;
    let mut k1 = rhs.eval(t, &y)?;
    let scale = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter().zip(b).map(|(u, v)| opts.atol + opts.rtol * u.abs().max(v.abs())).collect()
    };
    let rms = |v: &[f64], sc: &[f64]| -> f64 {
        (v.iter().zip(sc).map(|(a, b)| (a / b).powi(2)).sum::<f64>() / n as f64).sqrt()
    };
    let mut h = {
        let sc = scale(&y, &y);
        let (d0, d1) = (rms(&y, &sc), rms(&k1, &sc));
        let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h.min(t_end)
    };
    let mut stationary = if is_stationary(&k1, &y) { 1 } else { 0 };
    let mut domain_rejects = 0;
    while t < t_end {
        if rec.traj.steps + rec.traj.rejected >= opts.max_steps {
            return Err(IntegrateError::StepSizeUnderflow { t, h });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        if h <= 1e-14 * t.abs().max(1.0) {
            if domain_rejects > 0 {
                let violation = -domain_margin(s.cone_y(), &y).min(0.0);
                return Err(IntegrateError::LeftDomain { t, x: y, violation });
            }
            return Err(IntegrateError::StepSizeUnderflow { t, h });
        }
        let k2 = rhs.eval(t + C2 * h, &lin(&y, h, &[(A21, &k1)]))?;
        let k3 = rhs.eval(t + C3 * h, &lin(&y, h, &[(A31, &k1), (A32, &k2)]))?;
        let k4 = rhs.eval(t + C4 * h, &lin(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
        let k5 = rhs.eval(t + C5 * h, &lin(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
        let k6 = rhs.eval(
            t + h,
            &lin(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        )?;
        let y1 = lin(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = rhs.eval(t + h, &y1)?;
        let err: Vec<f64> = (0..n)
            .map(|i| h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]))
            .collect();
        let e = rms(&err, &scale(&y, &y1));
        if !e.is_finite() || e > 1.0 {
            rec.traj.rejected += 1;
            let fac = if e.is_finite() { (0.9 * e.powf(-0.2)).clamp(0.2, 1.0) } else { 0.2 };
            h *= fac;
            continue;
        }
        let y1_raw = y1.clone();
        let mut y_new = y1;
        if let Err(violation) = clip_to_domain(s.cone_y(), &mut y_new) {
            domain_rejects += 1;
            rec.traj.rejected += 1;
            if domain_rejects > MAX_DOMAIN_REJECTS {
                return Err(IntegrateError::LeftDomain { t: t + h, x: y_new, violation });
            }
            h *= 0.5;
            continue;
        }
        if y_new == y1_raw {
            domain_rejects = 0;
        }
        let nrm = norm(&y_new);
        if nrm > NORM_CAP {
            return Err(IntegrateError::Diverged { t: t + h, norm: nrm });
        }
        let t_new = if last { t_end } else { t + h };
        let c1 = sub(&y_new, &y);
        let c2: Vec<f64> = (0..n).map(|i| h * k1[i] - c1[i]).collect();
        let c3: Vec<f64> = (0..n).map(|i| c1[i] - h * k7[i] - c2[i]).collect();
        let c4: Vec<f64> = (0..n)
            .map(|i| h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]))
            .collect();
        let y_old = y;
        rec.dense(t, t_new, |th| {
            let th1 = 1.0 - th;
            (0..n)
                .map(|i| y_old[i] + th * (c1[i] + th1 * (c2[i] + th * (c3[i] + th1 * c4[i]))))
                .collect()
        });
        rec.traj.steps += 1;
        rec.note_h(&y_new);
        if matches!(rec.output, Output::Steps) {
            rec.push(t_new, y_new.clone());
        }
        t = t_new;
        y = y_new;
        // FSAL; re-evaluate only if clipping moved the state
        k1 = if y == y1_raw {
            k7
        } else {
            rhs.eval(t, &y)?
        };
        stationary = if is_stationary(&k1, &y) { stationary + 1 } else { 0 };
        if stationary >= CONVERGED_STEPS && rec.traj.converged_at.is_none() {
            rec.traj.converged_at = Some(t);
            if opts.stop_on_converge {
                if !matches!(rec.output, Output::Steps) && rec.traj.times.last() != Some(&t) {
                    rec.push(t, y.clone());
                }
                return Ok(());
            }
        }
        let fac = (0.9 * e.max(1e-10).powf(-0.2)).clamp(0.2, 10.0);
        h *= fac;
    }
    Ok(())
}

fn rk4(
    s: &SystemSpec,
    mut y: Vec<f64>,
    t_end: f64,
    h_fixed: f64,
    opts: &IntegrateOptions,
    rec: &mut Recorder,
) -> Result<(), IntegrateError> {
    if !(h_fixed > 0.0 && h_fixed.is_finite()) {
        return Err(IntegrateError::BadInput(format!("RK4 step must be positive, got {h_fixed}")));
    }
    let rhs = Rhs { s };
    let n = y.len();
    let steps = (t_end / h_fixed).ceil() as usize;
    if steps > opts.max_steps {
        return Err(IntegrateError::StepSizeUnderflow { t: 0.0, h: h_fixed });
    }
    let mut t = 0.0;
    let mut f0 = rhs.eval(t, &y)?;
    let mut stationary = 0;
    for i in 0..steps {
        let t_new = if i + 1 == steps { t_end } else { (i + 1) as f64 * h_fixed };
        let h = t_new - t;
        let k1 = &f0;
        let k2 = rhs.eval(t + h / 2.0, &lin(&y, h, &[(0.5, k1)]))?;
        let k3 = rhs.eval(t + h / 2.0, &lin(&y, h, &[(0.5, &k2)]))?;
        let k4 = rhs.eval(t + h, &lin(&y, h, &[(1.0, &k3)]))?;
        let mut y_new = lin(&y, h, &[(1.0 / 6.0, k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)]);
        if let Err(violation) = clip_to_domain(s.cone_y(), &mut y_new) {
            return Err(IntegrateError::LeftDomain { t: t_new, x: y_new, violation });
        }
        let nrm = norm(&y_new);
        if nrm > NORM_CAP {
            return Err(IntegrateError::Diverged { t: t_new, norm: nrm });
        }
        let f1 = rhs.eval(t_new, &y_new)?;
        // cubic Hermite between step ends
        let (ya, fa, yb, fb) = (&y, &f0, &y_new, &f1);
        rec.dense(t, t_new, |th| {
            let (h00, h10) = (2.0 * th.powi(3) - 3.0 * th * th + 1.0, th.powi(3) - 2.0 * th * th + th);
            let (h01, h11) = (-2.0 * th.powi(3) + 3.0 * th * th, th.powi(3) - th * th);
            (0..n).map(|j| h00 * ya[j] + h10 * h * fa[j] + h01 * yb[j] + h11 * h * fb[j]).collect()
        });
        rec.traj.steps += 1;
        rec.note_h(&y_new);
        if matches!(rec.output, Output::Steps) {
            rec.push(t_new, y_new.clone());
        }
        t = t_new;
        y = y_new;
        f0 = f1;
        stationary = if is_stationary(&f0, &y) { stationary + 1 } else { 0 };
        if stationary >= CONVERGED_STEPS && rec.traj.converged_at.is_none() {
            rec.traj.converged_at = Some(t);
            if opts.stop_on_converge {
                if !matches!(rec.output, Output::Steps) && rec.traj.times.last() != Some(&t) {
                    rec.push(t, y.clone());
                }
                return Ok(());
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairOutcome {
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    /// Smallest `a·d / (‖a‖ ‖d‖)` for `d = y(t) − x(t)`.
    pub margin: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderTrialReport {
    pub n_pairs: usize,
    pub t_check: f64,
    pub seed: u64,
    pub violations: usize,
    pub worst_margin: f64,
    pub failures: Vec<String>,
    pub pairs: Vec<PairOutcome>,
    pub pass: bool,
}

pub const ORDER_MARGIN: f64 = 1e-8;

/// Smallest normalised facet margin of `d`.
pub fn normalized_order_margin(k: &PolyCone, d: &[f64]) -> f64 {
    let nd = norm(d);
    if nd == 0.0 {
        return 0.0;
    }
    k.min_normalized_margin(d) / nd
}

/// Random ordered pairs `x0 < y0`: `x0` is a combination of the rays of `Y`
/// with coefficients in `[0, 2]`, and `y0 = x0 + τk` where `k` is a random
/// nonnegative combination of the rays of `K` and `τ ≤ 1` keeps `y0` in `Y`.
pub fn ordered_pairs(s: &SystemSpec, n_pairs: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (k, y) = (s.cone_k(), s.cone_y());
    let n = s.dim();
    let mut out = Vec::with_capacity(n_pairs);
    while out.len() < n_pairs {
        let mut x0 = vec![0.0; n];
        for r in y.rays() {
            x0 = axpy(&x0, rng.gen_range(0.0..2.0), r);
        }
        let mut dir = vec![0.0; n];
        for r in k.rays() {
            dir = axpy(&dir, rng.gen_range(0.0..1.0), r);
        }
        if norm(&dir) < 1e-6 {
            continue;
        }
        let exit = crate::geometry::cone_ray_exit(y, &x0, &dir).unwrap_or(f64::INFINITY);
        let tau = (0.9 * exit).min(1.0);
        if tau < 1e-3 {
            continue;
        }
        let y0 = axpy(&x0, tau, &dir);
        out.push((x0, y0));
    }
    out
}

pub fn order_preservation_trial(s: &SystemSpec, n_pairs: usize, t_check: f64, seed: u64) -> OrderTrialReport {
    let opts = IntegrateOptions { output: Output::Times(vec![t_check]), ..Default::default() };
    let mut rep = OrderTrialReport {
        n_pairs,
        t_check,
        seed,
        violations: 0,
        worst_margin: f64::INFINITY,
        failures: vec![],
        pairs: vec![],
        pass: true,
    };
    for (x0, y0) in ordered_pairs(s, n_pairs, seed) {
        let hx = s.integral(&x0);
        let hy = s.integral(&y0);
        if !matches!((&hx, &hy), (Ok(a), Ok(b)) if b > a) {
            rep.failures.push(format!("H not increasing from {x0:?} to {y0:?}"));
            rep.violations += 1;
            continue;
        }
        let run = |p: &[f64]| integrate(s, p, t_check, &opts).map(|tr| tr.last().to_vec());
        match (run(&x0), run(&y0)) {
            (Ok(xt), Ok(yt)) => {
                let margin = normalized_order_margin(s.cone_k(), &sub(&yt, &xt));
                let ok = margin > ORDER_MARGIN;
                if !ok {
                    rep.violations += 1;
                }
                rep.worst_margin = rep.worst_margin.min(margin);
                rep.pairs.push(PairOutcome { x0, y0, margin, ok });
            }
            (Err(e), _) | (_, Err(e)) => {
                rep.violations += 1;
                rep.failures.push(e.to_string());
            }
        }
    }
    if !rep.worst_margin.is_finite() {
        rep.worst_margin = 0.0;
    }
    rep.pass = rep.violations == 0;
    rep
}
