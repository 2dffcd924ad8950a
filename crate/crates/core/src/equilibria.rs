//! Equilibria on level sets of the first integral and continuation of the
//! curve `h ↦ e(h)`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::cone::{Membership, OrderRel};
use crate::expr::EvalError;
use crate::integrate::clip_to_domain;
use crate::numerics::{self, axpy, dot, norm, sub, Mat, Tol};
use crate::system::SystemSpec;

pub const MAX_ITER: usize = 100;
pub const ARMIJO_HALVINGS: usize = 30;
pub const AGREE_TOL: f64 = 1e-7;
pub const DEFAULT_MULTISTART: usize = 16;
const REJECTION_TRIES: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriumError {
    #[error("no convergence after {iterations} iterations, residual {residual:.3e}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("iterate {x:?} left Y")]
    LeftDomain { x: Vec<f64> },
    #[error("{0}")]
    Eval(#[from] EvalError),
    #[error("{0}")]
    BadInput(String),
}

fn residual(s: &SystemSpec, h: f64, x: &[f64]) -> Result<Vec<f64>, EvalError> {
    let mut r = s.field(x)?;
    r.push(s.integral(x)? - h);
    Ok(r)
}

fn converged(r: &[f64], x: &[f64]) -> bool {
    norm(r) <= 1e-11 * (1.0 + norm(x))
}

/// Damped Gauss–Newton on `[F(x); H(x) − h]`. The stacked Jacobian loses a
/// rank to the conservation identity, so steps come from a Levenberg-style
/// augmented least-squares problem with a tiny damping that grows only when
/// backtracking stalls.
pub fn solve_on_levelset(s: &SystemSpec, h: f64, x_init: &[f64]) -> Result<Vec<f64>, EquilibriumError> {
    let n = s.dim();
    if x_init.len() != n {
        return Err(EquilibriumError::BadInput(format!("x_init has {} components, need {n}", x_init.len())));
    }
    if !(h >= 0.0 && h.is_finite()) {
        return Err(EquilibriumError::BadInput(format!("level {h} must be finite and nonnegative")));
    }
    let mut x = x_init.to_vec();
    if clip_to_domain(s.cone_y(), &mut x).is_err() {
        return Err(EquilibriumError::LeftDomain { x });
    }
    let tol = Tol::default();
    let mut r = residual(s, h, &x)?;
    let mut mu_scale = 1e-12;
    for _ in 0..MAX_ITER {
        if converged(&r, &x) {
            return Ok(x);
        }
        let mut jac = s.jacobian(&x)?.to_rows();
        jac.push(s.grad_integral(&x)?);
        let fro2: f64 = jac.iter().map(|row| dot(row, row)).sum();
        let mut accepted = false;
        while mu_scale <= 1e6 {
            let lambda = (mu_scale * (1.0 + fro2)).sqrt();
            let mut rows = jac.clone();
            for i in 0..n {
                let mut e = vec![0.0; n];
                e[i] = lambda;
                rows.push(e);
            }
            let mut rhs: Vec<f64> = r.iter().map(|v| -v).collect();
            rhs.extend(std::iter::repeat_n(0.0, n));
            let step = Mat::from_rows(&rows)
                .ok()
                .and_then(|m| numerics::lstsq(&m, &rhs, &tol).ok());
            if let Some(step) = step.filter(|d| d.iter().all(|v| v.is_finite())) {
                let r0 = norm(&r);
                let mut t = 1.0;
                for _ in 0..=ARMIJO_HALVINGS {
                    let mut trial = axpy(&x, t, &step);
                    if clip_to_domain(s.cone_y(), &mut trial).is_ok() {
                        if let Ok(rt) = residual(s, h, &trial) {
                            if norm(&rt) <= (1.0 - 1e-4 * t) * r0 || converged(&rt, &trial) {
                                x = trial;
                                r = rt;
                                accepted = true;
                                break;
                            }
                        }
                    }
                    t *= 0.5;
                }
            }
            if accepted {
                mu_scale = (mu_scale * 0.1).max(1e-12);
                break;
            }
            mu_scale *= 100.0;
        }
        if !accepted {
            break;
        }
    }
    if converged(&r, &x) {
        return Ok(x);
    }
    Err(EquilibriumError::NoConvergence { iterations: MAX_ITER, residual: norm(&r) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveSample {
    pub h: f64,
    pub x: Vec<f64>,
    /// `‖[F(x); H(x) − h]‖`.
    pub residual: f64,
    /// Largest distance from a converged multistart to `x`.
    pub multistart_spread: f64,
    pub multistart_converged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveFailure {
    pub h: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumCurve {
    pub samples: Vec<CurveSample>,
    /// Continuation frontier: the largest level reached, a lower estimate of
    /// the true end of the curve.
    pub h_max_reached: f64,
    pub failures: Vec<CurveFailure>,
}

/// Invariant check of a computed curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveCheck {
    pub max_field_residual: f64,
    pub max_level_error: f64,
    pub h_increasing: bool,
    pub consecutive_ll: bool,
    pub g_increasing: bool,
    pub pass: bool,
}

impl EquilibriumCurve {
    pub fn hs(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.h).collect()
    }

    /// Linear interpolation in `h`; `None` outside the sampled range.
    pub fn interpolate(&self, h: f64) -> Option<Vec<f64>> {
        let first = self.samples.first()?;
        let last = self.samples.last()?;
        if h < first.h || h > last.h {
            return None;
        }
        let i = self.samples.partition_point(|s| s.h <= h).max(1).min(self.samples.len() - 1);
        let (a, b) = (&self.samples[i - 1], &self.samples[i]);
        if b.h == a.h {
            return Some(a.x.clone());
        }
        let w = (h - a.h) / (b.h - a.h);
        Some(axpy(&numerics::scale(&a.x, 1.0 - w), w, &b.x))
    }

    pub fn check(&self, s: &SystemSpec) -> CurveCheck {
        let mut max_f: f64 = 0.0;
        let mut max_h: f64 = 0.0;
        for c in &self.samples {
            let f = s.field(&c.x).map(|f| norm(&f) / (1.0 + norm(&c.x))).unwrap_or(f64::INFINITY);
            let e = s.integral(&c.x).map(|v| (v - c.h).abs() / (1.0 + c.h)).unwrap_or(f64::INFINITY);
            max_f = max_f.max(f);
            max_h = max_h.max(e);
        }
        let w = self.samples.windows(2);
        let h_increasing = w.clone().all(|p| p[1].h > p[0].h);
        let consecutive_ll = w.clone().all(|p| s.cone_k().order(&p[0].x, &p[1].x) == OrderRel::LL);
        let g = s.cone_k().interior_direction();
        let g_increasing = w.clone().all(|p| dot(&g, &p[1].x) > dot(&g, &p[0].x));
        CurveCheck {
            max_field_residual: max_f,
            max_level_error: max_h,
            h_increasing,
            consecutive_ll,
            g_increasing,
            pass: max_f <= 1e-9 && max_h <= 1e-9 && h_increasing && consecutive_ll && g_increasing,
        }
    }

    /// CSV with header `h,x1..xn,residual`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let n = self.samples.first().map_or(0, |s| s.x.len());
        let cols: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        writeln!(w, "h,{},residual", cols.join(","))?;
        for c in &self.samples {
            let xs: Vec<String> = c.x.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{:.16e},{},{:.16e}", c.h, xs.join(","), c.residual)?;
        }
        Ok(())
    }
}

/// `n + 1` evenly spaced levels from `h_min` to `h_max`.
pub fn uniform_grid(h_min: f64, h_max: f64, steps: usize) -> Vec<f64> {
    if steps == 0 || h_max <= h_min {
        return vec![h_min];
    }
    (0..=steps).map(|i| h_min + (h_max - h_min) * i as f64 / steps as f64).collect()
}

/// Scale `t` with `H(t d) = h` along a direction on which H increases.
pub fn scale_to_level(s: &SystemSpec, d: &[f64], h: f64) -> Result<f64, EvalError> {
    let hd = |t: f64| s.integral(&numerics::scale(d, t));
    let mut hi = 1.0;
    while hd(hi)? < h && hi < 1e12 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hd(mid)? < h {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Direction interior to both cones when K's own interior direction lies in
/// the interior of Y; otherwise Y's.
fn start_direction(s: &SystemSpec) -> Vec<f64> {
    let dk = s.cone_k().interior_direction();
    if s.cone_y().classify(&dk) == Membership::Interior {
        dk
    } else {
        s.cone_y().interior_direction()
    }
}

/// Uniform samples of `Y ∩ {H ≤ h}` by rejection from the box `[0, b]ⁿ`,
/// `b` the largest ray scale reaching the level `h`.
fn multistart_points(s: &SystemSpec, h: f64, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>, EvalError> {
    let mut bound: f64 = 0.0;
    for r in s.cone_y().rays() {
        let t = scale_to_level(s, r, h)?;
        bound = bound.max(t * r.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    let n = s.dim();
    let mut out = Vec::with_capacity(count);
    let mut tries = 0;
    while out.len() < count {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        tries += 1;
        if tries > REJECTION_TRIES * count {
            break;
        }
        if s.cone_y().classify(&x) != Membership::Outside && s.integral(&x)? <= h {
            out.push(x);
        }
    }
    Ok(out)
}

/// Predictor–corrector continuation of the equilibrium curve over `h_grid`,
/// which must start at 0 and increase. Every level is also solved from
/// `multistart` random starts in `Y ∩ {H ≤ h}` and all converged points are
/// required to agree with the continued one.
pub fn continue_curve(s: &SystemSpec, h_grid: &[f64], multistart: usize, seed: u64) -> EquilibriumCurve {
    let mut curve = EquilibriumCurve { samples: vec![], h_max_reached: 0.0, failures: vec![] };
    if h_grid.first() != Some(&0.0) || h_grid.windows(2).any(|w| w[1] <= w[0]) {
        curve.failures.push(CurveFailure { h: f64::NAN, reason: "grid must start at 0 and increase".into() });
        return curve;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = s.dim();
    let dir = start_direction(s);
    for &h in h_grid {
        let guess = match curve.samples.as_slice() {
            [] => vec![0.0; n],
            [only] => match scale_to_level(s, &dir, h) {
                Ok(t) => numerics::scale(&dir, t),
                Err(_) => only.x.clone(),
            },
            [.., a, b] => {
                let w = (h - b.h) / (b.h - a.h);
                let mut p = axpy(&b.x, w, &sub(&b.x, &a.x));
                if clip_to_domain(s.cone_y(), &mut p).is_err() {
                    p = b.x.clone();
                }
                p
            }
        };
        let prev = curve.samples.last().map(|c| c.x.clone());
        let solved = solve_on_levelset(s, h, &guess).or_else(|e| match &prev {
            Some(p) => solve_on_levelset(s, h, p),
            None => Err(e),
        });
        let x = match solved {
            Ok(x) => x,
            Err(e) => {
                curve.failures.push(CurveFailure { h, reason: e.to_string() });
                break;
            }
        };
        let res = residual(s, h, &x).map(|r| norm(&r)).unwrap_or(f64::NAN);
        let mut spread: f64 = 0.0;
        let mut ok = 0;
        let starts = multistart_points(s, h, multistart, &mut rng).unwrap_or_default();
        if starts.len() < multistart {
            curve.failures.push(CurveFailure { h, reason: format!("only {} of {multistart} starts sampled", starts.len()) });
        }
        for (k, x0) in starts.iter().enumerate() {
            match solve_on_levelset(s, h, x0) {
                Ok(xm) => {
                    ok += 1;
                    let d = norm(&sub(&xm, &x));
                    spread = spread.max(d);
                    if d > AGREE_TOL {
                        curve.failures.push(CurveFailure {
                            h,
                            reason: format!("multistart {k} converged to {xm:?}, {d:.3e} away from {x:?}"),
                        });
                    }
                }
                Err(e) => curve.failures.push(CurveFailure { h, reason: format!("multistart {k}: {e}") }),
            }
        }
        curve.h_max_reached = h;
        curve.samples.push(CurveSample { h, x, residual: res, multistart_spread: spread, multistart_converged: ok });
    }
    curve
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderViolation {
    pub i: usize,
    pub j: usize,
    pub relation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryReport {
    pub pairs_checked: usize,
    pub violations: Vec<OrderViolation>,
    pub pass: bool,
}

/// Every pair of distinct samples must be strictly ordered: no equilibrium
/// sits on the boundary of another one's order interval.
pub fn assert_no_boundary_equilibria(curve: &EquilibriumCurve, s: &SystemSpec) -> BoundaryReport {
    let k = s.cone_k();
    let mut violations = vec![];
    let mut pairs = 0;
    for i in 0..curve.samples.len() {
        for j in i + 1..curve.samples.len() {
            pairs += 1;
            let rel = k.order(&curve.samples[i].x, &curve.samples[j].x);
            if rel != OrderRel::LL {
                violations.push(OrderViolation { i, j, relation: format!("{rel:?}") });
            }
        }
    }
    BoundaryReport { pairs_checked: pairs, pass: violations.is_empty(), violations }
}
