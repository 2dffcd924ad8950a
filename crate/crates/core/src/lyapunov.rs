//! The Lyapunov function `L(y) = H(Q(y))`, where `Q(y)` is the equilibrium
//! on the curve at which `y − e(h)` leaves K.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::cone::{Membership, OrderRel};
use crate::equilibria::{self, continue_curve, solve_on_levelset, EquilibriumCurve, EquilibriumError};
use crate::expr::EvalError;
use crate::integrate::Trajectory;
use crate::numerics::{axpy, norm, scale, sub};
use crate::system::SystemSpec;

pub const BISECTION_BUDGET: usize = 60;
pub const SLACK: f64 = 1e-9;
pub const MOVING: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LyapunovError {
    #[error("y dominates the computed curve up to h = {h_cap}; extend the curve")]
    CurveTooShort { h_cap: f64 },
    #[error("point {0:?} is not in Y")]
    NotInY(Vec<f64>),
    #[error("curve segment {index} is not strictly ordered through its midpoint")]
    InvalidCurve { index: usize },
    #[error("curve is empty or does not start at h = 0")]
    EmptyCurve,
    #[error("equilibrium solve at h = {h}: {source}")]
    Solve { h: f64, source: EquilibriumError },
    #[error("{0}")]
    Eval(#[from] EvalError),
}

/// Immutable evaluator of `Q` and `L` over a computed equilibrium curve.
#[derive(Debug, Clone)]
pub struct LyapunovEvaluator {
    system: SystemSpec,
    curve: EquilibriumCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QPoint {
    pub h_star: f64,
    pub q: Vec<f64>,
    /// Classification of `y − q` in K; `Boundary` certifies the result.
    pub membership: Membership,
    pub iterations: usize,
}

impl LyapunovEvaluator {
    /// Checks that every segment midpoint sits strictly between its endpoints.
    pub fn new(system: SystemSpec, curve: EquilibriumCurve) -> Result<Self, LyapunovError> {
        if curve.samples.first().map(|c| c.h) != Some(0.0) {
            return Err(LyapunovError::EmptyCurve);
        }
        let k = system.cone_k();
        for (index, w) in curve.samples.windows(2).enumerate() {
            let mid = scale(&axpy(&w[0].x, 1.0, &w[1].x), 0.5);
            if k.order(&w[0].x, &mid) != OrderRel::LL || k.order(&mid, &w[1].x) != OrderRel::LL {
                return Err(LyapunovError::InvalidCurve { index });
            }
        }
        Ok(LyapunovEvaluator { system, curve })
    }

    /// Continues a curve on `[0, h_cap]` with the given step and wraps it.
    pub fn for_system(system: &SystemSpec, h_cap: f64, step: f64) -> Result<Self, LyapunovError> {
        let steps = (h_cap / step).ceil().max(1.0) as usize;
        let curve = continue_curve(system, &equilibria::uniform_grid(0.0, h_cap, steps), 0, 0);
        if let Some(f) = curve.failures.first() {
            return Err(LyapunovError::Solve {
                h: f.h,
                source: EquilibriumError::BadInput(f.reason.clone()),
            });
        }
        Self::new(system.clone(), curve)
    }

    pub fn curve(&self) -> &EquilibriumCurve {
        &self.curve
    }

    pub fn system(&self) -> &SystemSpec {
        &self.system
    }

    pub fn h_cap(&self) -> f64 {
        self.curve.h_max_reached
    }

    /// Margin of `y − x` in K, each facet normalised.
    fn margin(&self, y: &[f64], x: &[f64]) -> f64 {
        self.system.cone_k().min_normalized_margin(&sub(y, x))
    }

    fn exact(&self, h: f64, near: &[f64]) -> Result<Vec<f64>, LyapunovError> {
        solve_on_levelset(&self.system, h, near).map_err(|source| LyapunovError::Solve { h, source })
    }

    /// `h* = sup{h : y − e(h) ∈ K}` and `q = e(h*)`. The bracket comes from
    /// the curve samples; inside it, bisection uses exact equilibria rather
    /// than interpolated ones.
    pub fn eval_q(&self, y: &[f64]) -> Result<QPoint, LyapunovError> {
        let s = &self.system;
        if y.len() != s.dim() || !s.cone_y().contains(y) {
            return Err(LyapunovError::NotInY(y.to_vec()));
        }
        let samples = &self.curve.samples;
        let tol = s.cone_k().tol();
        let inside = |x: &[f64]| self.margin(y, x) >= -tol.scaled(norm(y));
        let last = samples.last().expect("curve is nonempty");
        if samples.len() == 1 || inside(&last.x) {
            if norm(&sub(y, &last.x)) <= tol.scaled(norm(y)) {
                return Ok(QPoint { h_star: last.h, q: last.x.clone(), membership: Membership::Boundary, iterations: 0 });
            }
            return Err(LyapunovError::CurveTooShort { h_cap: last.h });
        }
        // membership is monotone along the ordered curve
        let (mut lo, mut hi) = (0, samples.len() - 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if inside(&samples[mid].x) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (mut h_lo, mut h_hi) = (samples[lo].h, samples[hi].h);
        let mut x_lo = samples[lo].x.clone();
        let mut iterations = 0;
        for _ in 0..BISECTION_BUDGET {
            if h_hi - h_lo <= 1e-15 * (1.0 + h_hi) {
                break;
            }
            iterations += 1;
            let h = 0.5 * (h_lo + h_hi);
            let guess = self.curve.interpolate(h).expect("inside curve range");
            let x = self.exact(h, &guess)?;
            if self.margin(y, &x) >= 0.0 {
                h_lo = h;
                x_lo = x;
            } else {
                h_hi = h;
            }
        }
        let q = if h_lo == samples[lo].h { x_lo } else { self.exact(h_lo, &x_lo)? };
        let membership = s.cone_k().classify(&sub(y, &q));
        Ok(QPoint { h_star: h_lo, q, membership, iterations })
    }

    pub fn eval_l(&self, y: &[f64]) -> Result<f64, LyapunovError> {
        let q = self.eval_q(y)?;
        Ok(self.system.integral(&q.q)?)
    }

    /// Checks that L is non-decreasing along the stored states, strictly
    /// increasing while the field is not negligible, and below `H(x0)`.
    pub fn check_increase_along_orbit(&self, traj: &Trajectory) -> Result<OrbitReport, LyapunovError> {
        let s = &self.system;
        let h0 = traj.h0;
        let mut rows = Vec::with_capacity(traj.times.len());
        for (t, x) in traj.times.iter().zip(&traj.states) {
            rows.push(OrbitRow {
                t: *t,
                l: self.eval_l(x)?,
                h: s.integral(x)?,
                norm_f: norm(&s.field(x)?),
            });
        }
        let mut violations = vec![];
        let mut min_strict = f64::INFINITY;
        for (k, w) in rows.windows(2).enumerate() {
            let dl = w[1].l - w[0].l;
            if dl < -SLACK {
                violations.push(OrbitViolation { index: k, t: w[0].t, kind: "decrease".into(), amount: dl });
            }
            if w[0].norm_f > MOVING {
                min_strict = min_strict.min(dl);
                if dl <= 0.0 {
                    violations.push(OrbitViolation { index: k, t: w[0].t, kind: "not strict".into(), amount: dl });
                }
            }
        }
        for (k, r) in rows.iter().enumerate() {
            let over = r.l - h0;
            if (r.norm_f > MOVING && over >= 0.0) || over > SLACK {
                violations.push(OrbitViolation { index: k, t: r.t, kind: "above H(x0)".into(), amount: over });
            }
        }
        let final_gap = rows.last().map_or(f64::NAN, |r| h0 - r.l);
        Ok(OrbitReport {
            n_points: rows.len(),
            h0,
            l_initial: rows.first().map_or(f64::NAN, |r| r.l),
            final_gap,
            min_strict_increase: min_strict,
            pass: violations.is_empty(),
            violations,
            rows,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitRow {
    pub t: f64,
    pub l: f64,
    pub h: f64,
    pub norm_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitViolation {
    pub index: usize,
    pub t: f64,
    pub kind: String,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitReport {
    pub n_points: usize,
    pub h0: f64,
    pub l_initial: f64,
    /// `H(x0) − L` at the last stored state.
    pub final_gap: f64,
    /// Smallest increment of L over steps where the field is not negligible.
    pub min_strict_increase: f64,
    pub violations: Vec<OrbitViolation>,
    pub pass: bool,
    #[serde(skip)]
    pub rows: Vec<OrbitRow>,
}

impl OrbitReport {
    /// CSV with header `t,L,H,normF`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "t,L,H,normF")?;
        for r in &self.rows {
            writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e}", r.t, r.l, r.h, r.norm_f)?;
        }
        Ok(())
    }
}
