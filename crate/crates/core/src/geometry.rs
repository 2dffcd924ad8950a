//! Level-set geometry: order intervals `c⁺ = Y ∩ (c + K)` and
//! `c⁻ = Y ∩ (c − K)`, their slices by hyperplanes `⟨g, x⟩ = r`, ray exits,
//! central projections and the trapping construction that sandwiches a level
//! set `S(c, h)` between two slices.
//!
//! Regions are never meshed. Everything is a list of half-spaces `a·x ≥ b`
//! plus sampling over vertex hulls.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cone::{Combinations, PolyCone};
use crate::expr::EvalError;
use crate::numerics::{self, axpy, dot, norm, sub, Mat, Tol};
use crate::system::SystemSpec;

pub const MIN_SAMPLES: usize = 1000;
pub const K1_HALVINGS: usize = 40;
const GRID: usize = 128;
const BISECT: usize = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point {0:?} is not in Y")]
    NotInY(Vec<f64>),
    #[error("the lower construction needs c != 0")]
    ZeroBase,
    #[error("g must be a unit vector in the interior of K*: {0}")]
    BadG(String),
    #[error("trap construction failed: {reason} (lower margin {lower:.3e}, upper margin {upper:.3e})")]
    TrapFailed { reason: String, lower: f64, upper: f64 },
    #[error("ray does not meet the plane at a positive parameter")]
    NoIntersection,
    #[error("H is not monotone along the ray for direction {ray}: {detail}")]
    NonMonotoneH { ray: usize, detail: String },
    #[error("{0}")]
    Eval(#[from] EvalError),
}

/// Which side of `c` the construction lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// `c⁺`, slices with `r > ⟨g, c⟩`.
    Plus,
    /// `c⁻`, slices with `r < ⟨g, c⟩`.
    Minus,
}

/// Intersection of half-spaces `a_j·x ≥ b_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl Polyhedron {
    pub fn new(dim: usize) -> Self {
        let _ = dim;
        Polyhedron { a: vec![], b: vec![] }
    }

    pub fn push(&mut self, a: Vec<f64>, b: f64) {
        self.a.push(a);
        self.b.push(b);
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Smallest slack `a_j·x − b_j` scaled by `‖a_j‖`.
    pub fn slack(&self, x: &[f64]) -> f64 {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(a, b)| (dot(a, x) - b) / norm(a))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.slack(x) >= -tol * (1.0 + norm(x))
    }

    /// Ratio test: smallest `t ≥ 0` beyond which `p + t d` violates some
    /// constraint, with the exit point. `None` if the ray never leaves.
    pub fn ray_exit(&self, p: &[f64], d: &[f64]) -> Option<(f64, Vec<f64>)> {
        let mut best: Option<f64> = None;
        for (a, b) in self.a.iter().zip(&self.b) {
            let ad = dot(a, d);
            if ad < -1e-15 * norm(a) * norm(d) {
                let t = ((dot(a, p) - b) / -ad).max(0.0);
                best = Some(best.map_or(t, |s| s.min(t)));
            }
        }
        best.map(|t| (t, axpy(p, t, d)))
    }

    /// Vertices, optionally restricted to the plane `⟨g, x⟩ = r`.
    pub fn vertices(&self, plane: Option<(&[f64], f64)>) -> Vec<Vec<f64>> {
        let Some(n) = self.a.first().map(Vec::len) else { return vec![] };
        let k = if plane.is_some() { n - 1 } else { n };
        let tol = Tol::default();
        let mut out: Vec<Vec<f64>> = Vec::new();
        for subset in Combinations::new(self.a.len(), k) {
            let mut rows: Vec<Vec<f64>> = subset.iter().map(|&i| self.a[i].clone()).collect();
            let mut rhs: Vec<f64> = subset.iter().map(|&i| self.b[i]).collect();
            if let Some((g, r)) = plane {
                rows.push(g.to_vec());
                rhs.push(r);
            }
            let Ok(m) = Mat::from_rows(&rows) else { continue };
            let Ok(x) = numerics::lstsq(&m, &rhs, &tol) else { continue };
            let on_plane = plane.is_none_or(|(g, r)| (dot(g, &x) - r).abs() <= 1e-9 * (1.0 + r.abs()));
            if on_plane && self.contains(&x, 1e-9) && !out.iter().any(|v| norm(&sub(v, &x)) <= 1e-9 * (1.0 + norm(&x))) {
                out.push(x);
            }
        }
        out
    }
}

/// Smallest `t ≥ 0` at which `p + t d` leaves the cone.
pub fn cone_ray_exit(k: &PolyCone, p: &[f64], d: &[f64]) -> Option<f64> {
    let mut poly = Polyhedron::new(k.dim());
    for a in k.facets().row_iter() {
        poly.push(a.to_vec(), 0.0);
    }
    poly.ray_exit(p, d).map(|(t, _)| t)
}

/// `c⁺` or `c⁻` as half-spaces.
pub fn order_interval(s: &SystemSpec, c: &[f64], mode: Mode) -> Polyhedron {
    let mut p = Polyhedron::new(s.dim());
    for a in s.cone_y().facets().row_iter() {
        p.push(a.to_vec(), 0.0);
    }
    for a in s.cone_k().facets().row_iter() {
        match mode {
            Mode::Plus => p.push(a.to_vec(), dot(a, c)),
            Mode::Minus => p.push(a.iter().map(|v| -v).collect(), -dot(a, c)),
        }
    }
    p
}

/// `Δ(c, g, r)`: `c⁺ ∩ {⟨g,x⟩ ≤ r}` or `c⁻ ∩ {⟨g,x⟩ ≥ r}`.
pub fn delta_region(s: &SystemSpec, c: &[f64], g: &[f64], r: f64, mode: Mode) -> Polyhedron {
    let mut p = order_interval(s, c, mode);
    match mode {
        Mode::Plus => p.push(g.iter().map(|v| -v).collect(), -r),
        Mode::Minus => p.push(g.to_vec(), r),
    }
    p
}

/// Vertices of `Δ(c, g, r)` and of its face `P(c, g, r)`.
pub fn delta_vertices(s: &SystemSpec, c: &[f64], g: &[f64], r: f64, mode: Mode) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let poly = delta_region(s, c, g, r, mode);
    let delta = poly.vertices(None);
    let plane = poly.vertices(Some((g, r)));
    (delta, plane)
}

/// Vertices plus random convex combinations of them, at least `n` points.
pub fn sample_hull(vertices: &[Vec<f64>], n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut out = vertices.to_vec();
    if vertices.len() < 2 {
        return out;
    }
    let dim = vertices[0].len();
    while out.len() < n {
        let w: Vec<f64> = (0..vertices.len()).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let total: f64 = w.iter().sum();
        let mut x = vec![0.0; dim];
        for (wi, v) in w.iter().zip(vertices) {
            x = axpy(&x, wi / total, v);
        }
        out.push(x);
    }
    out
}

/// Central projection of `y` from `c` onto the plane `⟨g, x⟩ = r`.
pub fn project_central(c: &[f64], g: &[f64], r: f64, y: &[f64]) -> Result<Vec<f64>, GeometryError> {
    let d = sub(y, c);
    let gd = dot(g, &d);
    if gd.abs() <= 1e-300 {
        return Err(GeometryError::NoIntersection);
    }
    let t = (r - dot(g, c)) / gd;
    if !(t > 0.0 && t.is_finite()) {
        return Err(GeometryError::NoIntersection);
    }
    Ok(axpy(c, t, &d))
}

/// `inf ⟨g, y⟩` over unit vectors of the cone. The ratio `⟨g,y⟩/‖y‖` is
/// quasi-concave on the cone, so the infimum sits on an extremal ray.
pub fn delta_g(cone: &PolyCone, g: &[f64]) -> f64 {
    cone.dual_margin(g)
}

fn unit_in_dual(s: &SystemSpec, g: &[f64]) -> Result<Vec<f64>, GeometryError> {
    if g.len() != s.dim() {
        return Err(GeometryError::BadG(format!("length {} != {}", g.len(), s.dim())));
    }
    let u = numerics::normalized(g).ok_or_else(|| GeometryError::BadG("zero vector".into()))?;
    if s.cone_k().dual_classify(&u) != crate::cone::Membership::Interior {
        return Err(GeometryError::BadG(format!("{g:?} is not in int K*")));
    }
    Ok(u)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrapOptions {
    /// Reference functional; defaults to the unit gradient of H at `c`.
    pub g: Option<Vec<f64>>,
    pub k2: Option<f64>,
    pub h: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrapContext {
    pub mode: Mode,
    pub c: Vec<f64>,
    pub g: Vec<f64>,
    pub g_dot_c: f64,
    pub h_c: f64,
    pub k2: f64,
    pub h: f64,
    pub k1: f64,
    pub k1_halvings: usize,
    pub s0: Vec<f64>,
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    pub t1: f64,
    pub t2: f64,
    pub theta: f64,
    pub epsilon: f64,
    pub grad_h_max: f64,
    /// Sampled extreme of H over Δ1 (max for Plus, min for Minus).
    pub delta1_h: f64,
    /// Sampled extreme of H over P2 (min for Plus, max for Minus).
    pub p2_h: f64,
    /// `h − delta1_h` for Plus, `delta1_h − h` for Minus.
    pub inner_margin: f64,
    /// `p2_h − h` for Plus, `h − p2_h` for Minus.
    pub outer_margin: f64,
    pub n_samples: usize,
}

fn h_range(s: &SystemSpec, pts: &[Vec<f64>]) -> Result<(f64, f64), GeometryError> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in pts {
        let v = s.integral(p)?;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok((lo, hi))
}

pub fn build_trap(s: &SystemSpec, c: &[f64], mode: Mode) -> Result<TrapContext, GeometryError> {
    build_trap_with(s, c, mode, &TrapOptions::default())
}

pub fn build_trap_with(
    s: &SystemSpec,
    c: &[f64],
    mode: Mode,
    opts: &TrapOptions,
) -> Result<TrapContext, GeometryError> {
    if c.len() != s.dim() || !s.cone_y().contains(c) {
        return Err(GeometryError::NotInY(c.to_vec()));
    }
    if mode == Mode::Minus && norm(c) == 0.0 {
        return Err(GeometryError::ZeroBase);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let g = match &opts.g {
        Some(g) => unit_in_dual(s, g)?,
        None => unit_in_dual(s, &s.grad_integral(c)?)?,
    };
    let gc = dot(&g, c);
    let h_c = s.integral(c)?;
    let sign = match mode {
        Mode::Plus => 1.0,
        Mode::Minus => -1.0,
    };
    let fail = |reason: String, lower: f64, upper: f64| GeometryError::TrapFailed { reason, lower, upper };

    let k2 = opts.k2.unwrap_or(match mode {
        Mode::Plus => gc + 1.0,
        Mode::Minus => 0.0,
    });
    let k2_ok = match mode {
        Mode::Plus => k2 > gc,
        Mode::Minus => (0.0..gc).contains(&k2),
    };
    if !k2_ok {
        return Err(fail(format!("k2 = {k2} on the wrong side of <g,c> = {gc}"), 0.0, 0.0));
    }
    let (delta2_v, p2_v) = delta_vertices(s, c, &g, k2, mode);
    if p2_v.is_empty() || delta2_v.is_empty() {
        return Err(fail("empty slice P2".into(), 0.0, 0.0));
    }
    let p2_pts = sample_hull(&p2_v, MIN_SAMPLES, &mut rng);
    let (p2_lo, p2_hi) = h_range(s, &p2_pts)?;
    let p2_h = if mode == Mode::Plus { p2_lo } else { p2_hi };
    let h = opts.h.unwrap_or((h_c + p2_h) / 2.0);
    // strictly between H(c) and H over P2, on the correct side
    if !(sign * (h - h_c) > 0.0 && sign * (p2_h - h) > 0.0) {
        return Err(fail(format!("h = {h} not strictly between H(c) = {h_c} and H(P2) = {p2_h}"), sign * (h - h_c), sign * (p2_h - h)));
    }

    let mut k1 = (gc + k2) / 2.0;
    let mut halvings = 0;
    let delta1_h = loop {
        let (dv, _) = delta_vertices(s, c, &g, k1, mode);
        let pts = sample_hull(&dv, MIN_SAMPLES, &mut rng);
        let (lo, hi) = h_range(s, &pts)?;
        let ext = if mode == Mode::Plus { hi } else { lo };
        if sign * (h - ext) > 0.0 {
            break ext;
        }
        if halvings == K1_HALVINGS {
            return Err(fail("k1 halving budget exhausted".into(), sign * (h - ext), sign * (p2_h - h)));
        }
        k1 = gc + (k1 - gc) / 2.0;
        halvings += 1;
    };

    let p1_v = delta_region(s, c, &g, k1, mode).vertices(Some((&g, k1)));
    let delta2_pts = sample_hull(&delta2_v, MIN_SAMPLES, &mut rng);
    let grads: Vec<Vec<f64>> = delta2_pts.iter().map(|y| s.grad_integral(y)).collect::<Result<_, _>>()?;
    let grad_h_max = grads.iter().map(|g| norm(g)).fold(0.0, f64::max);
    let mut theta = f64::INFINITY;
    for x in &p1_v {
        let dx = sub(x, c);
        for gy in &grads {
            theta = theta.min(sign * dot(&dx, gy));
        }
    }
    if !(theta > 0.0) || grad_h_max <= 0.0 {
        return Err(fail(format!("Theta = {theta} is not positive"), sign * (h - delta1_h), sign * (p2_h - h)));
    }
    let epsilon = 0.5 * (theta / grad_h_max).min((k1 - gc).abs());

    let s0 = match mode {
        Mode::Plus => axpy(c, epsilon, &s.cone_y().interior_direction()),
        Mode::Minus => {
            let cminus = order_interval(s, c, Mode::Minus).vertices(None);
            let mut bar = vec![0.0; c.len()];
            for v in &cminus {
                bar = axpy(&bar, 1.0 / cminus.len() as f64, v);
            }
            let d = sub(&bar, c);
            let lambda = (epsilon / norm(&d)).min(0.5);
            axpy(c, lambda, &d)
        }
    };
    let dir: Vec<f64> = s0.iter().map(|v| sign * v).collect();
    let exit = |poly: Polyhedron| poly.ray_exit(&s0, &dir).ok_or_else(|| fail("ray from s0 does not exit".into(), 0.0, 0.0));
    let (e1, s1) = exit(delta_region(s, c, &g, k1, mode))?;
    let (e2, s2) = exit(delta_region(s, c, &g, k2, mode))?;
    let (t1, t2) = ((1.0 + sign * e1).max(0.0), (1.0 + sign * e2).max(0.0));

    Ok(TrapContext {
        mode,
        c: c.to_vec(),
        g,
        g_dot_c: gc,
        h_c,
        k2,
        h,
        k1,
        k1_halvings: halvings,
        s0,
        s1,
        s2,
        t1,
        t2,
        theta,
        epsilon,
        grad_h_max,
        delta1_h,
        p2_h,
        inner_margin: sign * (h - delta1_h),
        outer_margin: sign * (p2_h - h),
        n_samples: MIN_SAMPLES,
    })
}

/// Orthonormal basis of `g⊥`, intersected with the span of `extra` when given.
fn tangent_basis(g: &[f64], span: Option<&[Vec<f64>]>) -> Vec<Vec<f64>> {
    let n = g.len();
    let candidates: Vec<Vec<f64>> = match span {
        Some(vs) => vs.to_vec(),
        None => (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect(),
    };
    // the span may not contain g; first orthonormalise the span, then remove
    // the component along the projection of g onto it
    let mut span_basis: Vec<Vec<f64>> = Vec::new();
    for v in candidates {
        let mut w = v.clone();
        for b in &span_basis {
            w = axpy(&w, -dot(&w, b), b);
        }
        if norm(&w) > 1e-9 * (1.0 + norm(&v)) {
            span_basis.push(numerics::scale(&w, 1.0 / norm(&w)));
        }
    }
    let mut gp = vec![0.0; n];
    for b in &span_basis {
        gp = axpy(&gp, dot(g, b), b);
    }
    let gp = numerics::normalized(&gp);
    let mut out: Vec<Vec<f64>> = Vec::new();
    for v in &span_basis {
        let mut w = v.clone();
        if let Some(gp) = &gp {
            w = axpy(&w, -dot(&w, gp), gp);
        }
        for b in &out {
            w = axpy(&w, -dot(&w, b), b);
        }
        if norm(&w) > 1e-9 {
            out.push(numerics::scale(&w, 1.0 / norm(&w)));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceRay {
    pub theta_index: usize,
    pub direction: Vec<f64>,
    /// `t` such that the ray from `s0` through `s1 + tδ` meets `S(c,h)` on
    /// the relative boundary of `Δ2`.
    pub t_boundary: f64,
    pub point: Vec<f64>,
    pub crossings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceSample {
    pub n_rays: usize,
    pub tangent_dim: usize,
    pub rays: Vec<SliceRay>,
    /// Every ray crossed the level exactly once.
    pub star_shaped: bool,
    pub note: String,
}

impl SliceSample {
    /// CSV with header `theta_index,t_boundary,x1..xn`.
    pub fn write_csv(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        let n = self.rays.first().map_or(0, |r| r.point.len());
        let cols: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        writeln!(w, "theta_index,t_boundary,{}", cols.join(","))?;
        for r in &self.rays {
            let xs: Vec<String> = r.point.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{},{:.16e},{}", r.theta_index, r.t_boundary, xs.join(","))?;
        }
        Ok(())
    }
}

fn directions(basis: &[Vec<f64>], n_rays: usize, n: usize) -> Vec<Vec<f64>> {
    match basis.len() {
        0 => vec![],
        1 => (0..n_rays).map(|i| numerics::scale(&basis[0], if i % 2 == 0 { 1.0 } else { -1.0 })).collect(),
        2 => (0..n_rays)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / n_rays as f64;
                axpy(&numerics::scale(&basis[0], a.cos()), a.sin(), &basis[1])
            })
            .collect(),
        d => {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            (0..n_rays)
                .map(|_| loop {
                    let c: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    if norm(&c) > 1e-3 && norm(&c) <= 1.0 {
                        let mut v = vec![0.0; n];
                        for (ci, b) in c.iter().zip(basis) {
                            v = axpy(&v, *ci, b);
                        }
                        break numerics::normalized(&v).expect("nonzero");
                    }
                })
                .collect()
        }
    }
}

/// Sweeps rays from `s0` through `s1 + tδ`, `t ∈ [0, ∞)`, for `n_rays`
/// tangent directions `δ`, and locates where the exit point of each ray from
/// `Δ2` crosses the level `h`. Along each ray H must be strictly monotone
/// inside `Δ2`.
pub fn levelset_slice_sample(s: &SystemSpec, trap: &TrapContext, n_rays: usize) -> Result<SliceSample, GeometryError> {
    let (c, g, mode) = (&trap.c, &trap.g, trap.mode);
    let sign = if mode == Mode::Plus { 1.0 } else { -1.0 };
    let basis = match mode {
        Mode::Plus => tangent_basis(g, None),
        Mode::Minus => {
            let diffs: Vec<Vec<f64>> = order_interval(s, c, mode).vertices(None).iter().map(|v| sub(v, c)).collect();
            tangent_basis(g, Some(&diffs))
        }
    };
    let delta2 = delta_region(s, c, g, trap.k2, mode);
    let base = sub(&trap.s1, &trap.s0);
    let len = norm(&base);
    let mut rays = Vec::with_capacity(n_rays);
    let dirs = directions(&basis, n_rays, c.len());
    for (idx, delta) in dirs.iter().enumerate() {
        let ray_dir = |u: f64| axpy(&numerics::scale(&base, 1.0 - u), u * len, delta);
        let exit_point = |u: f64| -> Result<Vec<f64>, GeometryError> {
            delta2
                .ray_exit(&trap.s0, &ray_dir(u))
                .map(|(_, p)| p)
                .ok_or(GeometryError::NonMonotoneH { ray: idx, detail: "ray never leaves Δ2".into() })
        };
        let phi = |u: f64| -> Result<f64, GeometryError> { Ok(s.integral(&exit_point(u)?)? - trap.h) };
        let us: Vec<f64> = (0..GRID).map(|k| k as f64 / (GRID - 1) as f64).collect();
        let vals: Vec<f64> = us.iter().map(|&u| phi(u)).collect::<Result<_, _>>()?;
        for &u in us.iter().step_by(16) {
            check_monotone(s, &trap.s0, &exit_point(u)?, sign, idx)?;
        }
        let mut roots = Vec::new();
        for k in 0..GRID - 1 {
            if vals[k] == 0.0 || vals[k].signum() != vals[k + 1].signum() && vals[k + 1] != 0.0 {
                let (mut lo, mut hi) = (us[k], us[k + 1]);
                let flo = vals[k];
                for _ in 0..BISECT {
                    let mid = 0.5 * (lo + hi);
                    if phi(mid)?.signum() == flo.signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
        }
        let Some(&u) = roots.first() else {
            rays.push(SliceRay { theta_index: idx, direction: delta.clone(), t_boundary: f64::NAN, point: vec![], crossings: 0 });
            continue;
        };
        let point = exit_point(u)?;
        check_monotone(s, &trap.s0, &point, sign, idx)?;
        rays.push(SliceRay {
            theta_index: idx,
            direction: delta.clone(),
            t_boundary: u * len / (1.0 - u),
            point,
            crossings: roots.len(),
        });
    }
    let star_shaped = !rays.is_empty() && rays.iter().all(|r| r.crossings == 1);
    Ok(SliceSample {
        n_rays,
        tangent_dim: basis.len(),
        note: format!("star-shaped from s1 on {} rays: {star_shaped}", rays.len()),
        rays,
        star_shaped,
    })
}

/// H must move strictly in direction `sign` along `[from, to]`.
fn check_monotone(s: &SystemSpec, from: &[f64], to: &[f64], sign: f64, ray: usize) -> Result<(), GeometryError> {
    let d = sub(to, from);
    let mut prev = s.integral(from)?;
    for k in 1..=16 {
        let v = s.integral(&axpy(from, k as f64 / 16.0, &d))?;
        if sign * (v - prev) <= 0.0 {
            return Err(GeometryError::NonMonotoneH {
                ray,
                detail: format!("H goes {prev} -> {v} at step {k}/16 towards {to:?}"),
            });
        }
        prev = v;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chem() -> SystemSpec {
        SystemSpec::builtin_chem(1.0, 1.0, 1.0, 1.0).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn ray_exit_examples() {
        let s = chem();
        let g = [1.0, 1.0, 2.0];
        let d = delta_region(&s, &[0.0; 3], &g, 2.0, Mode::Plus);
        let (t, p) = d.ray_exit(&[0.0; 3], &[1.0, 1.0, 1.0]).unwrap();
        assert!(close(t, 0.5, 1e-15));
        assert_eq!(p, vec![0.5, 0.5, 0.5]);

        let y = PolyCone::orthant(3, Tol::default());
        assert_eq!(cone_ray_exit(&y, &[1.0, 1.0, 1.0], &[-1.0, 0.0, 0.0]), Some(1.0));
        // a direction in the recession cone never leaves
        let cplus = order_interval(&s, &[1.0, 1.0, 1.0], Mode::Plus);
        assert!(cplus.ray_exit(&[2.0, 2.0, 2.0], &[1.0, 1.0, 1.0]).is_none());
    }

    #[test]
    fn central_projection_examples() {
        let g = [1.0, 1.0, 2.0];
        assert_eq!(project_central(&[0.0; 3], &g, 2.0, &[1.0, 1.0, 1.0]).unwrap(), vec![0.5, 0.5, 0.5]);
        let y = [0.5, 0.5, 0.5];
        assert_eq!(project_central(&[0.0; 3], &g, 2.0, &y).unwrap(), y.to_vec());
        assert_eq!(project_central(&[1.0; 3], &g, 2.0, &[2.0, 2.0, 2.0]), Err(GeometryError::NoIntersection));
    }

    #[test]
    fn delta_g_for_chem() {
        let s = chem();
        let g: Vec<f64> = [1.0, 1.0, 2.0].iter().map(|v| v / 6f64.sqrt()).collect();
        // axis oracle: min over e1, e2, e3 of <g, e_i>
        let want = g.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(close(delta_g(s.cone_y(), &g), want, 1e-15));
        assert!(close(want, 1.0 / 6f64.sqrt(), 1e-15));
        // and it is a lower bound over random unit vectors of Y
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let y: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
            assert!(dot(&g, &y) / norm(&y) >= want - 1e-9);
        }
    }

    #[test]
    fn vertices_of_simplex_slice() {
        let s = chem();
        // P(0, g, 4) with g = (1,1,2) meets the axes at (4,0,0), (0,4,0), (0,0,2)
        let poly = delta_region(&s, &[0.0; 3], &[1.0, 1.0, 2.0], 4.0, Mode::Plus);
        let mut v = poly.vertices(Some((&[1.0, 1.0, 2.0], 4.0)));
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert_eq!(v, vec![vec![4.0, 0.0, 0.0], vec![0.0, 4.0, 0.0], vec![0.0, 0.0, 2.0]]);
        assert_eq!(poly.vertices(None).len(), 4);
    }

    #[test]
    fn plus_trap_at_chem_equilibrium() {
        let s = chem();
        let t = build_trap(&s, &[1.0, 1.0, 1.0], Mode::Plus).unwrap();
        let r6 = 6f64.sqrt();
        assert!(close(t.g_dot_c, 4.0 / r6, 1e-12));
        assert!(close(t.k2, 4.0 / r6 + 1.0, 1e-12));
        // H = sqrt(6) <g, x>, so H is constant on each slice
        assert!(close(t.p2_h, r6 * t.k2, 1e-9));
        assert!(close(t.h, (4.0 + r6 * t.k2) / 2.0, 1e-9));
        assert_eq!(t.k1_halvings, 1);
        assert!(close(t.k1, t.g_dot_c + 0.25, 1e-12));
        assert!(t.g_dot_c < t.k1 && t.k1 < t.k2);
        assert!(t.inner_margin > 1e-6 && t.outer_margin > 1e-6);
        assert!(t.theta > 0.0 && t.epsilon > 0.0);
        assert!(close(t.t1 * dot(&t.g, &t.s0), t.k1, 1e-9));
        assert!(close(t.t2 * dot(&t.g, &t.s0), t.k2, 1e-9));
        assert!(t.t1 > 1.0 && t.t2 > t.t1);
        assert!(s.cone_k().order(&t.c, &t.s0) == crate::cone::OrderRel::LL);
    }

    #[test]
    fn sandwich_against_fine_grid() {
        // independent check: barycentric grid over the vertex hulls
        let s = chem();
        let t = build_trap(&s, &[1.0, 1.0, 1.0], Mode::Plus).unwrap();
        let (d1, _) = delta_vertices(&s, &t.c, &t.g, t.k1, Mode::Plus);
        let (_, p2) = delta_vertices(&s, &t.c, &t.g, t.k2, Mode::Plus);
        let grid = |vs: &[Vec<f64>]| {
            let mut out = vec![];
            let m = 12;
            for i in 0..=m {
                for j in 0..=m - i {
                    let w = [i as f64 / m as f64, j as f64 / m as f64, (m - i - j) as f64 / m as f64];
                    for a in 0..vs.len() {
                        for b in 0..vs.len() {
                            for c in 0..vs.len() {
                                let x = axpy(&axpy(&numerics::scale(&vs[a], w[0]), w[1], &vs[b]), w[2], &vs[c]);
                                out.push(s.integral(&x).unwrap());
                            }
                        }
                    }
                }
            }
            out
        };
        assert!(grid(&d1).iter().all(|&v| v < t.h));
        assert!(grid(&p2).iter().all(|&v| v > t.h));
    }

    #[test]
    fn minus_trap_at_chem_equilibrium() {
        let s = chem();
        let t = build_trap(&s, &[1.0, 1.0, 1.0], Mode::Minus).unwrap();
        assert_eq!(t.k2, 0.0);
        assert_eq!(t.s2, vec![0.0; 3]);
        assert_eq!(t.t2, 0.0);
        assert!(close(t.h, 2.0, 1e-12));
        assert!(close(t.k1, 4.0 / 6f64.sqrt() * 0.75, 1e-12));
        assert!(close(t.theta, 1.0, 1e-9));
        assert!(0.0 < t.t1 && t.t1 < 1.0);
        assert!(t.inner_margin > 1e-6 && t.outer_margin > 1e-6);
        let (_, p2) = delta_vertices(&s, &t.c, &t.g, 0.0, Mode::Minus);
        assert_eq!(p2, vec![vec![0.0; 3]]);
    }

    #[test]
    fn trap_from_origin() {
        let s = chem();
        let t = build_trap(&s, &[0.0; 3], Mode::Plus).unwrap();
        assert_eq!(t.g_dot_c, 0.0);
        assert!(t.inner_margin > 0.0 && t.outer_margin > 0.0);
        assert_eq!(build_trap(&s, &[0.0; 3], Mode::Minus), Err(GeometryError::ZeroBase));
    }

    #[test]
    fn trap_rejects_bad_inputs() {
        let s = chem();
        assert!(matches!(build_trap(&s, &[-1.0, 0.0, 0.0], Mode::Plus), Err(GeometryError::NotInY(_))));
        let opts = TrapOptions { g: Some(vec![0.0, 0.0, 1.0]), ..Default::default() };
        assert!(matches!(build_trap_with(&s, &[1.0; 3], Mode::Plus, &opts), Err(GeometryError::BadG(_))));
        let opts = TrapOptions { h: Some(100.0), ..Default::default() };
        assert!(matches!(build_trap_with(&s, &[1.0; 3], Mode::Plus, &opts), Err(GeometryError::TrapFailed { .. })));
    }

    #[test]
    fn slice_crosses_once_per_ray() {
        let s = chem();
        for mode in [Mode::Plus, Mode::Minus] {
            let t = build_trap(&s, &[1.0, 1.0, 1.0], mode).unwrap();
            let sl = levelset_slice_sample(&s, &t, 64).unwrap();
            assert_eq!(sl.rays.len(), 64);
            assert_eq!(sl.tangent_dim, 2);
            assert!(sl.star_shaped, "{mode:?}: {:?}", sl.rays.iter().map(|r| r.crossings).collect::<Vec<_>>());
            for r in &sl.rays {
                assert!(close(s.integral(&r.point).unwrap(), t.h, 1e-9));
                assert!(r.t_boundary > 0.0);
            }
        }
    }

    #[test]
    fn slice_of_origin_level_four() {
        let s = chem();
        let opts = TrapOptions { k2: Some(2.0), h: Some(4.0), ..Default::default() };
        let t = build_trap_with(&s, &[0.0; 3], Mode::Plus, &opts).unwrap();
        let sl = levelset_slice_sample(&s, &t, 64).unwrap();
        assert!(sl.star_shaped);
        for r in &sl.rays {
            let x = &r.point;
            // on the boundary of the orthant with x1 + x2 + 2 x3 = 4
            assert!(x.iter().cloned().fold(f64::INFINITY, f64::min).abs() < 1e-9, "{x:?}");
            assert!(close(x[0] + x[1] + 2.0 * x[2], 4.0, 1e-9));
            assert!(x[0] <= 4.0 + 1e-9 && x[1] <= 4.0 + 1e-9 && x[2] <= 2.0 + 1e-9);
        }
    }

    #[test]
    fn boundary_projections_decrease_in_h() {
        let s = chem();
        let t = build_trap(&s, &[1.0, 1.0, 1.0], Mode::Plus).unwrap();
        let d2 = delta_region(&s, &t.c, &t.g, t.k2, Mode::Plus);
        let cplus = order_interval(&s, &t.c, Mode::Plus);
        let basis = tangent_basis(&t.g, None);
        for delta in directions(&basis, 16, 3) {
            let b = |tt: f64| d2.ray_exit(&t.s0, &sub(&axpy(&t.s1, tt, &delta), &t.s0)).unwrap().1;
            let mut prev: Option<f64> = None;
            for k in 1..40 {
                let p = b(0.05 * k as f64);
                if cplus.slack(&p).abs() > 1e-9 {
                    prev = None;
                    continue;
                }
                let hv = s.integral(&p).unwrap();
                if let Some(hp) = prev {
                    assert!(hv < hp);
                }
                prev = Some(hv);
            }
        }
    }

    #[test]
    fn diameter_shrinks_with_r() {
        let s = chem();
        let c = [1.0, 1.0, 1.0];
        let g: Vec<f64> = [1.0, 1.0, 2.0].iter().map(|v| v / 6f64.sqrt()).collect();
        let gc = dot(&g, &c);
        let dk = delta_g(s.cone_k(), &g);
        let mut last = f64::INFINITY;
        for eps in [0.1, 0.01, 0.001] {
            let (v, _) = delta_vertices(&s, &c, &g, gc + eps, Mode::Plus);
            let mut diam: f64 = 0.0;
            for a in &v {
                for b in &v {
                    diam = diam.max(norm(&sub(a, b)));
                }
            }
            assert!(diam <= 2.0 * eps / dk + 1e-12);
            assert!(diam < last);
            last = diam;
        }
    }

    #[test]
    fn hull_samples_stay_inside() {
        let s = chem();
        let poly = delta_region(&s, &[1.0; 3], &[1.0, 1.0, 2.0], 5.0, Mode::Plus);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = sample_hull(&poly.vertices(None), MIN_SAMPLES, &mut rng);
        assert!(pts.len() >= MIN_SAMPLES);
        assert!(pts.iter().all(|p| poly.contains(p, 1e-9)));
    }
}
