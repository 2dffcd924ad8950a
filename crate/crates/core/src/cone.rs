//! Proper polyhedral cones and the orders they induce.
//!
//! A cone is given by inward facet normals, `K = {x : a_j·x ≥ 0 ∀j}`. The
//! extremal rays are always derived from the facets by enumerating
//! `(n-1)`-subsets of facets, which costs `O(C(m, n-1))` null-space solves and
//! is why the number of facets is capped at [`MAX_FACETS`].

use serde::Serialize;
use thiserror::Error;

use crate::numerics::{self, dot, norm, sub, Mat, Tol};

pub const MAX_FACETS: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConeError {
    #[error("cone is not pointed: facet matrix has rank {rank} < {dim}")]
    NotPointed { rank: usize, dim: usize },
    #[error("cone has empty interior: best common facet margin {margin:.3e} at {witness:?}")]
    NotSolid { margin: f64, witness: Vec<f64> },
    #[error("too many facets: {0} (max {MAX_FACETS})")]
    TooManyFacets(usize),
    #[error("bad facet matrix: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Membership {
    Interior,
    Boundary,
    Outside,
}

/// Strongest order relation between two points: `≪`, `<`, `≤` (equal within
/// tolerance) or unordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OrderRel {
    /// `y − x` in the interior.
    LL,
    /// `y − x` on the boundary and nonzero.
    LT,
    /// `y ≈ x`.
    LEQ,
    NONE,
}

impl OrderRel {
    pub fn is_strict(self) -> bool {
        matches!(self, OrderRel::LL | OrderRel::LT)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyCone {
    facets: Mat,
    rays: Vec<Vec<f64>>,
    tol: Tol,
}

impl PolyCone {
    pub fn from_facets(facets: Mat, tol: Tol) -> Result<Self, ConeError> {
        let (m, n) = (facets.rows(), facets.cols());
        if n == 0 {
            return Err(ConeError::Shape("zero-dimensional cone".into()));
        }
        if m > MAX_FACETS {
            return Err(ConeError::TooManyFacets(m));
        }
        let rank = numerics::rank(&facets, &tol);
        if m < n || rank < n {
            return Err(ConeError::NotPointed { rank, dim: n });
        }
        match numerics::max_margin(&facets) {
            Some((margin, _)) if margin > tol.abs => {}
            Some((margin, witness)) => return Err(ConeError::NotSolid { margin, witness }),
            None => return Err(ConeError::NotSolid { margin: 0.0, witness: vec![0.0; n] }),
        }
        let rays = enumerate_rays(&facets, &tol);
        Ok(PolyCone { facets, rays, tol })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], tol: Tol) -> Result<Self, ConeError> {
        let facets = Mat::from_rows(rows).map_err(|e| ConeError::Shape(e.to_string()))?;
        Self::from_facets(facets, tol)
    }

    /// Nonnegative orthant of dimension `n`.
    pub fn orthant(n: usize, tol: Tol) -> Self {
        Self::from_facets(Mat::identity(n), tol).expect("orthant is proper")
    }

    pub fn dim(&self) -> usize {
        self.facets.cols()
    }

    pub fn facets(&self) -> &Mat {
        &self.facets
    }

    /// Unit-length extremal generators.
    pub fn rays(&self) -> &[Vec<f64>] {
        &self.rays
    }

    pub fn tol(&self) -> Tol {
        self.tol
    }

    /// Facet values `a_j·v`.
    pub fn margins(&self, v: &[f64]) -> Vec<f64> {
        self.facets.mul_vec(v)
    }

    pub fn min_margin(&self, v: &[f64]) -> f64 {
        self.margins(v).into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Smallest facet value with each facet normal scaled to unit length.
    pub fn min_normalized_margin(&self, v: &[f64]) -> f64 {
        self.facets
            .row_iter()
            .map(|a| dot(a, v) / norm(a))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn classify(&self, v: &[f64]) -> Membership {
        let thresh = self.tol.scaled(norm(v));
        let mut interior = true;
        for a in self.facets.row_iter() {
            let m = dot(a, v);
            if m < -thresh {
                return Membership::Outside;
            }
            if m <= thresh {
                interior = false;
            }
        }
        if interior {
            Membership::Interior
        } else {
            Membership::Boundary
        }
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        self.classify(v) != Membership::Outside
    }

    /// Relation of `x` and `y` under the order `x ≤ y ⇔ y − x ∈ K`.
    pub fn order(&self, x: &[f64], y: &[f64]) -> OrderRel {
        let d = sub(y, x);
        match self.classify(&d) {
            Membership::Interior => OrderRel::LL,
            Membership::Outside => OrderRel::NONE,
            Membership::Boundary if norm(&d) > self.tol.abs => OrderRel::LT,
            Membership::Boundary => OrderRel::LEQ,
        }
    }

    /// Classifies `g` against the dual cone `K*` via inner products with the
    /// extremal rays.
    pub fn dual_classify(&self, g: &[f64]) -> Membership {
        let thresh = self.tol.scaled(norm(g));
        let mut interior = true;
        for r in &self.rays {
            let m = dot(g, r);
            if m < -thresh {
                return Membership::Outside;
            }
            if m <= thresh {
                interior = false;
            }
        }
        if interior {
            Membership::Interior
        } else {
            Membership::Boundary
        }
    }

    /// Smallest `⟨g, r⟩` over the unit extremal rays.
    pub fn dual_margin(&self, g: &[f64]) -> f64 {
        self.rays.iter().map(|r| dot(g, r)).fold(f64::INFINITY, f64::min)
    }

    /// `true` iff every extremal ray of `inner` lies in `self`.
    pub fn contains_cone(&self, inner: &PolyCone) -> bool {
        inner.dim() == self.dim() && inner.rays.iter().all(|r| self.contains(r))
    }

    /// Normalised sum of the extremal rays; an interior point of a solid cone.
    pub fn interior_direction(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.dim()];
        for r in &self.rays {
            for (a, b) in s.iter_mut().zip(r) {
                *a += b;
            }
        }
        numerics::normalized(&s).expect("solid cone has nonzero ray sum")
    }

    /// Indices of facets active at `v` (|a_j·v| within tolerance).
    pub fn active_facets(&self, v: &[f64]) -> Vec<usize> {
        let thresh = self.tol.scaled(norm(v));
        self.facets
            .row_iter()
            .enumerate()
            .filter(|(_, a)| dot(a, v).abs() <= thresh)
            .map(|(j, _)| j)
            .collect()
    }
}

fn enumerate_rays(facets: &Mat, tol: &Tol) -> Vec<Vec<f64>> {
    let (m, n) = (facets.rows(), facets.cols());
    let mut rays: Vec<Vec<f64>> = Vec::new();
    for subset in Combinations::new(m, n - 1) {
        let sub_mat = facets.select_rows(&subset);
        let Some(d) = numerics::null_vector(&sub_mat, tol) else {
            continue;
        };
        let oriented = [d.clone(), numerics::scale(&d, -1.0)]
            .into_iter()
            .find(|c| facets.row_iter().all(|a| dot(a, c) >= -tol.scaled(norm(a))));
        let Some(r) = oriented else { continue };
        if !rays.iter().any(|q| norm(&sub(q, &r)) <= 1e-8) {
            rays.push(r);
        }
    }
    rays
}

/// Lexicographic `k`-subsets of `0..n`.
pub(crate) struct Combinations {
    n: usize,
    idx: Option<Vec<usize>>,
}

impl Combinations {
    pub(crate) fn new(n: usize, k: usize) -> Self {
        Combinations { n, idx: (k <= n).then(|| (0..k).collect()) }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let cur = self.idx.clone()?;
        let k = cur.len();
        let mut nxt = cur.clone();
        let mut i = k;
        loop {
            if i == 0 {
                self.idx = None;
                break;
            }
            i -= 1;
            if nxt[i] < self.n - k + i {
                nxt[i] += 1;
                for j in i + 1..k {
                    nxt[j] = nxt[j - 1] + 1;
                }
                self.idx = Some(nxt);
                break;
            }
        }
        Some(cur)
    }
}
