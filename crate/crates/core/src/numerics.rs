//! Dense small-scale linear algebra.
//!
//! Everything here targets systems with a handful of state variables: a
//! row-major [`Mat`], Householder QR with column pivoting (the single
//! factorization primitive), least squares on top of it, and a tiny dense
//! simplex that maximises the common margin of a set of homogeneous strict
//! inequalities.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("degenerate system: numerical rank {rank} < {cols} columns")]
    DegenerateSystem { rank: usize, cols: usize },
    #[error("invalid tolerance: abs={abs}, rel={rel}")]
    InvalidTol { abs: f64, rel: f64 },
}

/// Absolute/relative tolerance pair.
///
/// Strict inequalities (interior membership, strict ordering) are turned into
/// margin tests against `abs * (1 + scale)`; `rel` is used for rank decisions
/// relative to the largest pivot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tol {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tol {
    fn default() -> Self {
        Tol { abs: 1e-9, rel: 1e-12 }
    }
}

impl Tol {
    pub fn new(abs: f64, rel: f64) -> Result<Self, NumericsError> {
        let ok = abs.is_finite() && rel.is_finite() && abs >= 0.0 && rel >= 0.0;
        if !ok || (abs == 0.0 && rel == 0.0) {
            return Err(NumericsError::InvalidTol { abs, rel });
        }
        Ok(Tol { abs, rel })
    }

    /// Margin threshold for a quantity whose natural scale is `scale`.
    pub fn scaled(&self, scale: f64) -> f64 {
        self.abs * (1.0 + scale)
    }
}

/// Row-major dense matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if rows * cols != data.len() {
            return Err(NumericsError::Shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite { row: k / cols.max(1), col: k % cols.max(1) });
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, NumericsError> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(NumericsError::Shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Mat::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.row_iter().map(<[f64]>::to_vec).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.row_iter().map(|r| dot(r, x)).collect()
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Sub-matrix made of the listed rows.
    pub fn select_rows(&self, idx: &[usize]) -> Mat {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Mat { rows: idx.len(), cols: self.cols, data }
    }

    /// Appends `row` at the bottom.
    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.cols);
        self.data.extend_from_slice(row);
        self.rows += 1;
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// `a + s * d`
pub fn axpy(a: &[f64], s: f64, d: &[f64]) -> Vec<f64> {
    a.iter().zip(d).map(|(x, y)| x + s * y).collect()
}

pub fn normalized(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm(a);
    (n > 0.0 && n.is_finite()).then(|| scale(a, 1.0 / n))
}

/// Householder QR with column pivoting, `A P = Q R`.
struct PivotedQr {
    m: usize,
    n: usize,
    /// Working copy; upper triangle holds R after factorization.
    a: Vec<f64>,
    /// Householder vectors acting on rows k.. (empty when the column was zero).
    reflectors: Vec<Vec<f64>>,
    perm: Vec<usize>,
}

impl PivotedQr {
    fn factor(mat: &Mat) -> Self {
        let (m, n) = (mat.rows, mat.cols);
        let mut a = mat.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut reflectors = Vec::new();
        for k in 0..m.min(n) {
            let col_norm2 = |a: &[f64], j: usize| (k..m).map(|i| a[i * n + j].powi(2)).sum::<f64>();
            let (p, _) = (k..n)
                .map(|j| (j, col_norm2(&a, j)))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if p != k {
                for i in 0..m {
                    a.swap(i * n + k, i * n + p);
                }
                perm.swap(k, p);
            }
            let x: Vec<f64> = (k..m).map(|i| a[i * n + k]).collect();
            let xn = norm(&x);
            if xn == 0.0 {
                reflectors.push(Vec::new());
                continue;
            }
            let alpha = if x[0] >= 0.0 { -xn } else { xn };
            let mut v = x;
            v[0] -= alpha;
            let vv = dot(&v, &v);
            for j in k..n {
                let s: f64 = (k..m).map(|i| v[i - k] * a[i * n + j]).sum::<f64>() * 2.0 / vv;
                for i in k..m {
                    a[i * n + j] -= s * v[i - k];
                }
            }
            reflectors.push(v);
        }
        PivotedQr { m, n, a, reflectors, perm }
    }

    fn r_diag(&self) -> Vec<f64> {
        (0..self.m.min(self.n)).map(|k| self.a[k * self.n + k]).collect()
    }

    fn rank(&self, tol: &Tol) -> usize {
        let d = self.r_diag();
        let smax = d.first().map(|v| v.abs()).unwrap_or(0.0);
        let thresh = tol.abs + tol.rel * smax;
        d.iter().filter(|v| v.abs() > thresh).count()
    }

    /// Applies `Qᵀ` to `b` in place.
    fn apply_qt(&self, b: &mut [f64]) {
        for (k, v) in self.reflectors.iter().enumerate() {
            if v.is_empty() {
                continue;
            }
            let vv = dot(v, v);
            let s = (k..self.m).map(|i| v[i - k] * b[i]).sum::<f64>() * 2.0 / vv;
            for i in k..self.m {
                b[i] -= s * v[i - k];
            }
        }
    }

    /// Applies `Q` to `b` in place.
    fn apply_q(&self, b: &mut [f64]) {
        for (k, v) in self.reflectors.iter().enumerate().rev() {
            if v.is_empty() {
                continue;
            }
            let vv = dot(v, v);
            let s = (k..self.m).map(|i| v[i - k] * b[i]).sum::<f64>() * 2.0 / vv;
            for i in k..self.m {
                b[i] -= s * v[i - k];
            }
        }
    }
}

/// Numerical rank: pivots of the column-pivoted QR below
/// `tol.abs + tol.rel * |R₀₀|` count as zero.
pub fn rank(m: &Mat, tol: &Tol) -> usize {
    if m.rows == 0 || m.cols == 0 {
        return 0;
    }
    PivotedQr::factor(m).rank(tol)
}

/// Least-squares solution of `m x ≈ b` for a full-column-rank `m`.
pub fn lstsq(m: &Mat, b: &[f64], tol: &Tol) -> Result<Vec<f64>, NumericsError> {
    if m.rows < m.cols {
        return Err(NumericsError::Shape(format!(
            "lstsq needs rows >= cols, got {}x{}",
            m.rows, m.cols
        )));
    }
    if b.len() != m.rows {
        return Err(NumericsError::Shape(format!(
            "right-hand side has {} entries, matrix has {} rows",
            b.len(),
            m.rows
        )));
    }
    let qr = PivotedQr::factor(m);
    let r = qr.rank(tol);
    if r < m.cols {
        return Err(NumericsError::DegenerateSystem { rank: r, cols: m.cols });
    }
    let mut qtb = b.to_vec();
    qr.apply_qt(&mut qtb);
    let n = m.cols;
    let mut z = vec![0.0; n];
    for k in (0..n).rev() {
        let mut s = qtb[k];
        for j in k + 1..n {
            s -= qr.a[k * n + j] * z[j];
        }
        z[k] = s / qr.a[k * n + k];
    }
    let mut x = vec![0.0; n];
    for (k, &p) in qr.perm.iter().enumerate() {
        x[p] = z[k];
    }
    Ok(x)
}

/// Unit vector spanning the null space of an `(n-1) x n` matrix of rank `n-1`.
pub fn null_vector(m: &Mat, tol: &Tol) -> Option<Vec<f64>> {
    let n = m.cols;
    if n == 0 || m.rows + 1 != n {
        return None;
    }
    if m.rows == 0 {
        return Some(vec![1.0]);
    }
    // QR of mᵀ (n x (n-1)); the last column of Q is orthogonal to range(mᵀ).
    let qr = PivotedQr::factor(&m.transpose());
    if qr.rank(tol) != n - 1 {
        return None;
    }
    let mut e = vec![0.0; n];
    e[n - 1] = 1.0;
    qr.apply_q(&mut e);
    normalized(&e)
}

/// Finds `x` with `‖x‖∞ ≤ 1` maximising `min_j (A x)_j`.
///
/// Returns `None` when the optimal margin is not above `tol.abs`, i.e. the
/// strict system `A x > 0` is (numerically) infeasible.
pub fn feas_lp(a: &Mat, tol: &Tol) -> Option<Vec<f64>> {
    let (margin, x) = max_margin(a)?;
    (margin > tol.abs).then_some(x)
}

/// Optimal margin and maximiser of `max s  s.t.  A x >= s, |x_i| <= 1, s <= 1`.
///
/// Written as a standard-form LP over `x = p - q` with `p, q, s >= 0`; the
/// origin is a feasible basis, so a single simplex phase with Bland's rule
/// suffices.
pub fn max_margin(a: &Mat) -> Option<(f64, Vec<f64>)> {
    let (m, n) = (a.rows, a.cols);
    let nvar = 2 * n + 1;
    let ncons = m + 2 * n + 1;
    let width = nvar + ncons + 1;
    let mut t = vec![0.0; (ncons + 1) * width];
    let at = |i: usize, j: usize| i * width + j;
    for j in 0..m {
        for i in 0..n {
            t[at(j, i)] = -a.get(j, i);
            t[at(j, n + i)] = a.get(j, i);
        }
        t[at(j, 2 * n)] = 1.0;
    }
    for i in 0..2 * n + 1 {
        let r = m + i;
        t[at(r, i)] = 1.0;
        t[at(r, width - 1)] = 1.0;
    }
    for r in 0..ncons {
        t[at(r, nvar + r)] = 1.0;
    }
    // objective row: z - s = 0
    t[at(ncons, 2 * n)] = -1.0;
    let mut basis: Vec<usize> = (nvar..nvar + ncons).collect();
    let eps = 1e-12;
    for _ in 0..50_000 {
        let Some(enter) = (0..nvar + ncons).find(|&j| t[at(ncons, j)] < -eps) else {
            break;
        };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..ncons {
            let coef = t[at(r, enter)];
            if coef > eps {
                let ratio = t[at(r, width - 1)] / coef;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((lr, lratio)) => {
                        if ratio < lratio - eps || (ratio <= lratio + eps && basis[r] < basis[lr]) {
                            Some((r, ratio))
                        } else {
                            Some((lr, lratio))
                        }
                    }
                };
            }
        }
        // bounded by construction (s <= 1, |x| <= 1)
        let (pr, _) = leave?;
        let piv = t[at(pr, enter)];
        for j in 0..width {
            t[at(pr, j)] /= piv;
        }
        for r in 0..=ncons {
            if r == pr {
                continue;
            }
            let f = t[at(r, enter)];
            if f != 0.0 {
                for j in 0..width {
                    t[at(r, j)] -= f * t[at(pr, j)];
                }
            }
        }
        basis[pr] = enter;
    }
    let mut vals = vec![0.0; nvar];
    for (r, &b) in basis.iter().enumerate() {
        if b < nvar {
            vals[b] = t[at(r, width - 1)];
        }
    }
    let x: Vec<f64> = (0..n).map(|i| vals[i] - vals[n + i]).collect();
    let margin = a.row_iter().map(|r| dot(r, &x)).fold(f64::INFINITY, f64::min);
    let margin = if m == 0 { vals[2 * n] } else { margin };
    Some((margin, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chem_facets() -> Mat {
        Mat::from_rows(&[[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 1.0]]).unwrap()
    }

    #[test]
    fn rank_examples() {
        let tol = Tol::default();
        assert_eq!(rank(&Mat::identity(3), &tol), 3);
        assert_eq!(rank(&Mat::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap(), &tol), 1);
        assert_eq!(rank(&chem_facets(), &tol), 3);
        assert_eq!(rank(&Mat::zeros(2, 3), &tol), 0);
    }

    #[test]
    fn lstsq_examples() {
        let tol = Tol::default();
        let b = [1.5, -2.0, 0.25];
        let x = lstsq(&Mat::identity(3), &b, &tol).unwrap();
        for (u, v) in x.iter().zip(&b) {
            assert!((u - v).abs() < 1e-15);
        }
        let stacked = Mat::from_rows(&[
            [1.0, 0.0],
            [0.0, 1.0],
            [1.0, 0.0],
            [0.0, 1.0],
        ])
        .unwrap();
        let x = lstsq(&stacked, &[3.0, -1.0, 3.0, -1.0], &tol).unwrap();
        assert!((x[0] - 3.0).abs() < 1e-14 && (x[1] + 1.0).abs() < 1e-14);
        // minimise x^2 + (x-2)^2 -> x = 1
        let x = lstsq(&Mat::from_rows(&[[1.0], [1.0]]).unwrap(), &[0.0, 2.0], &tol).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn lstsq_rejects_rank_deficient() {
        let m = Mat::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]).unwrap();
        assert!(matches!(
            lstsq(&m, &[1.0, 2.0, 3.0], &Tol::default()),
            Err(NumericsError::DegenerateSystem { rank: 1, cols: 2 })
        ));
    }

    #[test]
    fn feas_lp_examples() {
        let tol = Tol::default();
        let x = feas_lp(&Mat::identity(3), &tol).unwrap();
        assert!(x.iter().all(|&v| v > 0.0));
        assert!(feas_lp(&Mat::from_rows(&[[1.0, 0.0], [-1.0, 0.0]]).unwrap(), &tol).is_none());
        let a = chem_facets();
        let x = feas_lp(&a, &tol).unwrap();
        assert!(a.mul_vec(&x).iter().all(|&v| v > 1e-9));
        // direct substitution at (1,1,1)
        assert_eq!(a.mul_vec(&[1.0, 1.0, 1.0]), vec![1.0, 2.0, 2.0, 3.0]);
    }

    #[test]
    fn null_vector_of_facet_pair() {
        let a = Mat::from_rows(&[[0.0, 0.0, 1.0], [0.0, 1.0, 1.0]]).unwrap();
        let v = null_vector(&a, &Tol::default()).unwrap();
        assert!((v[0].abs() - 1.0).abs() < 1e-14);
        assert!(v[1].abs() < 1e-14 && v[2].abs() < 1e-14);
    }

    #[test]
    fn tol_validation() {
        assert!(Tol::new(0.0, 0.0).is_err());
        assert!(Tol::new(-1.0, 1e-3).is_err());
        assert!(Tol::new(0.0, 1e-3).is_ok());
    }

    fn small_mat() -> impl Strategy<Value = Mat> {
        (1usize..5, 1usize..5).prop_flat_map(|(r, c)| {
            prop::collection::vec(-3i32..4, r * c)
                .prop_map(move |v| Mat::new(r, c, v.into_iter().map(f64::from).collect()).unwrap())
        })
    }

    proptest! {
        #[test]
        fn rank_equals_rank_of_transpose(m in small_mat()) {
            let tol = Tol::default();
            prop_assert_eq!(rank(&m, &tol), rank(&m.transpose(), &tol));
        }

        #[test]
        fn lstsq_residual_is_orthogonal(
            entries in prop::collection::vec(-2.0f64..2.0, 12),
            b in prop::collection::vec(-5.0f64..5.0, 4),
        ) {
            let mut m = Mat::new(4, 3, entries).unwrap();
            for i in 0..3 {
                let v = m.get(i, i) + 4.0;
                m.set(i, i, v);
            }
            let x = lstsq(&m, &b, &Tol::default()).unwrap();
            let r = sub(&m.mul_vec(&x), &b);
            for g in m.transpose().mul_vec(&r) {
                prop_assert!(g.abs() < 1e-10);
            }
        }

        #[test]
        fn feas_lp_solution_has_positive_margin(m in small_mat()) {
            if let Some(x) = feas_lp(&m, &Tol::default()) {
                prop_assert!(norm_inf(&x) <= 1.0 + 1e-12);
                for v in m.mul_vec(&x) {
                    prop_assert!(v >= 1e-9);
                }
            }
        }
    }
}
