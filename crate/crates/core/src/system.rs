//! The dynamical system `ẋ = F(x)` together with its first integral `H`, the
//! order cone `K` and the state space `Y`.
//!
//! Systems are loaded from TOML or JSON:
//!
//! ```toml
//! dim = 3
//! field = ["-(k1f*x1*x2 - k1r*x3) - (k2f*x1 - k2r*x2)", "...", "..."]
//! integral = "x1 + x2 + 2*x3"
//! cone_K = [[0,0,1],[1,0,1],[0,1,1],[1,1,1]]
//! # cone_Y defaults to the nonnegative orthant
//!
//! [params]
//! k1f = 1.0
//! ```
//!
//! `H` is shifted so that `H(0) = 0`. Fields with division may fail to be
//! locally Lipschitz on the boundary of `Y`; nothing here detects that.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cone::{ConeError, Membership, PolyCone};
use crate::expr::{EvalError, Expr, ParseError, Params};
use crate::numerics::{dot, norm, Mat, Tol};

pub const CHEM_TOML: &str = include_str!("../systems/chem.toml");

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("cannot parse {what}: {source}")]
    Parse { what: String, source: ParseError },
    #[error("{0}")]
    Eval(#[from] EvalError),
    #[error("cone {which}: {source}")]
    Cone { which: &'static str, source: ConeError },
    #[error("K must contain Y: ray {ray:?} of Y lies outside K")]
    KMissesY { ray: Vec<f64> },
    #[error("invalid system: {0}")]
    Invalid(String),
    #[error("cannot read system file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed system file: {0}")]
    Format(String),
}

/// On-disk representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub dim: usize,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub field: Vec<String>,
    pub integral: String,
    #[serde(rename = "cone_K")]
    pub cone_k: Vec<Vec<f64>>,
    #[serde(rename = "cone_Y", default, skip_serializing_if = "Option::is_none")]
    pub cone_y: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct SystemSpec {
    dim: usize,
    params: Params,
    field: Vec<Expr>,
    integral: Expr,
    grad_integral: Vec<Expr>,
    jacobian: Vec<Vec<Expr>>,
    cone_k: PolyCone,
    cone_y: PolyCone,
    tol: Tol,
    // parameter-free copies used for evaluation
    field_b: Vec<Expr>,
    integral_b: Expr,
    grad_b: Vec<Expr>,
    jac_b: Vec<Vec<Expr>>,
    chem_rates: Option<[f64; 4]>,
    source: SystemFile,
}

/// Result of a sampled hypothesis check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleReport {
    pub n_samples: usize,
    pub max_violation: f64,
    pub worst_point: Vec<f64>,
    pub eval_failures: usize,
    pub pass: bool,
}

const EMPTY: &Params = &BTreeMap::new();

impl SystemSpec {
    pub fn from_file(file: SystemFile, tol: Tol) -> Result<Self, SystemError> {
        let n = file.dim;
        if n == 0 {
            return Err(SystemError::Invalid("dim must be positive".into()));
        }
        if file.field.len() != n {
            return Err(SystemError::Invalid(format!(
                "field has {} components, dim is {n}",
                file.field.len()
            )));
        }
        if let Some((name, v)) = file.params.iter().find(|(_, v)| !v.is_finite()) {
            return Err(SystemError::Invalid(format!("parameter `{name}` = {v} is not finite")));
        }
        let names: BTreeSet<String> = file.params.keys().cloned().collect();
        let parse = |what: String, src: &str| {
            Expr::parse(src, n, &names).map_err(|source| SystemError::Parse { what, source })
        };
        let field = file
            .field
            .iter()
            .enumerate()
            .map(|(i, src)| parse(format!("field[{i}]"), src))
            .collect::<Result<Vec<_>, _>>()?;
        let raw_h = parse("integral".into(), &file.integral)?;
        let h0 = raw_h.eval(&vec![0.0; n], &file.params)?;
        let integral = raw_h - Expr::num(h0);

        let cone = |which: &'static str, rows: &[Vec<f64>]| {
            if rows.iter().any(|r| r.len() != n) {
                return Err(SystemError::Invalid(format!("cone {which} rows must have length {n}")));
            }
            PolyCone::from_rows(rows, tol).map_err(|source| SystemError::Cone { which, source })
        };
        let cone_k = cone("K", &file.cone_k)?;
        let cone_y = match &file.cone_y {
            Some(rows) => cone("Y", rows)?,
            None => PolyCone::orthant(n, tol),
        };
        if let Some(ray) = cone_y.rays().iter().find(|r| !cone_k.contains(r)) {
            return Err(SystemError::KMissesY { ray: ray.clone() });
        }

        let grad_integral: Vec<Expr> = (0..n).map(|i| integral.diff(i)).collect();
        let jacobian: Vec<Vec<Expr>> =
            field.iter().map(|f| (0..n).map(|j| f.diff(j)).collect()).collect();
        let bind_all = |v: &[Expr]| v.iter().map(|e| e.bind(&file.params)).collect::<Result<Vec<_>, _>>();
        let field_b = bind_all(&field)?;
        let integral_b = integral.bind(&file.params)?;
        let grad_b = bind_all(&grad_integral)?;
        let jac_b = jacobian.iter().map(|row| bind_all(row)).collect::<Result<Vec<_>, _>>()?;

        let mut spec = SystemSpec {
            dim: n,
            params: file.params.clone(),
            field,
            integral,
            grad_integral,
            jacobian,
            cone_k,
            cone_y,
            tol,
            field_b,
            integral_b,
            grad_b,
            jac_b,
            chem_rates: None,
            source: file,
        };
        spec.chem_rates = spec.detect_chem();
        Ok(spec)
    }

    pub fn from_toml_str(src: &str, tol: Tol) -> Result<Self, SystemError> {
        let file: SystemFile = toml::from_str(src).map_err(|e| SystemError::Format(e.to_string()))?;
        Self::from_file(file, tol)
    }

    pub fn from_json_str(src: &str, tol: Tol) -> Result<Self, SystemError> {
        let file: SystemFile = serde_json::from_str(src).map_err(|e| SystemError::Format(e.to_string()))?;
        Self::from_file(file, tol)
    }

    /// Loads by extension (`.json` or `.toml`); other extensions try TOML
    /// first, then JSON.
    pub fn load(path: &Path, tol: Tol) -> Result<Self, SystemError> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text, tol),
            Some("toml") => Self::from_toml_str(&text, tol),
            _ => Self::from_toml_str(&text, tol).or_else(|_| Self::from_json_str(&text, tol)),
        }
    }

    /// Reaction network `A + B ⇌ C`, `A ⇌ B` with mass-action kinetics.
    pub fn builtin_chem(k1f: f64, k1r: f64, k2f: f64, k2r: f64) -> Result<Self, SystemError> {
        Self::builtin_chem_with_tol(k1f, k1r, k2f, k2r, Tol::default())
    }

    pub fn builtin_chem_with_tol(k1f: f64, k1r: f64, k2f: f64, k2r: f64, tol: Tol) -> Result<Self, SystemError> {
        let rates = [k1f, k1r, k2f, k2r];
        if rates.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
            return Err(SystemError::Invalid(format!("rates must be positive, got {rates:?}")));
        }
        let mut file = chem_file();
        for (name, k) in CHEM_PARAMS.iter().zip(rates) {
            file.params.insert((*name).to_string(), k);
        }
        Self::from_file(file, tol)
    }

    fn detect_chem(&self) -> Option<[f64; 4]> {
        let p = &self.source.params;
        if p.len() != 4 || !CHEM_PARAMS.iter().all(|k| p.get(*k).is_some_and(|v| *v > 0.0)) {
            return None;
        }
        let reference = chem_file();
        let nf = |f: &SystemFile| -> Option<(Vec<String>, String)> {
            let names: BTreeSet<String> = CHEM_PARAMS.iter().map(|s| s.to_string()).collect();
            let fld = f.field.iter().map(|s| Expr::parse(s, 3, &names).ok().map(|e| e.to_string()));
            let h = Expr::parse(&f.integral, 3, &names).ok()?.to_string();
            Some((fld.collect::<Option<Vec<_>>>()?, h))
        };
        let same_cones = self.source.cone_k == reference.cone_k
            && self.source.cone_y.as_ref().is_none_or(|y| *y == identity_rows(3));
        (self.dim == 3 && same_cones && nf(&self.source)? == nf(&reference)?)
            .then(|| CHEM_PARAMS.map(|k| p[k]))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn field_exprs(&self) -> &[Expr] {
        &self.field
    }

    pub fn integral_expr(&self) -> &Expr {
        &self.integral
    }

    pub fn grad_integral_exprs(&self) -> &[Expr] {
        &self.grad_integral
    }

    pub fn jacobian_exprs(&self) -> &[Vec<Expr>] {
        &self.jacobian
    }

    pub fn cone_k(&self) -> &PolyCone {
        &self.cone_k
    }

    pub fn cone_y(&self) -> &PolyCone {
        &self.cone_y
    }

    pub fn tol(&self) -> Tol {
        self.tol
    }

    pub fn source(&self) -> &SystemFile {
        &self.source
    }

    /// Rate constants `(k1f, k1r, k2f, k2r)` when this is the built-in network.
    pub fn chem_rates(&self) -> Option<[f64; 4]> {
        self.chem_rates
    }

    pub fn field(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.field_b.iter().map(|e| e.eval(x, EMPTY)).collect()
    }

    pub fn integral(&self, x: &[f64]) -> Result<f64, EvalError> {
        self.integral_b.eval(x, EMPTY)
    }

    pub fn grad_integral(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.grad_b.iter().map(|e| e.eval(x, EMPTY)).collect()
    }

    pub fn jacobian(&self, x: &[f64]) -> Result<Mat, EvalError> {
        let mut m = Mat::zeros(self.dim, self.dim);
        for (i, row) in self.jac_b.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                m.set(i, j, e.eval(x, EMPTY)?);
            }
        }
        Ok(m)
    }

    /// Checks `⟨∇H, F⟩ = 0` on samples of `Y`.
    pub fn check_integral(&self, n_samples: usize, seed: u64) -> SampleReport {
        self.sampled(n_samples, seed, |x| {
            let f = self.field(x)?;
            let g = self.grad_integral(x)?;
            Ok(dot(&g, &f).abs() / (1.0 + norm(&f) * norm(&g)))
        }, |v| v <= 1e-10)
    }

    /// Checks `∇H(y) ∈ int K*` on samples of `Y`. The violation is the
    /// negated smallest inner product of the unit gradient with the rays of K.
    pub fn check_grad_dual(&self, n_samples: usize, seed: u64) -> SampleReport {
        let mut all_interior = true;
        let mut rep = self.sampled(n_samples, seed, |x| {
            let g = self.grad_integral(x)?;
            if self.cone_k.dual_classify(&g) != Membership::Interior {
                all_interior = false;
            }
            let gn = norm(&g).max(f64::MIN_POSITIVE);
            Ok(-self.cone_k.dual_margin(&g) / gn)
        }, |_| true);
        rep.pass &= all_interior;
        rep
    }

    fn sampled(
        &self,
        n_samples: usize,
        seed: u64,
        mut violation: impl FnMut(&[f64]) -> Result<f64, EvalError>,
        ok: impl Fn(f64) -> bool,
    ) -> SampleReport {
        let pts = sample_y(&self.cone_y, n_samples, seed);
        let mut worst = (f64::NEG_INFINITY, vec![0.0; self.dim]);
        let mut failures = 0;
        for p in &pts {
            match violation(&p.x) {
                Ok(v) if v > worst.0 => worst = (v, p.x.clone()),
                Ok(_) => {}
                Err(_) => {
                    failures += 1;
                    if failures == 1 && worst.0 == f64::NEG_INFINITY {
                        worst.1 = p.x.clone();
                    }
                }
            }
        }
        let max_violation = if worst.0.is_finite() { worst.0 } else { 0.0 };
        SampleReport {
            n_samples: pts.len(),
            max_violation,
            worst_point: worst.1,
            eval_failures: failures,
            pass: failures == 0 && ok(max_violation),
        }
    }
}

pub const CHEM_PARAMS: [&str; 4] = ["k1f", "k1r", "k2f", "k2r"];

fn chem_file() -> SystemFile {
    let f1 = "k1f*x1*x2 - k1r*x3";
    let f2 = "k2f*x1 - k2r*x2";
    SystemFile {
        dim: 3,
        params: CHEM_PARAMS.iter().map(|k| (k.to_string(), 1.0)).collect(),
        field: vec![
            format!("-({f1}) - ({f2})"),
            format!("-({f1}) + ({f2})"),
            f1.to_string(),
        ],
        integral: "x1 + x2 + 2*x3".into(),
        cone_k: vec![
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 1.0],
            vec![0.0, 1.0, 1.0],
            vec![1.0, 1.0, 1.0],
        ],
        cone_y: None,
    }
}

fn identity_rows(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePoint {
    pub x: Vec<f64>,
    pub on_boundary: bool,
}

/// Seeded points of `Y`: nonnegative combinations of the rays of `Y` with
/// log-uniform coefficients in `[1e-3, 1e3]`. Every fourth point zeroes a
/// random nonempty proper subset of the coefficients so that boundary faces
/// are visited too.
pub fn sample_y(y: &PolyCone, n: usize, seed: u64) -> Vec<SamplePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rays = y.rays();
    let m = rays.len();
    (0..n)
        .map(|k| {
            let mut coef: Vec<f64> = (0..m).map(|_| 10f64.powf(rng.gen_range(-3.0..=3.0))).collect();
            let on_boundary = k % 4 == 3 && m > 1;
            if on_boundary {
                let keep = rng.gen_range(0..m);
                let mut zeroed = false;
                for (i, c) in coef.iter_mut().enumerate() {
                    if i != keep && rng.gen_bool(0.5) {
                        *c = 0.0;
                        zeroed = true;
                    }
                }
                if !zeroed {
                    coef[(keep + 1) % m] = 0.0;
                }
            }
            let mut x = vec![0.0; y.dim()];
            for (c, r) in coef.iter().zip(rays) {
                for (xi, ri) in x.iter_mut().zip(r) {
                    *xi += c * ri;
                }
            }
            SamplePoint { x, on_boundary }
        })
        .collect()
}
