//! Sampled certificates for cooperativity and irreducibility of the Jacobian
//! with respect to `K`, the usual sufficient conditions for strong
//! monotonicity. These are non-falsification checks on finitely many points,
//! never proofs.

use serde::Serialize;

use crate::cone::{Membership, PolyCone};
use crate::numerics::{dot, norm, Mat};
use crate::system::{sample_y, SampleReport, SystemSpec};

pub const ALPHA_CAP: f64 = (1u64 << 20) as f64;

/// Worst `(ray, facet)` pair seen and where.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstPair {
    pub ray: usize,
    pub facet: usize,
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CooperativeReport {
    pub n_samples: usize,
    pub pass: bool,
    pub violations: usize,
    /// Smallest `⟨a, J r⟩ / ‖a‖` over active pairs.
    pub margin: f64,
    pub worst_pair: Option<WorstPair>,
    pub eval_failures: usize,
}

/// Per-sample outcome of the `J + αI` test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointCert {
    /// Smallest α of the form `2^k` that works, if any up to the cap.
    pub alpha: Option<f64>,
    /// Normalised interior margin of `(J + αI) r` at that α.
    pub margin: f64,
    pub worst_pair: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideSummary {
    pub n_samples: usize,
    pub pass: bool,
    pub failures: usize,
    pub min_margin: f64,
    pub worst_point: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedFormAlpha {
    pub sufficient: bool,
    pub n_samples: usize,
    pub failures: usize,
    pub min_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IrreducibleReport {
    /// Pass flag over interior samples of `Y`.
    pub pass: bool,
    pub interior: SideSummary,
    pub boundary: SideSummary,
    /// Largest α needed at any sample.
    pub alpha_used: f64,
    pub worst_pair: Option<WorstPair>,
    /// Closed-form α for the built-in network, checked on interior samples.
    pub closed_form_alpha: Option<ClosedFormAlpha>,
    pub eval_failures: usize,
}

/// Combined report written by `certify`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertReport {
    pub note: String,
    pub seed: u64,
    pub n_samples: usize,
    pub grad_dual: SampleReport,
    pub integral: SampleReport,
    pub cooperative_pass: bool,
    pub irreducible_pass: bool,
    pub alpha_used: f64,
    pub worst_pair: Option<WorstPair>,
    pub margin: f64,
    pub cooperative: CooperativeReport,
    pub irreducible: IrreducibleReport,
    pub pass: bool,
}

/// Smallest normalised facet margin of `v`, with the facet attaining it.
fn normalized_margin(k: &PolyCone, v: &[f64]) -> (f64, usize) {
    let nv = norm(v).max(f64::MIN_POSITIVE);
    k.facets()
        .row_iter()
        .enumerate()
        .map(|(j, a)| (dot(a, v) / (norm(a) * nv), j))
        .fold((f64::INFINITY, 0), |best, cur| if cur.0 < best.0 { cur } else { best })
}

fn shifted_images(j: &Mat, alpha: f64, rays: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rays.iter()
        .map(|r| j.mul_vec(r).iter().zip(r).map(|(jr, ri)| jr + alpha * ri).collect())
        .collect()
}

/// Tests whether `(J + αI)` maps every extremal ray of `K` into `int K`.
/// Returns the worst normalised margin and the `(ray, facet)` attaining it.
pub fn maps_rays_inside(k: &PolyCone, j: &Mat, alpha: f64) -> (bool, f64, (usize, usize)) {
    let mut ok = true;
    let mut worst = (f64::INFINITY, (0, 0));
    for (i, v) in shifted_images(j, alpha, k.rays()).iter().enumerate() {
        if k.classify(v) != Membership::Interior {
            ok = false;
        }
        let (m, f) = normalized_margin(k, v);
        if m < worst.0 {
            worst = (m, (i, f));
        }
    }
    (ok, worst.0, worst.1)
}

/// Doubles α from 1 until every ray lands in the interior or the cap is hit.
pub fn irreducible_at(k: &PolyCone, j: &Mat) -> PointCert {
    let mut alpha = 1.0;
    loop {
        let (ok, margin, pair) = maps_rays_inside(k, j, alpha);
        if ok {
            return PointCert { alpha: Some(alpha), margin, worst_pair: pair };
        }
        if alpha >= ALPHA_CAP {
            return PointCert { alpha: None, margin, worst_pair: pair };
        }
        alpha *= 2.0;
    }
}

/// `α = f11 + f12 − f13 + f21 − f22` for the built-in network with
/// mass-action rates, where `fij = ∂fi/∂xj`.
pub fn closed_form_alpha(rates: [f64; 4], x: &[f64]) -> f64 {
    let [k1f, k1r, k2f, k2r] = rates;
    k1f * x[1] + k1f * x[0] + k1r + k2f + k2r
}

pub fn check_cooperative(s: &SystemSpec, n_samples: usize, seed: u64) -> CooperativeReport {
    let k = s.cone_k();
    let tol = k.tol();
    // active (ray, facet) pairs do not depend on x
    let mut active = Vec::new();
    for (i, r) in k.rays().iter().enumerate() {
        for (fj, a) in k.facets().row_iter().enumerate() {
            if dot(a, r).abs() <= tol.scaled(norm(a)) {
                active.push((i, fj));
            }
        }
    }
    let pts = sample_y(s.cone_y(), n_samples, seed);
    let mut rep = CooperativeReport {
        n_samples: pts.len(),
        pass: true,
        violations: 0,
        margin: f64::INFINITY,
        worst_pair: None,
        eval_failures: 0,
    };
    for p in &pts {
        let Ok(j) = s.jacobian(&p.x) else {
            rep.eval_failures += 1;
            rep.pass = false;
            continue;
        };
        for &(i, fj) in &active {
            let jr = j.mul_vec(&k.rays()[i]);
            let a = k.facets().row(fj);
            let v = dot(a, &jr) / norm(a);
            if v < -tol.scaled(norm(&jr)) {
                rep.violations += 1;
                rep.pass = false;
            }
            if v < rep.margin {
                rep.margin = v;
                rep.worst_pair = Some(WorstPair { ray: i, facet: fj, point: p.x.clone() });
            }
        }
    }
    if !rep.margin.is_finite() {
        rep.margin = 0.0;
    }
    rep
}

pub fn check_irreducible(s: &SystemSpec, n_samples: usize, seed: u64) -> IrreducibleReport {
    let k = s.cone_k();
    let pts = sample_y(s.cone_y(), n_samples, seed);
    let empty = || SideSummary { n_samples: 0, pass: true, failures: 0, min_margin: f64::INFINITY, worst_point: None };
    let (mut interior, mut boundary) = (empty(), empty());
    let mut alpha_used: f64 = 0.0;
    let mut worst: Option<(f64, WorstPair)> = None;
    let mut eval_failures = 0;
    let mut closed = s.chem_rates().map(|_| ClosedFormAlpha {
        sufficient: true,
        n_samples: 0,
        failures: 0,
        min_margin: f64::INFINITY,
    });
    for p in &pts {
        let side = if p.on_boundary { &mut boundary } else { &mut interior };
        side.n_samples += 1;
        let Ok(j) = s.jacobian(&p.x) else {
            eval_failures += 1;
            side.failures += 1;
            side.pass = false;
            continue;
        };
        let cert = irreducible_at(k, &j);
        match cert.alpha {
            Some(a) => alpha_used = alpha_used.max(a),
            None => {
                side.failures += 1;
                side.pass = false;
            }
        }
        if cert.margin < side.min_margin {
            side.min_margin = cert.margin;
            side.worst_point = Some(p.x.clone());
        }
        if !p.on_boundary && worst.as_ref().is_none_or(|w| cert.margin < w.0) {
            let (ray, facet) = cert.worst_pair;
            worst = Some((cert.margin, WorstPair { ray, facet, point: p.x.clone() }));
        }
        if let (Some(c), Some(rates), false) = (closed.as_mut(), s.chem_rates(), p.on_boundary) {
            let (ok, m, _) = maps_rays_inside(k, &j, closed_form_alpha(rates, &p.x));
            c.n_samples += 1;
            c.min_margin = c.min_margin.min(m);
            if !ok {
                c.failures += 1;
                c.sufficient = false;
            }
        }
    }
    for side in [&mut interior, &mut boundary] {
        if !side.min_margin.is_finite() {
            side.min_margin = 0.0;
        }
    }
    if let Some(c) = closed.as_mut() {
        if !c.min_margin.is_finite() {
            c.min_margin = 0.0;
        }
    }
    IrreducibleReport {
        pass: interior.pass && eval_failures == 0,
        interior,
        boundary,
        alpha_used,
        worst_pair: worst.map(|w| w.1),
        closed_form_alpha: closed,
        eval_failures,
    }
}

/// Runs all sampled hypothesis checks with one seed.
pub fn certify(s: &SystemSpec, n_samples: usize, seed: u64) -> CertReport {
    let grad_dual = s.check_grad_dual(n_samples, seed);
    let integral = s.check_integral(n_samples, seed);
    let cooperative = check_cooperative(s, n_samples, seed);
    let irreducible = check_irreducible(s, n_samples, seed);
    let pass = grad_dual.pass && integral.pass && cooperative.pass && irreducible.pass;
    CertReport {
        note: format!("certified on {n_samples} samples; sampled checks do not prove the hypotheses"),
        seed,
        n_samples,
        cooperative_pass: cooperative.pass,
        irreducible_pass: irreducible.pass,
        alpha_used: irreducible.alpha_used,
        worst_pair: irreducible.worst_pair.clone(),
        margin: irreducible.interior.min_margin,
        grad_dual,
        integral,
        cooperative,
        irreducible,
        pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tol;
    use crate::system::SystemFile;
    use std::collections::BTreeMap;

    fn chem() -> SystemSpec {
        SystemSpec::builtin_chem(1.0, 1.0, 1.0, 1.0).unwrap()
    }

    fn planar(field: [&str; 2], integral: &str) -> SystemSpec {
        let f = SystemFile {
            dim: 2,
            params: BTreeMap::new(),
            field: field.iter().map(|s| s.to_string()).collect(),
            integral: integral.into(),
            cone_k: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            cone_y: None,
        };
        SystemSpec::from_file(f, Tol::default()).unwrap()
    }

    #[test]
    fn chem_is_cooperative() {
        let r = check_cooperative(&chem(), 500, 1);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn rotation_is_not_cooperative() {
        let s = planar(["x2", "-x1"], "x1 + x2");
        let r = check_cooperative(&s, 20, 1);
        assert!(!r.pass);
        let e1 = s.cone_k().rays().iter().position(|r| r == &vec![1.0, 0.0]).unwrap();
        // <a2, J e1> = -1 for J = [[0,1],[-1,0]]
        assert_eq!(r.margin, -1.0);
        let w = r.worst_pair.unwrap();
        assert_eq!((w.ray, w.facet), (e1, 1));
    }

    #[test]
    fn scalar_linear_is_cooperative() {
        for c in ["3", "-2"] {
            let s = planar([&format!("{c}*x1"), &format!("{c}*x2")], "x1 + x2");
            assert!(check_cooperative(&s, 20, 2).pass);
        }
    }

    #[test]
    fn chem_is_irreducible_inside() {
        let r = check_irreducible(&chem(), 400, 5);
        assert!(r.pass);
        assert!(r.interior.min_margin > 0.0);
        let c = r.closed_form_alpha.unwrap();
        assert!(c.sufficient && c.min_margin > 0.0 && c.n_samples == r.interior.n_samples);
    }

    #[test]
    fn boundary_samples_are_reported_separately() {
        let r = check_irreducible(&chem(), 400, 5);
        assert_eq!(r.interior.n_samples + r.boundary.n_samples, 400);
        assert_eq!(r.boundary.n_samples, 100);
    }

    #[test]
    fn closed_form_alpha_at_boundary_point() {
        // x = (0,0,1): f11 = f12 = 0, so the image of e1 under J + αI has
        // zero third component and sits on the boundary of K.
        let s = chem();
        let x = [0.0, 0.0, 1.0];
        let j = s.jacobian(&x).unwrap();
        let alpha = closed_form_alpha([1.0; 4], &x);
        assert_eq!(alpha, 3.0);
        let (ok, _, _) = maps_rays_inside(s.cone_k(), &j, alpha);
        assert!(!ok);
        // (J + αI)(-1,0,1) has margins f21 = 1 and f11 - f13 = 1 on its two
        // active facets: strictly positive rates keep this ray inside.
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v: Vec<f64> = j.mul_vec(&[-h, 0.0, h]).iter().zip([-h, 0.0, h]).map(|(a, b)| a + alpha * b).collect();
        let m = s.cone_k().margins(&v);
        assert!(m.iter().all(|&v| v > 0.0), "{m:?}");
    }

    #[test]
    fn zero_field_is_not_irreducible() {
        let s = planar(["0", "0"], "x1 + x2");
        let r = check_irreducible(&s, 8, 0);
        assert!(!r.pass);
        assert_eq!(r.interior.failures, r.interior.n_samples);
    }

    #[test]
    fn alpha_invariance() {
        let s = SystemSpec::builtin_chem(2.0, 0.5, 3.0, 0.25).unwrap();
        for p in sample_y(s.cone_y(), 300, 8).iter().filter(|p| !p.on_boundary) {
            let j = s.jacobian(&p.x).unwrap();
            let cert = irreducible_at(s.cone_k(), &j);
            let a = cert.alpha.expect("interior point certifies");
            assert!(maps_rays_inside(s.cone_k(), &j, 2.0 * a).0);
        }
    }

    #[test]
    fn irreducible_implies_cooperative() {
        let s = chem();
        let c = certify(&s, 200, 3);
        assert!(c.pass);
        assert!(!c.irreducible_pass || c.cooperative_pass);
        assert!(c.note.contains("200 samples"));
    }

    #[test]
    fn certify_is_deterministic() {
        let a = serde_json::to_string(&certify(&chem(), 100, 7)).unwrap();
        let b = serde_json::to_string(&certify(&chem(), 100, 7)).unwrap();
        assert_eq!(a, b);
    }
}
