//! Library-level pipeline on a system loaded from disk.

use monoconv::certify::certify;
use monoconv::equilibria::{continue_curve, uniform_grid};
use monoconv::integrate::{integrate, IntegrateOptions};
use monoconv::lyapunov::LyapunovEvaluator;
use monoconv::numerics::{norm, sub, Tol};
use monoconv::system::{SystemSpec, CHEM_TOML};

#[test]
fn toml_and_json_agree_with_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let toml_path = dir.path().join("chem.toml");
    std::fs::write(&toml_path, CHEM_TOML).unwrap();
    let from_toml = SystemSpec::load(&toml_path, Tol::default()).unwrap();
    let json = serde_json::to_string(from_toml.source()).unwrap();
    let json_path = dir.path().join("chem.json");
    std::fs::write(&json_path, json).unwrap();
    let from_json = SystemSpec::load(&json_path, Tol::default()).unwrap();
    let builtin = SystemSpec::builtin_chem(1.0, 1.0, 1.0, 1.0).unwrap();
    for x in [[0.3, 1.2, 0.7], [2.0, 0.0, 1.0]] {
        assert_eq!(from_toml.field(&x).unwrap(), builtin.field(&x).unwrap());
        assert_eq!(from_json.field(&x).unwrap(), builtin.field(&x).unwrap());
    }
    assert_eq!(from_json.chem_rates(), Some([1.0; 4]));
}

#[test]
fn nonunit_rates_end_to_end() {
    let s = SystemSpec::builtin_chem(2.0, 1.0, 3.0, 1.0).unwrap();
    assert!(certify(&s, 500, 3).pass);
    let curve = continue_curve(&s, &uniform_grid(0.0, 6.0, 60), 4, 3);
    assert!(curve.failures.is_empty() && curve.check(&s).pass);
    let ev = LyapunovEvaluator::new(s.clone(), curve.clone()).unwrap();
    let tr = integrate(&s, &[0.5, 0.0, 1.5], 60.0, &IntegrateOptions::uniform(60.0, 120)).unwrap();
    let r = ev.check_increase_along_orbit(&tr).unwrap();
    assert!(r.pass, "{:?}", r.violations);
    let target = curve.interpolate(tr.h0).unwrap();
    assert!(norm(&sub(tr.last(), &target)) < 1e-2);
    assert!(r.final_gap.abs() < 1e-6);
}
