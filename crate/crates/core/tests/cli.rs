use std::fs;
use std::process::{Command, Output};

fn monoconv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_monoconv")).args(args).output().expect("binary runs")
}

fn last_row(csv: &str) -> Vec<f64> {
    csv.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect()
}

#[test]
fn simulate_reaches_equilibrium() {
    let out = monoconv(&["simulate", "--system", "chem", "--x0", "0,0,2", "--t-end", "50"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("t,x1,x2,x3,H"));
    let row = last_row(&text);
    assert_eq!(row[0], 50.0);
    for v in &row[1..4] {
        assert!((v - 1.0).abs() < 1e-6);
    }
    assert!((row[4] - 4.0).abs() < 1e-12);
}

#[test]
fn equilibria_origin_only() {
    let out = monoconv(&["equilibria", "--h-max", "0", "--steps", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert_eq!(last_row(&text), vec![0.0; 5]);
}

#[test]
fn equilibria_json_and_h_min() {
    let out = monoconv(&["equilibria", "--h-min", "1", "--h-max", "2", "--steps", "4", "--multistart", "2", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let hs: Vec<f64> = v["samples"].as_array().unwrap().iter().map(|s| s["h"].as_f64().unwrap()).collect();
    assert_eq!(hs, vec![1.0, 1.25, 1.5, 1.75, 2.0]);
}

#[test]
fn lyapunov_series() {
    let out = monoconv(&["lyapunov", "--x0", "0,0,2", "--t-end", "40", "--points", "40"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,L,H,normF"));
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((first[1] - (6.0 - 2.0 * 3f64.sqrt())).abs() < 1e-9);
    assert!((last_row(&text)[1] - 4.0).abs() < 1e-6);
}

#[test]
fn geometry_subcommands() {
    let out = monoconv(&["geometry", "trap", "--c", "1,1,1"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["k1"].as_f64().unwrap() < v["k2"].as_f64().unwrap());
    let out = monoconv(&["geometry", "slice", "--mode", "minus", "--rays", "16"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("theta_index,t_boundary,x1,x2,x3"));
    assert_eq!(text.lines().count(), 17);
    let out = monoconv(&["geometry", "trap", "--c", "1,1,1", "--h", "100"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn certify_is_byte_identical() {
    let a = monoconv(&["certify", "--system", "chem", "--samples", "1000", "--seed", "7"]);
    let b = monoconv(&["certify", "--system", "chem", "--samples", "1000", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["pass"], serde_json::Value::Bool(true));
}

#[test]
fn demo_with_other_rates() {
    let dir = tempfile::tempdir().unwrap();
    let out = monoconv(&["demo", "chem", "--rates", "2,1,3,1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("demo.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], serde_json::Value::Bool(true));
    for f in ["certify.json", "equilibria.csv", "lyapunov.csv", "trajectories.json", "trap_plus.json", "trap_minus.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn corrupted_integral_fails_at_grad_dual() {
    let dir = tempfile::tempdir().unwrap();
    let src = monoconv::system::CHEM_TOML.replace("integral = \"x1 + x2 + 2*x3\"", "integral = \"x3\"");
    let path = dir.path().join("bad.toml");
    fs::write(&path, src).unwrap();
    let out_dir = dir.path().join("out");
    let out = monoconv(&["demo", "chem", "--system", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("check failed: check_grad_dual"));
}

#[test]
fn usage_and_io_codes() {
    assert_eq!(monoconv(&["simulate", "--x0", "-1,0,0"]).status.code(), Some(2));
    assert_eq!(monoconv(&["--system", "missing.toml", "certify"]).status.code(), Some(2));
    assert_eq!(monoconv(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(monoconv(&["--help"]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = monoconv(&["--out", blocker.to_str().unwrap(), "certify", "--samples", "5"]);
    assert_eq!(out.status.code(), Some(3));
}
