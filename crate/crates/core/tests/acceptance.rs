//! Acceptance criteria on the built-in reaction network. Prints one PASS/FAIL
//! line per criterion and exits nonzero if any fails.

use std::time::Instant;

use monoconv::certify::{closed_form_alpha, maps_rays_inside};
use monoconv::cone::{Membership, OrderRel};
use monoconv::equilibria::{self, assert_no_boundary_equilibria, continue_curve, solve_on_levelset};
use monoconv::geometry::{build_trap, levelset_slice_sample, Mode};
use monoconv::integrate::{integrate, order_preservation_trial, IntegrateOptions, Trajectory};
use monoconv::lyapunov::LyapunovEvaluator;
use monoconv::numerics::{norm, sub};
use monoconv::system::{sample_y, SystemSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn chem() -> SystemSpec {
    SystemSpec::builtin_chem(1.0, 1.0, 1.0, 1.0).unwrap()
}

/// `(a, a, a²)` with `2a + 2a² = h`.
fn closed(h: f64) -> Vec<f64> {
    let a = (-1.0 + (1.0 + 2.0 * h).sqrt()) / 2.0;
    vec![a, a, a * a]
}

/// Uniform random points of `{x ≥ 0 : x1 + x2 + 2 x3 = h}`.
fn on_level(h: f64, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let w: Vec<f64> = (0..3).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
            let t: f64 = w.iter().sum();
            vec![h * w[0] / t, h * w[1] / t, h / 2.0 * w[2] / t]
        })
        .collect()
}

/// The trajectories used by criteria 3 and 5: `(0,0,2)` plus 20 random
/// starts spread over levels in `[0.5, 9.5]`.
fn demo_trajectories(s: &SystemSpec) -> Vec<Trajectory> {
    let mut starts = vec![vec![0.0, 0.0, 2.0]];
    for (k, p) in sample_y(s.cone_y(), 20, 0).into_iter().enumerate() {
        let level = 0.5 + 9.0 * (k as f64 + 0.5) / 20.0;
        let h = s.integral(&p.x).unwrap();
        if h > 0.0 {
            starts.push(p.x.iter().map(|v| v * level / h).collect());
        }
    }
    starts
        .iter()
        .map(|x0| integrate(s, x0, 100.0, &IntegrateOptions::uniform(100.0, 400)).unwrap())
        .collect()
}

fn c1_global_convergence() -> Outcome {
    let s = chem();
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for x0 in on_level(4.0, 20, 1) {
        let tr = integrate(&s, &x0, 100.0, &IntegrateOptions::default()).map_err(|e| e.to_string())?;
        worst = worst.max(norm(&sub(tr.last(), &[1.0, 1.0, 1.0])));
    }
    let secs = start.elapsed().as_secs_f64();
    let msg = format!("20 starts on H=4, worst distance to (1,1,1) {worst:.3e}, {secs:.2}s");
    if worst <= 1e-6 && secs < 10.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c2_uniqueness() -> Outcome {
    let s = chem();
    let mut detail = vec![];
    let mut ok = true;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for h in [0.5, 1.0, 2.0, 4.0, 8.0] {
        let want = closed(h);
        let mut spread: f64 = 0.0;
        let mut err: f64 = 0.0;
        let mut first: Option<Vec<f64>> = None;
        for _ in 0..16 {
            // random start in the box [0, h]³ below the level
            let x0 = loop {
                let x: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..h)).collect();
                if s.integral(&x).unwrap() <= h {
                    break x;
                }
            };
            let x = solve_on_levelset(&s, h, &x0).map_err(|e| format!("h = {h}: {e}"))?;
            let f = first.get_or_insert_with(|| x.clone());
            spread = spread.max(norm(&sub(&x, f)));
            err = err.max(norm(&sub(&x, &want)));
        }
        ok &= spread <= 1e-7 && err <= 1e-8;
        detail.push(format!("h={h}: spread {spread:.1e}, closed-form error {err:.1e}"));
    }
    let curve = continue_curve(&s, &[0.0, 0.5, 1.0, 2.0, 4.0, 8.0], equilibria::DEFAULT_MULTISTART, 2);
    ok &= curve.failures.is_empty();
    detail.push(format!("continuation multistart failures {}", curve.failures.len()));
    if ok {
        Ok(detail.join("; "))
    } else {
        Err(detail.join("; "))
    }
}

fn c3_conservation(trs: &[Trajectory]) -> Outcome {
    let worst = trs.iter().map(|t| t.drift).fold(0.0, f64::max);
    let msg = format!("{} trajectories on [0,100], worst drift {worst:.3e}", trs.len());
    if worst <= 1e-9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c4_order_preservation() -> Outcome {
    let r = order_preservation_trial(&chem(), 100, 1.0, 4);
    let msg = format!("{} pairs at t=1, {} violations, worst normalized margin {:.3e}", r.n_pairs, r.violations, r.worst_margin);
    if r.pass && r.violations == 0 && r.worst_margin > 1e-8 && r.failures.is_empty() {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c5_lyapunov(trs: &[Trajectory]) -> Outcome {
    let s = chem();
    let ev = LyapunovEvaluator::for_system(&s, 10.0, 0.1).map_err(|e| e.to_string())?;
    let mut bad = 0;
    let mut gap: f64 = 0.0;
    for tr in trs {
        let r = ev.check_increase_along_orbit(tr).map_err(|e| e.to_string())?;
        if !r.pass {
            bad += 1;
        }
        gap = gap.max(r.final_gap.abs());
    }
    let l0 = ev.eval_l(&[0.0, 0.0, 2.0]).map_err(|e| e.to_string())?;
    let l0_err = (l0 - (6.0 - 2.0 * 3f64.sqrt())).abs();
    let r = ev.check_increase_along_orbit(&trs[0]).map_err(|e| e.to_string())?;
    let terminal = r.rows.last().unwrap().l;
    let msg = format!(
        "{bad} orbits with violations; L(0,0,2) error {l0_err:.1e}; terminal L from (0,0,2) = {terminal:.9}; worst final gap {gap:.1e}"
    );
    if bad == 0 && l0_err <= 1e-6 && (terminal - 4.0).abs() <= 1e-6 && gap <= 1e-6 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c6_ordered_curve() -> Outcome {
    let s = chem();
    let curve = continue_curve(&s, &equilibria::uniform_grid(0.0, 10.0, 100), 0, 0);
    let consecutive = curve.samples.windows(2).filter(|w| s.cone_k().order(&w[0].x, &w[1].x) != OrderRel::LL).count();
    let all = assert_no_boundary_equilibria(&curve, &s);
    let msg = format!(
        "{} samples, {} non-LL consecutive pairs, {} non-LL pairs of {}",
        curve.samples.len(),
        consecutive,
        all.violations.len(),
        all.pairs_checked
    );
    if curve.samples.len() == 101 && consecutive == 0 && all.pass {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c7_cone_engine() -> Outcome {
    let s = chem();
    let r = 0.5f64.sqrt();
    let want = [vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![-r, 0.0, r], vec![0.0, -r, r]];
    let rays = s.cone_k().rays();
    let matched = rays.len() == 4 && want.iter().all(|w| rays.iter().any(|v| norm(&sub(v, w)) < 1e-12));
    let dual = s.cone_k().dual_classify(&[1.0, 1.0, 2.0]);
    let msg = format!("rays {rays:?}; dual (1,1,2) {dual:?}");
    if matched && dual == Membership::Interior {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c8_certification() -> Outcome {
    let s = chem();
    let start = Instant::now();
    let pts: Vec<_> = sample_y(s.cone_y(), 4000, 8).into_iter().filter(|p| !p.on_boundary).take(1000).collect();
    let mut min_margin = f64::INFINITY;
    let mut fails = 0;
    for p in &pts {
        let j = s.jacobian(&p.x).map_err(|e| e.to_string())?;
        let alpha = closed_form_alpha([1.0; 4], &p.x);
        let (ok, m, _) = maps_rays_inside(s.cone_k(), &j, alpha);
        if !ok {
            fails += 1;
        }
        min_margin = min_margin.min(m);
    }
    let secs = start.elapsed().as_secs_f64();
    let msg = format!("{} interior points, {fails} failures, min margin {min_margin:.3e}, {secs:.2}s", pts.len());
    if pts.len() == 1000 && fails == 0 && min_margin > 0.0 && secs < 5.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c9_trap() -> Outcome {
    let s = chem();
    let mut detail = vec![];
    let mut ok = true;
    for mode in [Mode::Plus, Mode::Minus] {
        let t = build_trap(&s, &[1.0, 1.0, 1.0], mode).map_err(|e| format!("{mode:?}: {e}"))?;
        let ordered = match mode {
            Mode::Plus => t.g_dot_c < t.k1 && t.k1 < t.k2,
            Mode::Minus => t.k2 < t.k1 && t.k1 < t.g_dot_c,
        };
        let sl = levelset_slice_sample(&s, &t, 64).map_err(|e| format!("{mode:?}: {e}"))?;
        let once = sl.rays.len() == 64 && sl.rays.iter().all(|r| r.crossings == 1);
        ok &= ordered && t.inner_margin > 1e-6 && t.outer_margin > 1e-6 && once;
        detail.push(format!(
            "{mode:?}: k1={:.4} k2={:.4} margins {:.2e}/{:.2e}, single crossings {once}",
            t.k1, t.k2, t.inner_margin, t.outer_margin
        ));
    }
    if ok {
        Ok(detail.join("; "))
    } else {
        Err(detail.join("; "))
    }
}

fn c10_gradients() -> Outcome {
    let s = chem();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..5.0)).collect();
        let j = s.jacobian(&x).map_err(|e| e.to_string())?;
        let g = s.grad_integral(&x).map_err(|e| e.to_string())?;
        for k in 0..3 {
            let step = 1e-6 * (1.0 + x[k].abs());
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += step;
            xm[k] -= step;
            let fp = s.field(&xp).unwrap();
            let fm = s.field(&xm).unwrap();
            let mut cmp = |sym: f64, fd: f64| worst = worst.max((sym - fd).abs() / sym.abs().max(1.0));
            for i in 0..3 {
                cmp(j.get(i, k), (fp[i] - fm[i]) / (2.0 * step));
            }
            cmp(g[k], (s.integral(&xp).unwrap() - s.integral(&xm).unwrap()) / (2.0 * step));
        }
    }
    let msg = format!("100 points, worst relative error {worst:.3e}");
    if worst <= 1e-6 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    let trs = demo_trajectories(&chem());
    let results: Vec<(&str, Outcome)> = vec![
        ("global convergence", c1_global_convergence()),
        ("uniqueness per level set", c2_uniqueness()),
        ("conservation", c3_conservation(&trs)),
        ("strong order preservation", c4_order_preservation()),
        ("Lyapunov increase", c5_lyapunov(&trs)),
        ("ordered equilibrium curve", c6_ordered_curve()),
        ("cone engine", c7_cone_engine()),
        ("certification", c8_certification()),
        ("geometry trap", c9_trap()),
        ("parser gradients", c10_gradients()),
    ];
    let mut failed = 0;
    for (i, (name, r)) in results.iter().enumerate() {
        match r {
            Ok(m) => println!("PASS {} {name}: {m}", i + 1),
            Err(m) => {
                failed += 1;
                println!("FAIL {} {name}: {m}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
