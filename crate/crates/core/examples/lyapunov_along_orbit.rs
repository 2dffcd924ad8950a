//! Evaluate L = H∘Q along the orbit from (0,0,2).

use monoconv::integrate::{integrate, IntegrateOptions};
use monoconv::lyapunov::LyapunovEvaluator;
use monoconv::system::SystemSpec;

fn main() {
    let s = SystemSpec::builtin_chem(1.0, 1.0, 1.0, 1.0).unwrap();
    let ev = LyapunovEvaluator::for_system(&s, 5.0, 0.1).unwrap();
    let tr = integrate(&s, &[0.0, 0.0, 2.0], 20.0, &IntegrateOptions::uniform(20.0, 10)).unwrap();
    let r = ev.check_increase_along_orbit(&tr).unwrap();
    for row in &r.rows {
        println!("t = {:5.1}  L = {:.9}  |F| = {:.2e}", row.t, row.l, row.norm_f);
    }
    println!("L(0,0,2) = {:.9} (6 - 2 sqrt 3 = {:.9})", r.l_initial, 6.0 - 2.0 * 3f64.sqrt());
    println!("increasing: {}", r.pass);
}
