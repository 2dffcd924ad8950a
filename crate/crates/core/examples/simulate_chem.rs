//! Integrate the network from (0,0,2) and print a few samples of the orbit.

use monoconv::integrate::{integrate, IntegrateOptions};
use monoconv::system::SystemSpec;

fn main() {
    let s = SystemSpec::builtin_chem(1.0, 1.0, 1.0, 1.0).unwrap();
    let tr = integrate(&s, &[0.0, 0.0, 2.0], 50.0, &IntegrateOptions::uniform(50.0, 10)).unwrap();
    for (t, x) in tr.times.iter().zip(&tr.states) {
        println!("t = {t:5.1}  x = [{:.9}, {:.9}, {:.9}]", x[0], x[1], x[2]);
    }
    println!("H drift {:.3e} over {} steps", tr.drift, tr.steps);
}
