//! Continue the equilibrium curve on [0, 10] and compare with the closed form.

use monoconv::equilibria::{assert_no_boundary_equilibria, continue_curve, uniform_grid};
use monoconv::numerics::{norm, sub};
use monoconv::system::SystemSpec;

fn main() {
    let s = SystemSpec::builtin_chem(1.0, 1.0, 1.0, 1.0).unwrap();
    let curve = continue_curve(&s, &uniform_grid(0.0, 10.0, 20), 16, 0);
    for c in &curve.samples {
        let a = (-1.0 + (1.0 + 2.0 * c.h).sqrt()) / 2.0;
        let err = norm(&sub(&c.x, &[a, a, a * a]));
        println!("h = {:4.1}  e(h) = [{:.6}, {:.6}, {:.6}]  closed-form error {err:.1e}", c.h, c.x[0], c.x[1], c.x[2]);
    }
    println!("frontier {}, failures {}", curve.h_max_reached, curve.failures.len());
    println!("pairwise strictly ordered: {}", assert_no_boundary_equilibria(&curve, &s).pass);
}
