//! Load a user-defined system from TOML and run the sampled checks on it.
//! Two compartments exchanging mass: x1' = k (x2 − x1), x2' = k (x1 − x2).

use monoconv::certify::certify;
use monoconv::equilibria::solve_on_levelset;
use monoconv::numerics::Tol;
use monoconv::system::SystemSpec;

const SRC: &str = r#"
dim = 2
field = ["k*(x2 - x1)", "k*(x1 - x2)"]
integral = "x1 + x2"
cone_K = [[1, 0], [0, 1]]

[params]
k = 0.7
"#;

fn main() {
    let s = SystemSpec::from_toml_str(SRC, Tol::default()).unwrap();
    let r = certify(&s, 500, 0);
    println!("certified: {} ({})", r.pass, r.note);
    let e = solve_on_levelset(&s, 3.0, &[3.0, 0.0]).unwrap();
    println!("equilibrium on H = 3: {e:?}");
}
