//! Extremal rays, membership and order relations for the reaction-network cone.

use monoconv::cone::PolyCone;
use monoconv::numerics::Tol;

fn main() {
    let k = PolyCone::from_rows(&[[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 1.0]], Tol::default())
        .expect("pointed and solid");
    for r in k.rays() {
        println!("ray {r:?}");
    }
    println!("(1,1,2) in int K*: {:?}", k.dual_classify(&[1.0, 1.0, 2.0]));
    println!("(0,0,2) in K: {:?}", k.classify(&[0.0, 0.0, 2.0]));
    println!("(2,2,0) in K: {:?}", k.classify(&[2.0, 2.0, 0.0]));
    println!("order (0,0,0) vs (1,1,1): {:?}", k.order(&[0.0; 3], &[1.0, 1.0, 1.0]));
    println!("order (1,0,0) vs (0,1,0): {:?}", k.order(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]));
}
