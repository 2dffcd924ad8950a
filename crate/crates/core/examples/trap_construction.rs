//! Sandwich the level set through (1,1,1) between two slices and sample it.

use monoconv::geometry::{build_trap, levelset_slice_sample, Mode};
use monoconv::system::SystemSpec;

fn main() {
    let s = SystemSpec::builtin_chem(1.0, 1.0, 1.0, 1.0).unwrap();
    for mode in [Mode::Plus, Mode::Minus] {
        let t = build_trap(&s, &[1.0, 1.0, 1.0], mode).unwrap();
        println!(
            "{mode:?}: <g,c> = {:.4}, k1 = {:.4}, k2 = {:.4}, h = {:.4}, theta = {:.4}, eps = {:.4}",
            t.g_dot_c, t.k1, t.k2, t.h, t.theta, t.epsilon
        );
        println!("  s0 = {:?}, t1 = {:.4}, t2 = {:.4}", t.s0, t.t1, t.t2);
        let sl = levelset_slice_sample(&s, &t, 64).unwrap();
        println!("  {}", sl.note);
    }
}
