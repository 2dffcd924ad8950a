//! Sampled certification of the structural hypotheses for the built-in network.

use monoconv::certify::certify;
use monoconv::system::SystemSpec;

fn main() {
    let s = SystemSpec::builtin_chem(1.0, 1.0, 1.0, 1.0).unwrap();
    let r = certify(&s, 1000, 0);
    println!("gradient in int K*: {}", r.grad_dual.pass);
    println!("<grad H, F> = 0:    {}", r.integral.pass);
    println!("cooperative:        {}", r.cooperative_pass);
    println!("irreducible:        {} (alpha {:.3e}, margin {:.3e})", r.irreducible_pass, r.alpha_used, r.margin);
    println!("{}", r.note);
}
