//! Parse a field component, differentiate it symbolically and evaluate.

use std::collections::{BTreeMap, BTreeSet};

use monoconv::expr::Expr;

fn main() {
    let names: BTreeSet<String> = ["k1f", "k1r"].iter().map(|s| s.to_string()).collect();
    let f = Expr::parse("k1f*x1*x2 - k1r*x3", 3, &names).expect("parses");
    let params: BTreeMap<String, f64> = [("k1f".to_string(), 2.0), ("k1r".to_string(), 0.5)].into();
    let x = [1.5, 0.5, 2.0];
    println!("f = {f}");
    println!("f(x) = {}", f.eval(&x, &params).unwrap());
    for i in 0..3 {
        let d = f.diff(i);
        println!("df/dx{} = {d} = {}", i + 1, d.eval(&x, &params).unwrap());
    }
}
