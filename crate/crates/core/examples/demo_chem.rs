//! Run the full command-line pipeline on the built-in network, writing
//! reports to a temporary directory.

fn main() {
    let dir = std::env::temp_dir().join("monoconv-demo");
    let code = monoconv::cli::main_with(["monoconv", "--out", dir.to_str().unwrap(), "demo", "chem"]);
    println!("reports in {}, exit code {code}", dir.display());
}
