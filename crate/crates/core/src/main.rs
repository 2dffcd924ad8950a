fn main() {
    std::process::exit(monoconv::cli::main_with(std::env::args_os()));
}
