fn main() {
    std::process::exit(labflow::cli::main_with_args(std::env::args()));
}
