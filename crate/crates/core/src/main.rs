fn main() {
    std::process::exit(logistic_fisher::cli::main_with_args(std::env::args_os()));
}
