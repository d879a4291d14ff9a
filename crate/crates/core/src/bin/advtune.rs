fn main() {
    std::process::exit(advtune::cli::main_with_args(std::env::args_os()));
}
