fn main() {
    std::process::exit(copdep::cli::main_with_args(std::env::args_os()));
}
