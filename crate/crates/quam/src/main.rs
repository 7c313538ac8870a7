fn main() {
    std::process::exit(quam::cli::main_with_args(std::env::args_os()));
}
