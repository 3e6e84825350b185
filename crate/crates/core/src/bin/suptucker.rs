fn main() {
    std::process::exit(suptucker::cli::main_with_args(std::env::args_os()));
}
