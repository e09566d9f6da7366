fn main() {
    std::process::exit(raysense::cli::main_with_args(std::env::args_os()));
}
