fn main() {
    std::process::exit(steer_core::cli::main_with_args(std::env::args_os()));
}
