fn main() {
    std::process::exit(satqr_core::cli::main_with_args(std::env::args_os()));
}
