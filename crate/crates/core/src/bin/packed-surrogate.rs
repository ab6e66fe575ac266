fn main() {
    std::process::exit(packed_surrogate::cli::run_cli(std::env::args_os()));
}
