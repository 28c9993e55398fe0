fn main() {
    std::process::exit(permission_patterns::cli::run_from(std::env::args_os()));
}
