fn main() {
    let code = distrag::cli::run_cli(std::env::args_os());
    std::process::exit(code);
}
