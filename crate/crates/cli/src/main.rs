fn main() {
    std::process::exit(editembed_cli::run_cli(std::env::args_os()));
}
