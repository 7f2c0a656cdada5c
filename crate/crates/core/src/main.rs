fn main() {
    std::process::exit(transfer_risk::cli::run_command(std::env::args_os()));
}
