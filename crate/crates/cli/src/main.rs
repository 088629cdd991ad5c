fn main() {
    std::process::exit(lstm_rf_cli::run(std::env::args_os(), &lstm_rf_cli::ProcessEnv));
}
