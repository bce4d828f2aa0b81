//! Binary entry point: logging, argument parsing, exit code.

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    std::process::exit(ddee_cli::run_cli(std::env::args_os()));
}
