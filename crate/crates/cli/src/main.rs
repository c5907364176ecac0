use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("REM_LOG", "warn")).init();
    let cli = rem_cli::Cli::parse();
    if let Err(e) = rem_cli::run(cli) {
        eprintln!("{}", e.to_json());
        std::process::exit(e.exit_code());
    }
}
