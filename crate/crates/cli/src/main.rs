use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = prosody_cli::args::Cli::parse();
    if let Err(e) = prosody_cli::commands::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.code);
    }
}
