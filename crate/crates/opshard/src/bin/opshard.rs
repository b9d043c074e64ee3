use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("OPSHARD_LOG")).init();
    let cli = opshard::cli::Cli::parse();
    std::process::exit(opshard::cli::execute(&cli));
}
