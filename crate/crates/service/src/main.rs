use clap::Parser;
use classcode_service::cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("CLASSCODE_LOG", "info"))
        .init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {}", e.msg);
        std::process::exit(e.code);
    }
}
