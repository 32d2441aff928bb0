use std::io;

use tracing_subscriber::EnvFilter;

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(io::stderr)
        .init();
    let stdin = io::stdin();
    let mut input = stdin.lock();
    let mut out = io::stdout();
    let mut err = io::stderr();
    let mut streams = shroud_gateway::cli::Io { input: &mut input, out: &mut out, err: &mut err };
    std::process::exit(shroud_gateway::cli::run(std::env::args_os(), &mut streams));
}
