use tracing_subscriber::EnvFilter;

fn main() {
    tracing_subscriber::fmt().with_env_filter(EnvFilter::from_default_env()).with_writer(std::io::stderr).init();
    std::process::exit(diagnostica_gateway::cli::run(std::env::args_os()));
}
