use clap::Parser;

fn main() {
    env_logger::init();
    let cli = hjbounds::cli::Cli::parse();
    std::process::exit(hjbounds::cli::run(cli));
}
