mod cli;

use clap::Parser;

fn main() {
    let parsed = cli::Cli::parse();
    if let Err(e) = cli::run(parsed) {
        cli::log_error(&e);
        std::process::exit(e.code);
    }
}
