use clap::Parser;

use cascade_core::cli::{dispatch, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}
