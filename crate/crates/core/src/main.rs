use clap::Parser;

use cbmm::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {}", e.message());
        std::process::exit(e.exit_code());
    }
}
