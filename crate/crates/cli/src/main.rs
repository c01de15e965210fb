use clap::Parser;

use ptycho_dd_cli::{exit, run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
    std::process::exit(exit::SUCCESS);
}
