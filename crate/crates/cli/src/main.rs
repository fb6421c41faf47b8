use clap::Parser;
use deepsketch_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let mut out = std::io::stdout();
    if let Err(e) = run(cli, &mut out) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
