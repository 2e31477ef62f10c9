use clap::Parser;

fn main() {
    let cli = blocknas::cli::Cli::parse();
    if let Err(e) = blocknas::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
