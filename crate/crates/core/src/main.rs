use clap::Parser;

fn main() {
    env_logger::init();
    let cli = sctune::cli::Cli::parse();
    let mut out = std::io::stdout();
    if let Err(e) = sctune::cli::run(cli, &mut out) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
