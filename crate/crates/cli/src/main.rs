use clap::Parser;

fn main() {
    let cli = netpend_cli::Cli::parse();
    if let Err(err) = netpend_cli::run(&cli) {
        eprintln!("netpend: {err:#}");
        std::process::exit(netpend_cli::exit_code(&err));
    }
}
