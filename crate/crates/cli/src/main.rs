use clap::Parser;

fn main() {
    let cli = vpflow_cli::Cli::parse();
    std::process::exit(vpflow_cli::run(&cli));
}
