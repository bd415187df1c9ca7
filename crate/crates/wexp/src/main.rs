use clap::Parser;

fn main() {
    let cli = wexp::harness::Cli::parse();
    std::process::exit(wexp::harness::run(cli));
}
