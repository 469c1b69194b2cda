use clap::Parser;

fn main() {
    let cli = balancekit::cli::Cli::parse();
    std::process::exit(balancekit::cli::execute(cli));
}
