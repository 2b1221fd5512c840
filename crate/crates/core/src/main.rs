use clap::Parser;

fn main() {
    std::process::exit(chebbicg::cli::run(chebbicg::cli::Cli::parse()));
}
