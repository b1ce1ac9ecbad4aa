use clap::Parser;

fn main() {
    std::process::exit(pars::cli::run(pars::cli::Cli::parse()));
}
