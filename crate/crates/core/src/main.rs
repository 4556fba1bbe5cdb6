use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    ymflow::cli::run(ymflow::cli::Cli::parse())
}
