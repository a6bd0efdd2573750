use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    adapmen_cli::main_with(adapmen_cli::Cli::parse())
}
