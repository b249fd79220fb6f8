use std::process::ExitCode;

use clap::{CommandFactory, Parser};
use netadjust::cli::{Cli, Command, Mode};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NETADJUST_LOG", "warn")).init();
    let cli = Cli::parse();
    let missing_incidence = match &cli.command {
        Command::Estimate(args) => args.mode == Mode::Adjusted && !args.inputs.has_incidence(),
        Command::Adjust(args) => !args.inputs.has_incidence(),
        Command::Simulate(_) => false,
    };
    if missing_incidence {
        Cli::command()
            .error(
                clap::error::ErrorKind::MissingRequiredArgument,
                "adjusted population survival needs --incidence or --population with --diagnoses",
            )
            .exit();
    }
    match netadjust::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
