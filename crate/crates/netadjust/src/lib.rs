//! Command-line front end: CSV input and output, run manifests and the
//! parallel simulation driver.

pub mod cli;
pub mod commands;
pub mod experiment;
pub mod io;
pub mod manifest;
pub mod scenario;

use anyhow::Result;

use cli::{Cli, Command};

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Estimate(args) => commands::estimate(args),
        Command::Adjust(args) => commands::adjust(args),
        Command::Simulate(args) => commands::simulate(args),
    }
}
