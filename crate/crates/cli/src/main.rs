//! `rkm`: dataset generation, clustering runs, seed sweeps and feasibility
//! probes for radius-constrained k-means.

mod args;
mod commands;
mod input;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(g) => commands::gen(g),
        Command::Run(r) => commands::run(r),
        Command::Eval(e) => commands::eval(e),
        Command::Feastest(f) => commands::feastest(f),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
