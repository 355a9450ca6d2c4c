#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;
mod error;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use commands::Ctx;
use error::CliResult;

fn run(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t as usize)
            .build_global()
            .map_err(|e| error::usage(e.to_string()))?;
    }
    let ctx = Ctx {
        json: cli.json,
        out: cli.out,
        seed: cli.seed,
    };
    match &cli.command {
        Command::Gen(a) => commands::gen(&ctx, a),
        Command::Spectrum(a) => commands::spectrum(&ctx, a),
        Command::Localize(a) => commands::localize(&ctx, a),
        Command::Sensitivity(a) => commands::sensitivity(&ctx, a),
        Command::Pspec(a) => commands::pspec(&ctx, a),
        Command::Margin(a) => commands::margin(&ctx, a),
        Command::Destabilize(a) => commands::destabilize(&ctx, a),
        Command::Simulate(a) => commands::simulate(&ctx, a),
        Command::Experiment(a) => commands::experiment(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
