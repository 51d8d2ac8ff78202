//! `wsobolev`: batch front end for the weighted Sobolev toolkit.
//!
//! Exit codes: 0 on success, 2 when a verification fails, 1 on any operational error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod expr;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{load_config, Overrides, RunConfig};
use crate::error::CliError;
use crate::report::{Emitter, Format};

#[derive(Parser)]
#[command(name = "wsobolev", version, about = "Weighted Sobolev spaces: constants, checks and flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, env = "WSOBOLEV_OUT", default_value = "wsobolev-out")]
    out: PathBuf,

    /// Nodes per axis, overriding the config.
    #[arg(long, global = true)]
    grid_n: Option<usize>,

    /// Random seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Format of tabular reports.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Doubling and Muckenhoupt ratios, regularity and admissibility of the weight.
    WeightReport,
    /// The constant chain and the certified Poincaré constant.
    Constants,
    /// Checks the inequalities on the test-function corpus.
    VerifyInequalities,
    /// Mollifier approximation in the weighted Sobolev norm, Hedberg and maximal checks.
    Approximate,
    /// Implicit Euler flow of the weighted p-Laplacian.
    SolveEvolution,
    /// Mean-zero solution of the stationary problem.
    SolveStationary,
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::field("--config", "a configuration file is required"))?;
    let cfg: RunConfig = load_config(
        path,
        Overrides {
            grid_n: cli.grid_n,
            seed: cli.seed,
        },
    )?;
    let mut out = Emitter::new(&cli.out, cli.format)?;
    out.json("config", &cfg)?;
    let ok = match cli.command {
        Command::WeightReport => commands::weight_report(&cfg, &mut out)?,
        Command::Constants => commands::constants(&cfg, &mut out)?,
        Command::VerifyInequalities => commands::verify_inequalities(&cfg, &mut out)?,
        Command::Approximate => commands::approximate(&cfg, &mut out)?,
        Command::SolveEvolution => commands::solve_evolution_cmd(&cfg, &mut out)?,
        Command::SolveStationary => commands::solve_stationary_cmd(&cfg, &mut out)?,
    };
    for p in out.written() {
        println!("wrote {}", p.display());
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed; see the reports in {}", cli.out.display());
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
