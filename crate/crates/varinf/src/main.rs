use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use varinf::commands::{self, thread_pool};
use varinf::config::parse_config;

#[derive(Parser)]
#[command(
    version,
    about = "Continuation solver and limit verification for the infinite-exponent Neumann problem"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `[output] dir` of the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed of the randomized minimality audit.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the continuation, verify the limit and write fields and a report.
    Solve(Common),
    /// Verify a stored field without solving.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Field CSV file (x,y,region,u) on the configured grid.
        #[arg(long)]
        field: PathBuf,
    },
    /// Solve and verify on successively refined grids.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Number of refinement levels (at least 2).
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// Print the report of a previous solve.
    Report(Common),
}

fn load(common: &Common) -> Result<(varinf::RunConfig, PathBuf)> {
    let mut config = parse_config(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let out = common.out.clone().unwrap_or_else(|| config.out_dir.clone());
    Ok((config, out))
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Solve(common) => {
            let (config, out) = load(&common)?;
            let report = commands::cmd_solve(&config, &out)?;
            print!("{}", report.render());
            Ok(commands::exit_code(&report))
        }
        Command::Verify { common, field } => {
            let (config, out) = load(&common)?;
            let report = commands::cmd_verify(&config, &field, Some(&out))?;
            print!("{}", report.render());
            Ok(commands::exit_code(&report))
        }
        Command::Sweep { common, levels } => {
            let (config, out) = load(&common)?;
            let table = commands::cmd_sweep(&config, levels, Some(&out))?;
            print!("{}", table.render());
            Ok(if table.rows.iter().all(|r| r.certified) {
                0
            } else {
                2
            })
        }
        Command::Report(common) => {
            let (_, out) = load(&common)?;
            print!("{}", commands::cmd_report(&out)?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = thread_pool().and_then(|pool| pool.install(|| run(cli)));
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
