//! `stackre`: solve, sweep, simulate and tabulate reinsurance equilibria.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stackre::{parse_market_spec, run_command, Command, FigureId, RunError, SweepParam};

#[derive(Debug, Parser)]
#[command(name = "stackre", version, about = "Stackelberg reinsurance equilibria")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Solve one market; writes equilibrium.json and equilibrium.csv.
    Equilibrium {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Solve over a grid of one parameter; writes sweep_<param>.csv.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        /// eps, pi2, limit or m.
        #[arg(long, value_parser = parse_param)]
        param: SweepParam,
        #[arg(long, allow_negative_numbers = true)]
        from: f64,
        #[arg(long, allow_negative_numbers = true)]
        to: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Check the equilibrium by simulation; writes simulation.json and simulation.csv.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Pair each replication with a mirrored one.
        #[arg(long)]
        antithetic: bool,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Data behind a figure; writes figure_<id>.csv.
    Figure {
        #[arg(long, value_parser = parse_figure)]
        id: FigureId,
        /// Market to use instead of the built-in one.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn parse_param(s: &str) -> Result<SweepParam, String> {
    s.parse().map_err(|e: RunError| e.to_string())
}

fn parse_figure(s: &str) -> Result<FigureId, String> {
    s.parse().map_err(|e: RunError| e.to_string())
}

fn run(cli: Cli) -> Result<(), RunError> {
    let (command, spec, out) = match cli.command {
        Cmd::Equilibrium { spec, out } => (Command::Equilibrium, Some(spec), out),
        Cmd::Sweep { spec, param, from, to, steps, out } => (Command::Sweep { param, from, to, steps }, Some(spec), out),
        Cmd::Simulate { spec, reps, seed, antithetic, out } => (
            Command::Simulate {
                replications: reps,
                seed,
                antithetic,
            },
            Some(spec),
            out,
        ),
        Cmd::Figure { id, spec, out } => (Command::Figure(id), spec, out),
    };
    let market = spec.map(|p| parse_market_spec(&p)).transpose()?;
    let table = run_command(&command, market.as_ref(), &out)?;
    log::info!("{}: {} rows written to {}", table.id, table.rows.len(), out.display());
    print!("{}", table.to_csv());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
