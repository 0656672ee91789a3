use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod rundir;

#[derive(Debug, Parser)]
#[command(name = "dropsim", version, about = "Droplet dynamics under conserved stochastic Allen-Cahn")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file (TOML). `DROPSIM_SECTION__KEY` variables override it.
    #[arg(long, global = true, default_value = "dropsim.toml")]
    config: PathBuf,

    /// Base seed, replaces `seeds.base`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Run directory, replaces `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for parallel experiments.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, Debug, Subcommand)]
enum Command {
    /// Integrate the full equation and record the projected path.
    Simulate,
    /// Full path against the reduced and asymptotic equations.
    Compare,
    /// Norm scalings over the configured eps ladder.
    Scalings,
    /// Monte Carlo exit times over the amplitude ladder.
    ExitTimes,
    /// Export the droplet state at `initial.xi0`.
    DropletDump,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Compare => "compare",
            Command::Scalings => "scalings",
            Command::ExitTimes => "exit-times",
            Command::DropletDump => "droplet-dump",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let report = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}
