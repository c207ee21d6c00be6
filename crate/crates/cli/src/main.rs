use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use reach_adp::error::Error;
use reach_adp_cli::commands::{cmd_benchmark, cmd_evaluate, cmd_inspect, cmd_synthesize, exit_code};
use reach_adp_cli::suites::{Scale, Suite};

#[derive(Parser)]
#[command(name = "reach-adp", version, about = "Value function synthesis for stochastic reach-avoid problems")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a value stack from a JSON config.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the synthesis seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Roll out the ADP policy and the configured baseline.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        stack: PathBuf,
        /// Overrides the evaluation seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Run a shipped suite and write its tables.
    Benchmark {
        /// example1 or example2.
        #[arg(long)]
        suite: String,
        /// smoke, desk or full.
        #[arg(long, default_value = "desk")]
        scale: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Print a value stack's metadata.
    Inspect {
        #[arg(long)]
        stack: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(w) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build_global()
            .map_err(|e| Error::Input(format!("cannot start {w} workers: {e}")))?;
    }
    let written = match cli.command {
        Command::Synthesize { config, seed, out_dir } => cmd_synthesize(&config, seed, &out_dir)?,
        Command::Evaluate { config, stack, seed, out_dir } => cmd_evaluate(&config, &stack, seed, &out_dir)?,
        Command::Benchmark { suite, scale, seed, out_dir } => {
            let suite: Suite = suite.parse()?;
            let scale: Scale = scale.parse()?;
            cmd_benchmark(suite, scale, seed, &out_dir)?
        }
        Command::Inspect { stack } => {
            print!("{}", cmd_inspect(&stack)?);
            vec![]
        }
    };
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
