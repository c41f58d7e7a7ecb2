use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use fedbench::config::parse_config;
use fedbench::results::summarize_dir;
use fedbench::runner::{run_all, RunOptions};
use fedbench::FedError;

#[derive(Parser)]
#[command(name = "fedbench", version, about = "Federated learning aggregation strategy benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment in a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Repeat each run with derived seeds.
        #[arg(long, default_value_t = 1)]
        replicas: usize,
        /// Runs executed concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Override the master seed of every run.
        #[arg(long)]
        seed: Option<u64>,
        /// Dataset directory (falls back to $FEDBENCH_DATA_DIR, then ./data).
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Skip writing checkpoint.json.
        #[arg(long)]
        no_checkpoint: bool,
    },
    /// Parse and check a config file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Rebuild summary.csv from the rounds.csv files in a results directory.
    Summarize { dir: PathBuf },
}

fn exit_for(e: &FedError) -> ExitCode {
    error!("{e}");
    eprintln!("error: {e}");
    ExitCode::from(if e.is_config() { 1 } else { 2 })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Validate { config } => match parse_config(&config) {
            Ok(cfgs) => {
                for c in &cfgs {
                    println!("{}", c.run_id());
                }
                println!("{} experiment(s) OK", cfgs.len());
                ExitCode::SUCCESS
            }
            Err(e) => exit_for(&e),
        },
        Command::Summarize { dir } => match summarize_dir(&dir) {
            Ok(rows) => {
                println!("summarized {} run(s) into {}", rows.len(), dir.join("summary.csv").display());
                ExitCode::SUCCESS
            }
            Err(e) => exit_for(&e),
        },
        Command::Run {
            config,
            out,
            replicas,
            jobs,
            seed,
            data_dir,
            no_checkpoint,
        } => {
            let configs = match parse_config(&config) {
                Ok(c) => c,
                Err(e) => return exit_for(&e),
            };
            let opts = RunOptions {
                replicas,
                jobs,
                seed,
                data_dir,
                write_checkpoints: !no_checkpoint,
                ..RunOptions::new(out)
            };
            match run_all(&configs, &opts) {
                Ok(bundles) => {
                    for b in &bundles {
                        println!(
                            "{:<40} acc {:.4} loss {:.4}{}",
                            b.dir_name(),
                            b.summary.acc,
                            b.summary.loss,
                            b.failure.as_deref().map(|f| format!("  FAILED: {f}")).unwrap_or_default()
                        );
                    }
                    if bundles.iter().any(|b| b.failure.is_some()) {
                        ExitCode::from(2)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => exit_for(&e),
            }
        }
    }
}
