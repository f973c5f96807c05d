use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stocon::cli::{parse_config, run_with_threads, ScenarioKind};

#[derive(Parser)]
#[command(name = "stocon", version, about = "Monte Carlo contraction experiments for random dynamical systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed (overrides `seed`).
        #[arg(long)]
        seed: Option<u64>,
        /// Ensemble size (overrides `ensemble.paths`).
        #[arg(long)]
        paths: Option<usize>,
        /// Worker threads; falls back to STOCON_THREADS, then all cores.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print the available scenarios and their parameters.
    ListScenarios,
}

fn threads_from_env() -> Result<Option<usize>, String> {
    match std::env::var("STOCON_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| format!("STOCON_THREADS must be a positive integer, got `{v}`")),
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::ListScenarios => {
            let mut out = std::io::stdout().lock();
            for k in ScenarioKind::ALL {
                // A closed pipe (e.g. `| head`) is not an error worth reporting.
                if writeln!(out, "{}\n  {}\n", k.name(), k.describe()).is_err() {
                    break;
                }
            }
            ExitCode::SUCCESS
        }
        Command::Run {
            config,
            out,
            seed,
            paths,
            threads,
        } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", config.display());
                    return ExitCode::from(1);
                }
            };
            let mut cfg = match parse_config(&text) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {}: {e}", config.display());
                    return ExitCode::from(1);
                }
            };
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(p) = paths {
                if p == 0 {
                    eprintln!("error: --paths must be at least 1");
                    return ExitCode::from(1);
                }
                cfg.paths = p;
            }
            let threads = match threads.filter(|n| *n > 0).map(Some).map_or_else(threads_from_env, Ok) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            };
            match run_with_threads(&cfg, threads) {
                Ok(report) => {
                    for o in &report.outcomes {
                        let r = o.row();
                        let verdict = r.verdict.map_or("na".to_string(), |v| v.to_string());
                        println!("{:<16} {:<28} {:>14.6} {}", r.analysis.name(), r.quantity, r.estimate, verdict);
                    }
                    println!("outputs in {}", cfg.out_dir.display());
                    ExitCode::from(report.exit_code() as u8)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
