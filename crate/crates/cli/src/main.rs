use std::path::{Path, PathBuf};
use std::process::ExitCode;

use alr::experiment::{run_experiment, validate_config, write_artifacts, ExperimentConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "alr", version, about = "Active-learning regression benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (dataset, strategy, repetition) in a config and write results.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output_dir`).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Repetitions per cell (overrides `repetitions`).
        #[arg(short, long)]
        repetitions: Option<usize>,
        /// Worker threads; results do not depend on this.
        #[arg(short, long)]
        workers: Option<usize>,
        /// Print per-dataset tables.
        #[arg(short, long, action = clap::ArgAction::Count)]
        verbose: u8,
    },
    /// Check a config and list every problem found.
    Validate { config: PathBuf },
}

fn load(path: &Path) -> Result<ExperimentConfig, ExitCode> {
    ExperimentConfig::from_file(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(1)
    })
}

fn base_dir(config: &Path) -> PathBuf {
    config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}"))
        .unwrap_or_else(|| "   -  ".to_string())
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Validate { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let problems = validate_config(&cfg);
            if problems.is_empty() {
                println!("ok");
                ExitCode::SUCCESS
            } else {
                for p in problems {
                    eprintln!("error: {p}");
                }
                ExitCode::from(1)
            }
        }
        Command::Run {
            config,
            output,
            repetitions,
            workers,
            verbose,
        } => {
            let mut cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if let Some(r) = repetitions {
                cfg.repetitions = r;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let out_dir = output.unwrap_or_else(|| base_dir(&config).join(&cfg.output_dir));
            let outcome = match run_experiment(&cfg, &base_dir(&config)) {
                Ok(o) => o,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            };
            if let Err(e) = write_artifacts(&outcome, &cfg, &out_dir) {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
            let auc = &outcome.summary.auc;
            for d in &auc.datasets {
                println!("{} (K0 = {}, K = {})", d.dataset, d.k0, d.budget);
                if verbose > 0 {
                    for c in &d.cells {
                        println!(
                            "  {:<5} rmse {} (rank {})  cc {} (rank {})",
                            c.strategy.name(),
                            fmt(c.rmse.normalized),
                            c.rmse.rank,
                            fmt(c.cc.normalized),
                            c.cc.rank
                        );
                    }
                }
            }
            if !auc.strategies.is_empty() {
                let names: Vec<&str> = auc.strategies.iter().map(|k| k.name()).collect();
                println!("strategies   {}", names.join(" "));
                println!("avg rank RMSE {:?}", auc.average_rank_rmse.mean);
                println!("avg rank CC   {:?}", auc.average_rank_cc.mean);
            }
            for m in &outcome.summary.missing_cells {
                let s = m.strategy.map(|k| k.name()).unwrap_or("*");
                eprintln!("failed: {} / {s}: {}", m.dataset, m.error);
            }
            println!("results in {}", out_dir.display());
            ExitCode::from(outcome.exit_code() as u8)
        }
    }
}
