//! Command-line driver: single runs, parameter sweeps, and bound validation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use airpca::bounds::validate::{run_all, ValidatorConfig};
use airpca::harness::config::{ExperimentConfig, Variant};
use airpca::harness::run::{metrics_to_csv, run};
use airpca::harness::sweep::sweep;

#[derive(Parser)]
#[command(name = "airpca", version, about = "Federated PCA over a noisy multi-access channel")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one experiment and write metrics.csv + summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the configured variant
        /// (adaptive_power | fixed_power | noise_free | centralized).
        #[arg(long)]
        variant: Option<String>,
        /// Override the configured master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Subtract the feature mean before partitioning (exploration only;
        /// the objective is defined on uncentered data).
        #[arg(long)]
        center: bool,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run a parameter sweep and write sweep.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Config field to vary (e.g. K, G, q, p_rx_min_frac, batch_size).
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Check the descent-speed bounds against Monte Carlo simulation and
    /// write bounds_report.json.
    ValidateBounds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch() -> airpca::Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { config, variant, seed, center, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(v) = variant {
                cfg.variant = Variant::parse(&v)?;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if center {
                cfg.dataset.center = true;
            }
            std::fs::create_dir_all(&out)?;
            let (metrics, summary) = run(&cfg)?;
            write(&out.join("metrics.csv"), &metrics_to_csv(&metrics))?;
            write(&out.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
            println!(
                "rounds={} final_objective={} centralized={} error_ratio={:.6}{}",
                summary.rounds_executed,
                summary.final_objective,
                summary.centralized_objective,
                summary.error_ratio,
                if summary.diverged { " DIVERGED" } else { "" }
            );
            for (target, latency) in &summary.latency_to_target {
                match latency {
                    Some(n) => println!("latency[{target}] = {n}"),
                    None => println!("latency[{target}] = not reached"),
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { config, axis, values, seeds, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            std::fs::create_dir_all(&out)?;
            let table = sweep(&cfg, &axis, &values, &seeds)?;
            write(&out.join("sweep.csv"), &table.to_csv())?;
            println!("{}", table.to_csv().trim_end());
            Ok(ExitCode::SUCCESS)
        }
        Command::ValidateBounds { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let validator = ValidatorConfig {
                seed: cfg.seed,
                theorem1_paths: cfg.validator.theorem1_paths,
                theorem2_seeds: cfg.validator.theorem2_seeds,
            };
            std::fs::create_dir_all(&out)?;
            let records = run_all(&validator)?;
            write(&out.join("bounds_report.json"), &serde_json::to_string_pretty(&records)?)?;
            let mut all_pass = true;
            for r in &records {
                println!("{}: {}", r.check, r.verdict);
                all_pass &= r.passed();
            }
            Ok(if all_pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn write(path: &Path, text: &str) -> airpca::Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}
