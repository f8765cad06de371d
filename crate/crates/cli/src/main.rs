use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use rg_optim::check;
use rg_optim::config::{load_config, ConfigFile};
use rg_optim::csvio;
use rg_optim::runner::{run_experiment, RunOutcome};
use rg_optim::sweep::{resolve_parallelism, run_sweep};

#[derive(Parser)]
#[command(
    name = "rg-optim",
    version,
    about = "Deterministic laboratory for loss-scaling (random-gradient) optimization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a single run config and write its trajectory CSV.
    Run {
        /// JSON run config (top-level "type": "run").
        #[arg(long)]
        config: PathBuf,
        /// Output directory for the trajectory log (default: current dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Execute a sweep config: per-run logs, summary table, and plot data.
    Sweep {
        /// JSON sweep config (top-level "type": "sweep").
        #[arg(long)]
        config: PathBuf,
        /// Worker threads (default: RG_OPTIM_THREADS, then all cores).
        #[arg(long)]
        parallelism: Option<usize>,
        /// Output directory (default: current dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full acceptance suite and print a pass/fail report.
    Check,
    /// Generate a synthetic dataset and export it as CSV.
    GenData {
        /// Dataset family; currently "blobs".
        #[arg(long)]
        kind: String,
        /// Number of samples.
        #[arg(long)]
        n: usize,
        /// Feature dimension.
        #[arg(long)]
        dim: usize,
        /// Number of classes.
        #[arg(long)]
        classes: usize,
        /// Distance of each class center from the origin.
        #[arg(long, default_value_t = 4.0)]
        separation: f64,
        /// Generator seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn out_dir(out: Option<PathBuf>) -> Result<PathBuf> {
    let dir = out.unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, out } => {
            let run_config = match load_config(&config)? {
                ConfigFile::Run(run) => run,
                ConfigFile::Sweep(_) => bail!(
                    "config {} has type \"sweep\"; use the sweep subcommand",
                    config.display()
                ),
            };
            let dir = out_dir(out)?;
            let log_name = run_config
                .log_path
                .clone()
                .unwrap_or_else(|| "run.csv".into());
            let log_path = dir.join(log_name);
            let result = run_experiment(&run_config)?;
            csvio::write_records(&log_path, &result.records)?;
            match result.outcome {
                RunOutcome::Completed => {
                    let final_loss = result.final_loss().unwrap_or(f64::NAN);
                    println!(
                        "completed {} steps, final loss {final_loss}, log {}",
                        run_config.max_steps,
                        log_path.display()
                    );
                    Ok(ExitCode::SUCCESS)
                }
                RunOutcome::Diverged { step, detail } => {
                    eprintln!(
                        "run diverged at step {step}: {detail} (failure row logged in {})",
                        log_path.display()
                    );
                    Ok(ExitCode::FAILURE)
                }
            }
        }
        Command::Sweep {
            config,
            parallelism,
            out,
        } => {
            let sweep_config = match load_config(&config)? {
                ConfigFile::Sweep(sweep) => sweep,
                ConfigFile::Run(_) => bail!(
                    "config {} has type \"run\"; use the run subcommand",
                    config.display()
                ),
            };
            let dir = out_dir(out)?;
            let threads = resolve_parallelism(parallelism);
            let output = run_sweep(&sweep_config, threads, &dir)?;
            println!(
                "{} runs across {} cells, parallelism {threads} ({} diverged)",
                output.total_runs,
                output.summaries.len(),
                output.total_diverged
            );
            println!("summary: {}", output.summary_path.display());
            println!("plot data: {}", output.plot_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Check => {
            let reports = check::run_all();
            if check::print_reports(&reports) {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::FAILURE)
            }
        }
        Command::GenData {
            kind,
            n,
            dim,
            classes,
            separation,
            seed,
            out,
        } => {
            if kind != "blobs" {
                bail!("unknown dataset kind {kind:?} (expected \"blobs\")");
            }
            let data = rg_optim_core::gen_blobs(n, dim, classes, separation, seed)
                .map_err(|e| anyhow!("{e}"))?;
            csvio::write_dataset(&out, &data)?;
            println!(
                "wrote {} samples (dim {dim}, {classes} classes, separation {separation}) to {}",
                data.n(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
