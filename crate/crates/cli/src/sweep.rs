//! Sweep execution: expand the axis grid into per-replicate run configs with
//! derived seeds, execute them on a bounded rayon pool, then aggregate
//! per-cell medians/IQRs from the logged trajectories. Output row order is
//! fixed by (cell, replicate) enumeration, never by completion order, so
//! results are identical at any parallelism.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde_json::Value;

use rg_optim_core::diagnostics::steps_to_threshold;

use crate::config::{apply_axis, axis_value_label, RunConfig, SweepConfig};
use crate::csvio;
use crate::runner::{derive_seed, run_experiment, RunOutcome, RunResult};

/// One materialized run of a sweep: a concrete cell of the axis grid plus a
/// replicate index, with the axis overrides already applied and the seed
/// derived.
#[derive(Debug, Clone)]
pub struct CellRun {
    pub cell_index: u64,
    pub replicate: u64,
    /// (axis name, value label) pairs in sorted axis order.
    pub labels: Vec<(String, String)>,
    pub config: RunConfig,
}

/// Expand a sweep into its full (cell, replicate) run list, ordered by cell
/// then replicate. Cells enumerate the axis product in sorted axis-name
/// order with the last axis varying fastest.
pub fn expand(sweep: &SweepConfig) -> Result<Vec<CellRun>> {
    let axis_names: Vec<&String> = sweep.axes.keys().collect();
    let axis_values: Vec<&Vec<Value>> = sweep.axes.values().collect();
    let cell_count: u64 = axis_values.iter().map(|v| v.len() as u64).product();

    let mut runs = Vec::with_capacity((cell_count * sweep.seeds_per_cell) as usize);
    for cell_index in 0..cell_count {
        // Decode the mixed-radix cell index into per-axis value indices.
        let mut remainder = cell_index;
        let mut value_indices = vec![0usize; axis_names.len()];
        for axis in (0..axis_names.len()).rev() {
            let len = axis_values[axis].len() as u64;
            value_indices[axis] = (remainder % len) as usize;
            remainder /= len;
        }

        let mut config = sweep.base.clone();
        let mut labels = Vec::with_capacity(axis_names.len());
        for (axis, &value_index) in value_indices.iter().enumerate() {
            let name = axis_names[axis];
            let value = &axis_values[axis][value_index];
            apply_axis(&mut config, name, value)?;
            labels.push((name.clone(), axis_value_label(name, value)));
        }

        for replicate in 0..sweep.seeds_per_cell {
            let mut run = config.clone();
            run.base_seed = derive_seed(sweep.base.base_seed, cell_index, replicate);
            run.log_path = None;
            runs.push(CellRun {
                cell_index,
                replicate,
                labels: labels.clone(),
                config: run,
            });
        }
    }
    Ok(runs)
}

/// Per-cell aggregate over completed replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub cell_index: u64,
    pub labels: Vec<(String, String)>,
    pub replicates: u64,
    pub diverged: u64,
    pub final_loss_median: Option<f64>,
    pub final_loss_iqr: Option<f64>,
    pub steps_to_threshold_median: Option<f64>,
    /// Median over replicates of the fraction of consecutive logged losses
    /// that strictly increased (the log-recomputable oscillation metric).
    pub loss_increase_median: Option<f64>,
}

#[derive(Debug)]
pub struct SweepOutput {
    pub summaries: Vec<CellSummary>,
    pub runs_dir: PathBuf,
    pub summary_path: PathBuf,
    pub plot_path: PathBuf,
    pub total_runs: usize,
    pub total_diverged: usize,
}

/// Linear-interpolation quantile of an unsorted sample (R type 7).
fn quantile(mut values: Vec<f64>, q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite summary values"));
    let position = q * (values.len() - 1) as f64;
    let lower = position.floor() as usize;
    let upper = position.ceil() as usize;
    let weight = position - lower as f64;
    Some(values[lower] * (1.0 - weight) + values[upper] * weight)
}

/// Fraction of consecutive logged-loss pairs with a strict increase.
fn loss_increase_fraction(losses: &[f64]) -> Option<f64> {
    if losses.len() < 2 {
        return None;
    }
    let increases = losses.windows(2).filter(|w| w[1] > w[0]).count();
    Some(increases as f64 / (losses.len() - 1) as f64)
}

fn summarize_cells(
    runs: &[CellRun],
    results: &[RunResult],
    loss_threshold: Option<f64>,
) -> Vec<CellSummary> {
    let mut summaries: Vec<CellSummary> = Vec::new();
    for (run, result) in runs.iter().zip(results) {
        if summaries.last().map(|s| s.cell_index) != Some(run.cell_index) {
            summaries.push(CellSummary {
                cell_index: run.cell_index,
                labels: run.labels.clone(),
                replicates: 0,
                diverged: 0,
                final_loss_median: None,
                final_loss_iqr: None,
                steps_to_threshold_median: None,
                loss_increase_median: None,
            });
        }
        let cell = summaries.last_mut().expect("cell entry just ensured");
        cell.replicates += 1;
        if matches!(result.outcome, RunOutcome::Diverged { .. }) {
            cell.diverged += 1;
        }
    }

    // Second pass: collect per-cell metric samples from completed runs.
    for summary in &mut summaries {
        let mut finals = Vec::new();
        let mut reach_steps = Vec::new();
        let mut increase_fractions = Vec::new();
        for (run, result) in runs.iter().zip(results) {
            if run.cell_index != summary.cell_index
                || !matches!(result.outcome, RunOutcome::Completed)
            {
                continue;
            }
            let losses: Vec<f64> = result.records.iter().map(|r| r.loss).collect();
            if let Some(final_loss) = result.final_loss() {
                finals.push(final_loss);
            }
            if let Some(threshold) = loss_threshold {
                if let Some(index) = steps_to_threshold(&losses, threshold) {
                    reach_steps.push(result.records[index].step as f64);
                }
            }
            if let Some(fraction) = loss_increase_fraction(&losses) {
                increase_fractions.push(fraction);
            }
        }
        summary.final_loss_median = quantile(finals.clone(), 0.5);
        summary.final_loss_iqr = match (quantile(finals.clone(), 0.75), quantile(finals, 0.25)) {
            (Some(hi), Some(lo)) => Some(hi - lo),
            _ => None,
        };
        summary.steps_to_threshold_median = quantile(reach_steps, 0.5);
        summary.loss_increase_median = quantile(increase_fractions, 0.5);
    }
    summaries
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v}")).unwrap_or_default()
}

fn summary_to_csv(summaries: &[CellSummary], axis_names: &[String]) -> String {
    let mut out = String::from("cell");
    for name in axis_names {
        out.push(',');
        out.push_str(name);
    }
    out.push_str(
        ",replicates,diverged,final_loss_median,final_loss_iqr,\
         steps_to_threshold_median,loss_increase_median\n",
    );
    for s in summaries {
        out.push_str(&format!("{}", s.cell_index));
        for (_, label) in &s.labels {
            out.push(',');
            out.push_str(label);
        }
        out.push_str(&format!(
            ",{},{},{},{},{},{}\n",
            s.replicates,
            s.diverged,
            fmt_opt(s.final_loss_median),
            fmt_opt(s.final_loss_iqr),
            fmt_opt(s.steps_to_threshold_median),
            fmt_opt(s.loss_increase_median),
        ));
    }
    out
}

fn cell_series_label(labels: &[(String, String)]) -> String {
    if labels.is_empty() {
        return "base".to_owned();
    }
    labels
        .iter()
        .map(|(name, value)| format!("{name}={value}"))
        .collect::<Vec<_>>()
        .join(";")
}

/// Long-format plot data: per cell, the median loss across completed
/// replicates at each step.
fn plot_data_csv(runs: &[CellRun], results: &[RunResult]) -> String {
    let mut out = String::from("series,step,value\n");
    let mut cell = 0;
    loop {
        let members: Vec<usize> = (0..runs.len())
            .filter(|&i| {
                runs[i].cell_index == cell && matches!(results[i].outcome, RunOutcome::Completed)
            })
            .collect();
        let seen_cell = runs.iter().any(|r| r.cell_index == cell);
        if !seen_cell {
            break;
        }
        if let Some(&first) = members.first() {
            let series = cell_series_label(&runs[first].labels);
            let n_steps = results[first].records.len();
            for row in 0..n_steps {
                let losses: Vec<f64> = members
                    .iter()
                    .map(|&i| results[i].records[row].loss)
                    .collect();
                if let Some(median) = quantile(losses, 0.5) {
                    out.push_str(&format!(
                        "{series},{},{median}\n",
                        results[first].records[row].step
                    ));
                }
            }
        }
        cell += 1;
    }
    out
}

/// Execute a sweep on `parallelism` worker threads and write the per-run
/// logs, summary table, and plot data under `out_dir`.
pub fn run_sweep(sweep: &SweepConfig, parallelism: usize, out_dir: &Path) -> Result<SweepOutput> {
    let runs = expand(sweep)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .context("building worker pool")?;
    let results: Vec<RunResult> = pool
        .install(|| {
            runs.par_iter()
                .map(|run| run_experiment(&run.config))
                .collect::<Result<Vec<_>>>()
        })
        .context("executing sweep runs")?;

    let runs_dir = out_dir.join("runs");
    fs::create_dir_all(&runs_dir).with_context(|| format!("creating {}", runs_dir.display()))?;
    for (run, result) in runs.iter().zip(&results) {
        let name = format!("cell{:03}_rep{:03}.csv", run.cell_index, run.replicate);
        csvio::write_records(&runs_dir.join(name), &result.records)?;
    }

    let summaries = summarize_cells(&runs, &results, sweep.loss_threshold);
    let axis_names: Vec<String> = sweep.axes.keys().cloned().collect();
    let summary_path = out_dir.join("summary.csv");
    fs::write(&summary_path, summary_to_csv(&summaries, &axis_names))
        .with_context(|| format!("writing {}", summary_path.display()))?;

    let plot_path = out_dir.join("plot_loss.csv");
    fs::write(&plot_path, plot_data_csv(&runs, &results))
        .with_context(|| format!("writing {}", plot_path.display()))?;

    let total_diverged = results
        .iter()
        .filter(|r| matches!(r.outcome, RunOutcome::Diverged { .. }))
        .count();
    Ok(SweepOutput {
        summaries,
        runs_dir,
        summary_path,
        plot_path,
        total_runs: runs.len(),
        total_diverged,
    })
}

/// Resolve worker-thread count: explicit flag, then the RG_OPTIM_THREADS
/// environment variable, then the machine's available parallelism.
pub fn resolve_parallelism(flag: Option<usize>) -> usize {
    if let Some(n) = flag {
        return n.max(1);
    }
    if let Ok(text) = std::env::var("RG_OPTIM_THREADS") {
        if let Ok(n) = text.trim().parse::<usize>() {
            return n.max(1);
        }
    }
    std::thread::available_parallelism()
        .map(std::num::NonZeroUsize::get)
        .unwrap_or(1)
}
