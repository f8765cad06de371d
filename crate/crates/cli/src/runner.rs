//! Single-experiment execution: deterministic seed derivation, the per-step
//! training loop (sample batch, forward, draw scale, backward with the scale
//! as root adjoint, optimizer step, log), and divergence handling.

use std::time::Instant;

use anyhow::{anyhow, Result};

use rg_optim_core::diagnostics;
use rg_optim_core::{sample_batch, Objective, ParamVector, RngState};

use crate::config::RunConfig;

/// One logged training step. `loss` is always the objective's true
/// (unscaled) value so curves are comparable across scaling strategies;
/// `grad_norm_sq` is the squared norm of the gradient actually applied
/// (scale included). `wall_clock_ms` is informational and excluded from
/// determinism comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub step: u64,
    pub loss: f64,
    pub scale: Option<f64>,
    pub lr: Option<f64>,
    pub grad_norm_sq: Option<f64>,
    pub curvature_term: Option<f64>,
    pub accuracy: Option<f64>,
    pub wall_clock_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Completed,
    /// The run hit a non-finite loss or gradient; a failure row with the
    /// step index was logged and the run stopped early.
    Diverged {
        step: u64,
        detail: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub records: Vec<TrajectoryRecord>,
    pub outcome: RunOutcome,
    /// Parameters after the last completed step (diagnostic convenience;
    /// fully determined by the config).
    pub final_params: ParamVector,
}

impl RunResult {
    pub fn final_loss(&self) -> Option<f64> {
        match self.outcome {
            RunOutcome::Completed => self.records.last().map(|r| r.loss),
            RunOutcome::Diverged { .. } => None,
        }
    }
}

/// Seed for one sweep cell replicate: one SplitMix64 output of
/// `base_seed XOR (cell_index * 2^32 + replicate_index)`. Distinct
/// (cell, replicate) pairs below 2^32 give distinct seeds because the
/// SplitMix64 output stage is a bijection of its state.
pub fn derive_seed(base_seed: u64, cell_index: u64, replicate_index: u64) -> u64 {
    let mixed = base_seed ^ ((cell_index << 32).wrapping_add(replicate_index));
    RngState::new(mixed).next().0
}

/// Independent per-run substreams drawn from the run's base seed. The init
/// stream comes first so initial parameters (and the step-0 loss) are
/// identical across scaling strategies.
struct RunStreams {
    init_seed: u64,
    batch_rng: RngState,
    scale_rng: RngState,
}

fn run_streams(base_seed: u64) -> RunStreams {
    let s = RngState::new(base_seed);
    let (init_seed, s) = s.next();
    let (batch_seed, s) = s.next();
    let (scale_seed, _) = s.next();
    RunStreams {
        init_seed,
        batch_rng: RngState::new(batch_seed),
        scale_rng: RngState::new(scale_seed),
    }
}

fn elapsed_ms(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

fn failure_row(step: u64, loss: f64, start: Instant) -> TrajectoryRecord {
    TrajectoryRecord {
        step,
        loss,
        scale: None,
        lr: None,
        grad_norm_sq: None,
        curvature_term: None,
        accuracy: None,
        wall_clock_ms: elapsed_ms(start),
    }
}

/// Execute one run. Returns `Err` only for configuration/build failures;
/// numeric divergence is reported in the outcome with a trailing failure
/// row, matching the "diverged runs are data" policy.
pub fn run_experiment(config: &RunConfig) -> Result<RunResult> {
    let objective = config.objective.build()?;
    let streams = run_streams(config.base_seed);
    let mut params = objective.init_params(streams.init_seed);
    let mut batch_rng = streams.batch_rng;
    let mut strategy = config.scaling.build(streams.scale_rng)?;
    let mut optimizer = config.optimizer.build(objective.dim())?;
    let schedule = config.schedule.build()?;

    let start = Instant::now();
    let mut records = Vec::with_capacity(config.max_steps as usize + 1);

    let init_loss = objective
        .loss(&params, None)
        .map_err(|e| anyhow!("evaluating initial loss: {e}"))?;
    let init_accuracy = if config.diagnostics_every > 0 {
        objective.accuracy(&params).map_err(|e| anyhow!("{e}"))?
    } else {
        None
    };
    records.push(TrajectoryRecord {
        step: 0,
        loss: init_loss,
        scale: None,
        lr: None,
        grad_norm_sq: None,
        curvature_term: None,
        accuracy: init_accuracy,
        wall_clock_ms: elapsed_ms(start),
    });
    if !init_loss.is_finite() {
        return Ok(RunResult {
            records,
            outcome: RunOutcome::Diverged {
                step: 0,
                detail: format!("initial loss is {init_loss}"),
            },
            final_params: params,
        });
    }

    for t in 0..config.max_steps {
        let step_index = t + 1;

        let batch = match (objective.dataset(), config.batch_size) {
            (Some(data), b) if b > 0 => {
                let (batch, next) = sample_batch(data, b, batch_rng).map_err(|e| anyhow!("{e}"))?;
                batch_rng = next;
                Some(batch)
            }
            _ => None,
        };

        let forward = objective.loss(&params, batch.as_ref());
        let loss = match forward {
            Ok(loss) if loss.is_finite() => loss,
            Ok(bad) => {
                records.push(failure_row(step_index, bad, start));
                return Ok(RunResult {
                    records,
                    outcome: RunOutcome::Diverged {
                        step: step_index,
                        detail: format!("loss became {bad}"),
                    },
                    final_params: params,
                });
            }
            Err(e) => {
                records.push(failure_row(step_index, f64::NAN, start));
                return Ok(RunResult {
                    records,
                    outcome: RunOutcome::Diverged {
                        step: step_index,
                        detail: format!("forward pass failed: {e}"),
                    },
                    final_params: params,
                });
            }
        };

        let (scale, next_strategy) = strategy.next_scale(t);
        strategy = next_strategy;

        let grad = match objective.loss_and_scaled_gradient(&params, batch.as_ref(), scale) {
            Ok((_, grad)) if grad.is_finite() => grad,
            Ok(_) | Err(_) => {
                records.push(failure_row(step_index, loss, start));
                return Ok(RunResult {
                    records,
                    outcome: RunOutcome::Diverged {
                        step: step_index,
                        detail: "gradient became non-finite".to_owned(),
                    },
                    final_params: params,
                });
            }
        };

        // Diagnostics are evaluated at the same point as the logged loss,
        // i.e. before the update, on the full set and the unscaled gradient.
        let diagnostics_due =
            config.diagnostics_every > 0 && step_index.is_multiple_of(config.diagnostics_every);
        let (curvature_term, accuracy) = if diagnostics_due {
            let full_grad = objective
                .gradient(&params, None)
                .map_err(|e| anyhow!("diagnostic gradient: {e}"))?;
            let delta = diagnostics::default_delta(&params);
            let curvature = diagnostics::curvature_ghg(&objective, &params, &full_grad, delta)
                .map_err(|e| anyhow!("curvature diagnostic: {e}"))?;
            let accuracy = objective.accuracy(&params).map_err(|e| anyhow!("{e}"))?;
            (curvature, accuracy)
        } else {
            (None, None)
        };

        let lr = schedule.lr_at(t).map_err(|e| anyhow!("{e}"))?;
        if let Err(e) = optimizer.step(&mut params, &grad, lr) {
            records.push(failure_row(step_index, loss, start));
            return Ok(RunResult {
                records,
                outcome: RunOutcome::Diverged {
                    step: step_index,
                    detail: format!("optimizer rejected the step: {e}"),
                },
                final_params: params,
            });
        }

        records.push(TrajectoryRecord {
            step: step_index,
            loss,
            scale: Some(scale),
            lr: Some(lr),
            grad_norm_sq: Some(grad.norm_sq()),
            curvature_term,
            accuracy,
            wall_clock_ms: elapsed_ms(start),
        });
    }

    Ok(RunResult {
        records,
        outcome: RunOutcome::Completed,
        final_params: params,
    })
}

/// Rebuild the objective for a config (used by summary oracles and tests).
pub fn build_objective(config: &RunConfig) -> Result<Objective> {
    config.objective.build()
}
