//! Second-order and oscillation diagnostics.
//!
//! The curvature machinery estimates Hessian-vector products from two
//! gradient evaluations (a forward difference along a unit direction), which
//! is exact for quadratics up to rounding. From it come the g'Hg curvature
//! term, the quadratic-model (Taylor) prediction error, and trajectory
//! oscillation metrics quantifying zig-zag descent.
//!
//! All operations evaluate the objective on its full dataset (no batch), so
//! diagnostics are deterministic functions of the iterate alone.

use alloc::format;
use alloc::vec::Vec;

use crate::error::Error;
use crate::objective::Objective;
use crate::param::{Gradient, ParamVector};
use crate::Result;

/// Per-step diagnostic record assembled by the training harness.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    /// g'g of the unscaled batch gradient.
    pub grad_norm_sq: f64,
    /// g'Hg via the forward-difference Hessian-vector product; `None` when
    /// not sampled this step or when the gradient vanishes.
    pub curvature_term: Option<f64>,
    /// Quadratic-model residual for the step just taken, when sampled.
    pub taylor_pred_error: Option<f64>,
    /// Cosine between consecutive updates; `None` when either update is zero.
    pub update_cosine: Option<f64>,
    /// Whether the logged loss increased relative to the previous step.
    pub loss_increased: bool,
}

/// Default forward-difference step: `1e-4 * max(1, ‖x‖)`.
pub fn default_delta(x: &ParamVector) -> f64 {
    1e-4 * x.norm().max(1.0)
}

/// Forward-difference Hessian-vector product along a unit `direction`:
/// `(grad(x + delta d) - grad(x)) / delta`, from any gradient closure.
pub fn hessian_fd_column_fn<G>(
    mut gradient: G,
    x: &ParamVector,
    direction: &[f64],
    delta: f64,
) -> Result<Vec<f64>>
where
    G: FnMut(&ParamVector) -> Result<Gradient>,
{
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::invalid(format!(
            "delta must be finite and > 0, got {delta}"
        )));
    }
    if direction.len() != x.dim() {
        return Err(Error::DimMismatch {
            expected: x.dim(),
            got: direction.len(),
        });
    }
    let norm = crate::math::sqrt(direction.iter().map(|v| v * v).sum());
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::invalid(format!(
            "direction must have unit norm within 1e-10, got ‖d‖ = {norm}"
        )));
    }
    let shifted = ParamVector::new(
        x.as_slice()
            .iter()
            .zip(direction)
            .map(|(xi, di)| xi + delta * di)
            .collect(),
    )?;
    let g1 = gradient(&shifted)?;
    let g0 = gradient(x)?;
    Ok(g1
        .as_slice()
        .iter()
        .zip(g0.as_slice())
        .map(|(a, b)| (a - b) / delta)
        .collect())
}

/// Forward-difference Hessian-vector product of an objective (full dataset).
pub fn hessian_fd_column(
    objective: &Objective,
    x: &ParamVector,
    direction: &[f64],
    delta: f64,
) -> Result<Vec<f64>> {
    hessian_fd_column_fn(|p| objective.gradient(p, None), x, direction, delta)
}

/// The curvature term g'Hg, estimated as `‖g‖ * (g . H(g/‖g‖))`.
///
/// Returns `Ok(None)` for a vanishing gradient (the term is undefined there,
/// which is reported as missing rather than as an error).
pub fn curvature_ghg(
    objective: &Objective,
    x: &ParamVector,
    grad: &Gradient,
    delta: f64,
) -> Result<Option<f64>> {
    if grad.dim() != x.dim() {
        return Err(Error::DimMismatch {
            expected: x.dim(),
            got: grad.dim(),
        });
    }
    let norm = grad.norm();
    if norm == 0.0 {
        return Ok(None);
    }
    let unit: Vec<f64> = grad.as_slice().iter().map(|v| v / norm).collect();
    let column = hessian_fd_column(objective, x, &unit, delta)?;
    Ok(Some(norm * grad.dot(&column)))
}

/// Quadratic-model residual of a candidate step:
/// `|f(x+s) - [f(x) + s'g + 0.5 s'(Hs)]|` with Hs from the forward
/// difference at the default delta.
pub fn taylor_prediction_error(
    objective: &Objective,
    x: &ParamVector,
    step: &[f64],
) -> Result<f64> {
    if step.len() != x.dim() {
        return Err(Error::DimMismatch {
            expected: x.dim(),
            got: step.len(),
        });
    }
    let step_norm = crate::math::sqrt(step.iter().map(|v| v * v).sum());
    if step_norm == 0.0 {
        return Ok(0.0);
    }
    let f0 = objective.loss(x, None)?;
    let g = objective.gradient(x, None)?;
    let unit: Vec<f64> = step.iter().map(|v| v / step_norm).collect();
    let column = hessian_fd_column(objective, x, &unit, default_delta(x))?;
    // s'Hs = ‖s‖ * (s . H u) with u = s/‖s‖.
    let shs: f64 = step_norm * step.iter().zip(&column).map(|(s, h)| s * h).sum::<f64>();
    let sg: f64 = step.iter().zip(g.as_slice()).map(|(s, gi)| s * gi).sum();
    let shifted = ParamVector::new(
        x.as_slice()
            .iter()
            .zip(step)
            .map(|(xi, si)| xi + si)
            .collect(),
    )?;
    let f1 = objective.loss(&shifted, None)?;
    Ok((f1 - (f0 + sg + 0.5 * shs)).abs())
}

/// Trajectory zig-zag summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillationIndex {
    /// Fraction of consecutive update pairs with negative cosine
    /// (zero-norm updates are skipped; 0 when no pair is valid).
    pub neg_cosine_fraction: f64,
    /// Fraction of steps whose logged loss strictly increased.
    pub loss_increase_fraction: f64,
}

/// Oscillation metrics over an iterate trajectory and its logged losses.
///
/// Requires at least 3 points (two updates make one cosine pair) and one
/// loss per trajectory point.
pub fn oscillation_index(trajectory: &[ParamVector], losses: &[f64]) -> Result<OscillationIndex> {
    if trajectory.len() < 3 {
        return Err(Error::invalid(format!(
            "oscillation index needs a trajectory of >= 3 points, got {}",
            trajectory.len()
        )));
    }
    if losses.len() != trajectory.len() {
        return Err(Error::DimMismatch {
            expected: trajectory.len(),
            got: losses.len(),
        });
    }
    let dim = trajectory[0].dim();
    if trajectory.iter().any(|p| p.dim() != dim) {
        return Err(Error::invalid("trajectory points have mixed dims"));
    }

    let updates: Vec<Vec<f64>> = trajectory
        .windows(2)
        .map(|w| {
            w[1].as_slice()
                .iter()
                .zip(w[0].as_slice())
                .map(|(b, a)| b - a)
                .collect()
        })
        .collect();

    let mut valid = 0usize;
    let mut negative = 0usize;
    for pair in updates.windows(2) {
        let n0: f64 = pair[0].iter().map(|v| v * v).sum();
        let n1: f64 = pair[1].iter().map(|v| v * v).sum();
        if n0 == 0.0 || n1 == 0.0 {
            continue;
        }
        valid += 1;
        let dot: f64 = pair[0].iter().zip(&pair[1]).map(|(a, b)| a * b).sum();
        if dot < 0.0 {
            negative += 1;
        }
    }
    let neg_cosine_fraction = if valid == 0 {
        0.0
    } else {
        negative as f64 / valid as f64
    };

    let increases = losses.windows(2).filter(|w| w[1] > w[0]).count();
    let loss_increase_fraction = increases as f64 / (losses.len() - 1) as f64;

    Ok(OscillationIndex {
        neg_cosine_fraction,
        loss_increase_fraction,
    })
}

/// First index whose loss is at or below `threshold`, if any.
///
/// `threshold` must be finite (callers validate); a non-finite threshold
/// matches nothing.
pub fn steps_to_threshold(losses: &[f64], threshold: f64) -> Option<usize> {
    if !threshold.is_finite() {
        return None;
    }
    losses.iter().position(|&l| l <= threshold)
}
