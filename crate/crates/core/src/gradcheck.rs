//! Central finite-difference gradient checking.
//!
//! The checker is generic over a loss closure so it can verify any gradient
//! path (closed form or tape backward) against an independent forward-only
//! evaluation — and so tests can feed it deliberately corrupted gradients as
//! a negative control.

use alloc::format;

use crate::error::Error;
use crate::objective::{Batch, Objective};
use crate::param::{Gradient, ParamVector};
use crate::Result;

/// Default relative finite-difference step.
///
/// The step actually used is `FD_CHECK_STEP * max(1, |x_i|)` per coordinate,
/// which balances truncation against cancellation for desk-scale objectives.
pub const FD_CHECK_STEP: f64 = 1e-5;

/// Outcome of comparing an analytic gradient against finite differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `‖g_analytic − g_fd‖ / max(‖g_analytic‖, ‖g_fd‖, 1e−12)`.
    pub rel_err: f64,
    /// Largest per-component absolute deviation.
    pub max_abs_err: f64,
    /// Component index of the largest absolute deviation.
    pub worst_index: usize,
    /// Tolerance this report was judged against.
    pub rel_tol: f64,
    pub pass: bool,
}

/// Central-difference gradient of an arbitrary loss closure.
///
/// Each coordinate is perturbed by `h * max(1, |x_i|)`; `h` must be positive.
pub fn finite_diff_gradient_fn<F>(mut loss: F, x: &ParamVector, h: f64) -> Result<Gradient>
where
    F: FnMut(&ParamVector) -> Result<f64>,
{
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid(format!(
            "finite-difference step must be finite and > 0, got {h}"
        )));
    }
    let mut grad = Gradient::zeros(x.dim());
    let mut probe = x.clone();
    for i in 0..x.dim() {
        let xi = x[i];
        let step = h * xi.abs().max(1.0);
        probe.as_mut_slice()[i] = xi + step;
        let up = loss(&probe)?;
        probe.as_mut_slice()[i] = xi - step;
        let down = loss(&probe)?;
        probe.as_mut_slice()[i] = xi;
        grad.as_mut_slice()[i] = (up - down) / (2.0 * step);
    }
    Ok(grad)
}

/// Compare `analytic` against central differences of `loss` at `x`.
///
/// The pass metric is the norm-relative error
/// `‖g_a − g_fd‖ / max(‖g_a‖, ‖g_fd‖, 1e−12)`, which is robust to individual
/// components being exactly zero (for example, dead relu units).
pub fn gradient_check_fn<F>(
    loss: F,
    analytic: &Gradient,
    x: &ParamVector,
    h: f64,
    rel_tol: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamVector) -> Result<f64>,
{
    if analytic.dim() != x.dim() {
        return Err(Error::DimMismatch {
            expected: x.dim(),
            got: analytic.dim(),
        });
    }
    let fd = finite_diff_gradient_fn(loss, x, h)?;
    let mut diff_sq = 0.0;
    let mut max_abs_err = 0.0;
    let mut worst_index = 0;
    for (i, (&a, &f)) in analytic.as_slice().iter().zip(fd.as_slice()).enumerate() {
        let d = (a - f).abs();
        diff_sq += d * d;
        if d > max_abs_err {
            max_abs_err = d;
            worst_index = i;
        }
    }
    let denom = analytic.norm().max(fd.norm()).max(1e-12);
    let rel_err = crate::math::sqrt(diff_sq) / denom;
    Ok(GradCheckReport {
        rel_err,
        max_abs_err,
        worst_index,
        rel_tol,
        pass: rel_err <= rel_tol,
    })
}

/// Central-difference gradient of an objective's loss over `batch`.
pub fn finite_diff_gradient(
    objective: &Objective,
    x: &ParamVector,
    batch: Option<&Batch>,
    h: f64,
) -> Result<Gradient> {
    finite_diff_gradient_fn(|p| objective.loss(p, batch), x, h)
}

/// Check the objective's own gradient path against finite differences.
///
/// Uses a step of 1e-6 for analytic kinds (whose reference is exact closed
/// form) and [`FD_CHECK_STEP`] for tape-backed kinds.
pub fn gradient_check(
    objective: &Objective,
    x: &ParamVector,
    batch: Option<&Batch>,
    rel_tol: f64,
) -> Result<GradCheckReport> {
    let h = if objective.is_analytic() {
        1e-6
    } else {
        FD_CHECK_STEP
    };
    let analytic = objective.gradient(x, batch)?;
    gradient_check_fn(|p| objective.loss(p, batch), &analytic, x, h, rel_tol)
}
