//! Per-step loss-weight policies.
//!
//! The random-gradient method multiplies the loss by a scalar drawn fresh each
//! step before backpropagation. Each policy here produces that scalar:
//! `identity` (plain training), `constant` (fixed loss weight), `uniform`
//! (random in `[low, high)` — RG proper), and `cyclical` (a deterministic
//! triangular wave, rng-free).
//!
//! Strategies use value-semantics state: [`ScalingStrategy::next_scale`]
//! consumes `self` and returns the advanced strategy, making rng state flow
//! explicit and auditable.

use alloc::format;

use crate::error::Error;
use crate::rng::{uniform_draw, RngState};
use crate::Result;

/// Policy for the scalar weight applied to the loss before backward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalingStrategy {
    /// Always 1.0 — the unmodified baseline.
    Identity,
    /// A fixed loss weight.
    Constant { weight: f64 },
    /// Uniform random in `[low, high)`, advancing a private rng per draw.
    Uniform { low: f64, high: f64, rng: RngState },
    /// Triangular wave from `cycle_low` up to `cycle_high` over `cycle_length`
    /// steps and back; period `2 * cycle_length`, rng-free.
    Cyclical {
        cycle_low: f64,
        cycle_high: f64,
        cycle_length: u64,
    },
}

impl ScalingStrategy {
    pub fn identity() -> Self {
        ScalingStrategy::Identity
    }

    pub fn constant(weight: f64) -> Result<Self> {
        if !weight.is_finite() {
            return Err(Error::invalid(format!(
                "constant scaling weight must be finite, got {weight}"
            )));
        }
        Ok(ScalingStrategy::Constant { weight })
    }

    pub fn uniform(low: f64, high: f64, rng: RngState) -> Result<Self> {
        if !(low.is_finite() && high.is_finite()) {
            return Err(Error::invalid("uniform scaling bounds must be finite"));
        }
        if low < 0.0 {
            return Err(Error::invalid(format!(
                "uniform scaling needs low >= 0, got low={low}"
            )));
        }
        if low >= high {
            return Err(Error::invalid(format!(
                "uniform scaling needs low < high, got low={low}, high={high}"
            )));
        }
        Ok(ScalingStrategy::Uniform { low, high, rng })
    }

    pub fn cyclical(cycle_low: f64, cycle_high: f64, cycle_length: u64) -> Result<Self> {
        if !(cycle_low.is_finite() && cycle_high.is_finite()) {
            return Err(Error::invalid("cyclical scaling bounds must be finite"));
        }
        if cycle_low > cycle_high {
            return Err(Error::invalid(format!(
                "cyclical scaling needs cycle_low <= cycle_high, got {cycle_low} > {cycle_high}"
            )));
        }
        if cycle_length == 0 {
            return Err(Error::invalid("cyclical cycle_length must be >= 1"));
        }
        Ok(ScalingStrategy::Cyclical {
            cycle_low,
            cycle_high,
            cycle_length,
        })
    }

    /// The scale for `step`, plus the advanced strategy.
    ///
    /// Only the uniform kind carries state (its rng); only the cyclical kind
    /// reads `step`. Cannot fail: bounds are validated at construction.
    pub fn next_scale(self, step: u64) -> (f64, Self) {
        match self {
            ScalingStrategy::Identity => (1.0, self),
            ScalingStrategy::Constant { weight } => (weight, self),
            ScalingStrategy::Uniform { low, high, rng } => {
                let (scale, rng) =
                    uniform_draw(rng, low, high).expect("uniform bounds validated at construction");
                (scale, ScalingStrategy::Uniform { low, high, rng })
            }
            ScalingStrategy::Cyclical {
                cycle_low,
                cycle_high,
                cycle_length,
            } => {
                // tri(s) = 1 - |((s mod 2L) / L) - 1|: 0 at s=0, 1 at s=L, 0 at s=2L.
                let s = (step % (2 * cycle_length)) as f64;
                let tri = 1.0 - (s / cycle_length as f64 - 1.0).abs();
                (cycle_low + (cycle_high - cycle_low) * tri, self)
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ScalingStrategy::Identity => "identity",
            ScalingStrategy::Constant { .. } => "constant",
            ScalingStrategy::Uniform { .. } => "uniform",
            ScalingStrategy::Cyclical { .. } => "cyclical",
        }
    }
}
