//! Deterministic randomness source: SplitMix64.
//!
//! Every random choice in this crate (loss weights, batch sampling, dataset
//! generation, initialization) flows through this generator, so a 64-bit seed
//! fully determines a run and the stream is bit-exact across implementations.

use crate::error::Error;
use crate::Result;

const INCREMENT: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 generator state.
///
/// Advancing is a pure function: `next` consumes the state and returns the
/// successor, which keeps state flow explicit where streams are forked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngState {
    state: u64,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState { state: seed }
    }

    /// Raw 64-bit state, for logging and stream forking.
    pub fn state(self) -> u64 {
        self.state
    }

    /// One SplitMix64 step: add the Weyl increment, then mix.
    pub fn next(self) -> (u64, RngState) {
        let state = self.state.wrapping_add(INCREMENT);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        (z ^ (z >> 31), RngState { state })
    }

    /// Uniform draw in `[0, 1)` from the top 53 bits of the next output.
    pub fn next_f64(self) -> (f64, RngState) {
        let (bits, rng) = self.next();
        (((bits >> 11) as f64) / (1u64 << 53) as f64, rng)
    }

    /// Pair of independent standard normals via Box–Muller.
    ///
    /// Consumes exactly two outputs regardless of the values drawn, so stream
    /// positions stay predictable.
    pub fn next_gaussian_pair(self) -> (f64, f64, RngState) {
        let (u1, rng) = self.next_f64();
        let (u2, rng) = rng.next_f64();
        // Map u1 from [0,1) to (0,1] so ln never sees zero.
        let r = crate::math::sqrt(-2.0 * crate::math::ln(1.0 - u1));
        let theta = 2.0 * core::f64::consts::PI * u2;
        (
            r * crate::math::cos(theta),
            r * crate::math::sin(theta),
            rng,
        )
    }
}

/// Uniform draw in `[low, high)`.
///
/// The result is `low + (high - low) * u` with `u` from the top 53 bits of a
/// SplitMix64 output; a final rounding guard keeps the half-open contract even
/// when `high - low` underflows the mantissa.
pub fn uniform_draw(rng: RngState, low: f64, high: f64) -> Result<(f64, RngState)> {
    let ordered = low.is_finite() && high.is_finite() && low < high;
    if !ordered {
        return Err(Error::invalid("uniform_draw requires finite low < high"));
    }
    let (u, rng) = rng.next_f64();
    let mut scale = low + (high - low) * u;
    if scale >= high {
        scale = high.next_down();
    }
    if scale < low {
        scale = low;
    }
    Ok((scale, rng))
}
