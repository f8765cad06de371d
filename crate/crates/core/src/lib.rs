//! Core numerics for the random-gradient (RG) optimization laboratory.
//!
//! RG multiplies the scalar training loss by a random weight before
//! backpropagation, which randomly shrinks each step's gradient. This crate
//! provides everything needed to study that trick on desk-scale objectives:
//!
//! - a minimal reverse-mode [`Tape`] whose backward pass is seeded at the
//!   root, so "scale the loss" and "scale the gradient" are the same code path
//! - the [`Objective`] family (ill-conditioned quadratics, Rosenbrock,
//!   logistic regression and a small MLP on synthetic blobs)
//! - [`ScalingStrategy`] policies for the per-step loss weight (identity,
//!   constant, uniform random, cyclical)
//! - [`OptimizerState`] updates: SGD, momentum, Adam, with coupled L2 decay
//! - learning-rate [`Schedule`]s (constant, poly, step decay)
//! - second-order [`diagnostics`]: finite-difference Hessian-vector products,
//!   the gᵀHg curvature term, Taylor prediction error, oscillation metrics
//!
//! Everything is `f64`, deterministic, and seeded through a SplitMix64
//! [`RngState`] so identical inputs reproduce identical trajectories bitwise.
//! The crate is `no_std` (with `alloc`); IO, configs, and the CLI live in the
//! companion `rg-optim` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod diagnostics;
mod error;
mod gradcheck;
pub(crate) mod math;
mod objective;
mod optim;
mod param;
mod rng;
mod scaling;
mod schedule;
mod tape;

pub use error::Error;
pub use gradcheck::{
    finite_diff_gradient, finite_diff_gradient_fn, gradient_check, gradient_check_fn,
    GradCheckReport, FD_CHECK_STEP,
};
pub use objective::{
    gen_blobs, sample_batch, Batch, Dataset, MlpSpec, Nonlinearity, Objective, QuadraticSpec,
};
pub use optim::OptimizerState;
pub use param::{Gradient, ParamVector};
pub use rng::{uniform_draw, RngState};
pub use scaling::ScalingStrategy;
pub use schedule::Schedule;
pub use tape::{NodeId, Shape, Tape, Value};

/// Convenience alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;
