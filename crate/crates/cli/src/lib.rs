//! Reproducible experiment harness for the `rg-optim-core` laboratory:
//! JSON-configured runs and sweeps, per-step CSV trajectory logs, and the
//! acceptance check suite behind the `check` subcommand.

pub mod check;
pub mod config;
pub mod csvio;
pub mod runner;
pub mod sweep;
