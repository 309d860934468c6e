//! Marker-gene governed coevolution.
//!
//! Two learners share one governance stack: the two-player NES loop (`coevolution::
//! mgm_e_nes_generation`) and the two-population GA (`coevolution::ga_generation`).
//! Games, baselines, the budgeted multi-seed harness and its CSV logs live alongside.

// Validation uses `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod coevolution;
pub mod config;
pub mod controller;
pub mod env;
pub mod error;
pub mod games;
pub mod governance;
pub mod harness;
pub mod markov;
pub mod metrics;
pub mod nes;

pub use config::{Algorithm, GameSpec, RunConfig};
pub use env::{Evaluator, Game, Policy, Role};
pub use error::{Error, Result};
pub use games::{MatrixGame, MixedStrategy};
pub use harness::{run_experiment, run_seed, SeedRun};
pub use metrics::GenerationRecord;
