//! Packed-ensemble MLP surrogates for steady 2-D flow fields.
//!
//! * [`packed_net`]: grouped-layer ensemble network, gradients, model files.
//! * [`data`]: point-cloud simulations, scaling, folds, synthetic cylinder flow.
//! * [`training`]: Adam training loop, early stopping, grid cross-validation.
//! * [`metrics`]: field MSEs, surface force coefficients, rank correlation.
//! * [`bench`]: timed training runs and per-split reports.
//! * [`cli`]: the `packed-surrogate` command.

pub mod bench;
pub mod cli;
pub mod data;
mod error;
pub mod exec;
pub mod metrics;
pub mod packed_net;
pub mod training;

pub use error::{Error, Result};
pub use exec::Exec;
