//! Evaluation suite: pooled per-channel MSEs, wall-pressure integration,
//! relative force errors and rank correlations across simulations.

mod rank;
mod report;
mod surface;

pub use rank::{average_ranks, pearson, spearman};
pub use report::{
    evaluate, evaluate_predictions, mean_relative_error, mse_per_channel, predict_dataset,
    EvalReport, Evaluation, SimCoefficients, METRIC_LABELS,
};
pub use surface::{
    force_coefficients, order_surface, pressure_force, ForceCoefficients, SurfacePolyline,
};
