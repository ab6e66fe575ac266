//! Adam optimization, early stopping, the training loop and the
//! cross-validation harness.

mod adam;
mod cv;
mod trainer;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use cv::{cross_validate, CvResult, CvRow, GridPoint, CV_CSV_HEADER, CV_FOLDS_CSV_HEADER};
pub use trainer::{
    early_stop, scaled_mse, train, train_pooled, EpochRecord, PooledData, TrainConfig,
    TrainHistory, DEFAULT_BATCH_POINTS,
};
