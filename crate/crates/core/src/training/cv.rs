//! k-fold cross-validation over a hyperparameter grid.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::trainer::{scaled_mse, train_pooled, PooledData, TrainConfig};
use crate::data::{kfold_indices, Dataset, ScalerPair};
use crate::error::{Error, Result};
use crate::exec::{with_threads, Exec};
use crate::packed_net::{PackedMlp, PackedSpec};

pub const CV_CSV_HEADER: &str = "dropout,alpha,gamma,learning_rate,validation_loss";
pub const CV_FOLDS_CSV_HEADER: &str = "row,dropout,alpha,gamma,learning_rate,fold,validation_loss";

/// One grid row: the hyperparameters varied by the study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    pub dropout: bool,
    pub alpha: usize,
    pub gamma: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub point: GridPoint,
    /// Mean of `fold_losses`.
    pub validation_loss: f64,
    pub fold_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub rows: Vec<CvRow>,
}

impl CvResult {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CV_CSV_HEADER}\n");
        for r in &self.rows {
            let p = r.point;
            writeln!(
                out,
                "{},{},{},{},{}",
                p.dropout, p.alpha, p.gamma, p.learning_rate, r.validation_loss
            )
            .expect("writing to a String cannot fail");
        }
        out
    }

    /// Raw per-fold log from which the summary table can be recomputed.
    pub fn folds_csv(&self) -> String {
        let mut out = format!("{CV_FOLDS_CSV_HEADER}\n");
        for (i, r) in self.rows.iter().enumerate() {
            let p = r.point;
            for (f, loss) in r.fold_losses.iter().enumerate() {
                writeln!(
                    out,
                    "{i},{},{},{},{},{f},{loss}",
                    p.dropout, p.alpha, p.gamma, p.learning_rate
                )
                .expect("writing to a String cannot fail");
            }
        }
        out
    }

    pub fn write(&self, summary: &Path, folds: &Path) -> Result<()> {
        fs::write(summary, self.to_csv()).map_err(|e| Error::io(summary, e))?;
        fs::write(folds, self.folds_csv()).map_err(|e| Error::io(folds, e))
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Runs `k` trainings per grid row on seeded simulation-level folds. Each
/// fold refits the scaler on its own training portion; the fold loss is the
/// scaled-target MSE on the held-out simulations.
///
/// With `jobs > 1` the (row, fold) trainings run concurrently; results are
/// identical to the sequential run.
pub fn cross_validate(
    dataset: &Dataset,
    grid: &[GridPoint],
    base: &PackedSpec,
    k: usize,
    cfg: &TrainConfig,
    jobs: usize,
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty hyperparameter grid".into()));
    }
    cfg.validate()?;
    let folds = kfold_indices(dataset.len(), k, cfg.seed)?;

    let prepared: Vec<(PooledData, PooledData)> = folds
        .iter()
        .map(|f| {
            let train = dataset.select(&f.train);
            let val = dataset.select(&f.validation);
            let scaler = ScalerPair::fit(&train)?;
            Ok((PooledData::new(&train, &scaler), PooledData::new(&val, &scaler)))
        })
        .collect::<Result<_>>()?;

    let run = |task: usize| -> Result<f64> {
        let (row, fold) = (task / k, task % k);
        let point = grid[row];
        let mut spec = base.clone();
        spec.alpha = point.alpha;
        spec.gamma = point.gamma;
        spec.dropout_enabled = point.dropout;
        let cfg = TrainConfig {
            learning_rate: point.learning_rate,
            ..cfg.clone()
        };
        let (train, val) = &prepared[fold];
        let (params, _) = train_pooled(&spec, train, None, &cfg)?;
        let net = PackedMlp::new(&spec)?.with_exec(cfg.exec);
        scaled_mse(&net, &params, val)
    };

    let tasks = grid.len() * k;
    let losses = if jobs > 1 {
        with_threads(jobs, || Exec::Parallel.map(tasks, run))
    } else {
        Exec::Sequential.map(tasks, run)
    };

    let mut losses = losses.into_iter();
    let mut rows = Vec::with_capacity(grid.len());
    for (r, point) in grid.iter().enumerate() {
        let fold_losses = losses
            .by_ref()
            .take(k)
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::GridRow {
                row: r,
                source: Box::new(e),
            })?;
        rows.push(CvRow {
            point: *point,
            validation_loss: mean(&fold_losses),
            fold_losses,
        });
    }
    Ok(CvResult { rows })
}
