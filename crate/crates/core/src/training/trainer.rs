use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use crate::data::{Dataset, ScalerPair, N_INPUTS, N_TARGETS};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::packed_net::{init_params, Mode, PackedMlp, PackedSpec, Params};

pub const DEFAULT_BATCH_POINTS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub batch_points: usize,
    /// Set from the command line; not read from config files.
    #[serde(skip)]
    pub seed: u64,
    pub early_stop_enabled: bool,
    pub early_stop_threshold: f64,
    pub early_stop_window: usize,
    /// Within-run batch parallelism. Results do not depend on it.
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            weight_decay: 0.0,
            max_epochs: 200,
            batch_points: DEFAULT_BATCH_POINTS,
            seed: 0,
            early_stop_enabled: false,
            early_stop_threshold: 0.01,
            early_stop_window: 5,
            exec: Exec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate {} must be > 0", self.learning_rate));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!("weight_decay {} must be >= 0", self.weight_decay));
        }
        if self.batch_points == 0 {
            return bad("batch_points must be >= 1".into());
        }
        if !(self.early_stop_threshold > 0.0 && self.early_stop_threshold < 1.0) {
            return bad(format!(
                "early_stop_threshold {} outside (0, 1)",
                self.early_stop_threshold
            ));
        }
        if self.early_stop_window == 0 {
            return bad("early_stop_window must be >= 1".into());
        }
        Ok(())
    }
}

/// True iff each of the last `window` relative changes
/// `|L[t] - L[t-1]| / L[t-1]` is below `threshold`. A zero previous loss
/// counts as no change.
pub fn early_stop(history: &[f64], threshold: f64, window: usize) -> bool {
    if history.len() < window + 1 {
        return false;
    }
    history[history.len() - window - 1..].windows(2).all(|w| {
        let (prev, cur) = (w[0], w[1]);
        let rel = if prev == 0.0 { 0.0 } else { (cur - prev).abs() / prev };
        rel < threshold
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    pub fn final_train_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,wall_seconds\n");
        for e in &self.epochs {
            let val = e.val_loss.map(|v| v.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{}", e.epoch, e.train_loss, val, e.wall_seconds)
                .expect("writing to a String cannot fail");
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Scaled inputs/targets of every point of a dataset, pooled in order.
#[derive(Debug, Clone)]
pub struct PooledData {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

impl PooledData {
    pub fn new(dataset: &Dataset, scaler: &ScalerPair) -> Self {
        let mut inputs = Vec::with_capacity(dataset.total_points() * N_INPUTS);
        let mut targets = Vec::with_capacity(dataset.total_points() * N_TARGETS);
        for sim in &dataset.simulations {
            inputs.extend(scaler.scale_inputs(&sim.points));
            targets.extend(scaler.scale_targets(&sim.targets));
        }
        Self { inputs, targets }
    }

    pub fn rows(&self) -> usize {
        self.inputs.len() / N_INPUTS
    }
}

/// Scaled-target MSE of the ensemble mean, eval mode.
pub fn scaled_mse(net: &PackedMlp, params: &Params, data: &PooledData) -> Result<f64> {
    net.loss(params, &data.inputs, &data.targets, Mode::Eval)
}

pub fn train(
    spec: &PackedSpec,
    train_data: &Dataset,
    val_data: Option<&Dataset>,
    scaler: &ScalerPair,
    cfg: &TrainConfig,
) -> Result<(Params, TrainHistory)> {
    if train_data.total_points() == 0 {
        return Err(Error::InvalidDataset("training split has no points".into()));
    }
    let pooled = PooledData::new(train_data, scaler);
    let val = val_data.map(|v| PooledData::new(v, scaler));
    train_pooled(spec, &pooled, val.as_ref(), cfg)
}

/// Training loop over already-scaled data. Deterministic given `cfg.seed`.
pub fn train_pooled(
    spec: &PackedSpec,
    data: &PooledData,
    val: Option<&PooledData>,
    cfg: &TrainConfig,
) -> Result<(Params, TrainHistory)> {
    cfg.validate()?;
    let net = PackedMlp::new(spec)?.with_exec(cfg.exec);
    if net.in_features() != N_INPUTS || net.out_features() != N_TARGETS {
        return Err(Error::InvalidSpec(format!(
            "flow data needs {N_INPUTS} inputs and {N_TARGETS} outputs"
        )));
    }
    let rows = data.rows();
    if rows == 0 {
        return Err(Error::InvalidDataset("no training points".into()));
    }

    let mut params = init_params(net.plans(), cfg.seed);
    let mut adam = AdamState::new(&params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(2);

    let mut history = TrainHistory::default();
    let mut losses = Vec::with_capacity(cfg.max_epochs);
    let mut order: Vec<usize> = (0..rows).collect();
    let mut xb = Vec::with_capacity(cfg.batch_points * N_INPUTS);
    let mut tb = Vec::with_capacity(cfg.batch_points * N_TARGETS);

    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut weighted = 0.0;
        for batch in order.chunks(cfg.batch_points) {
            xb.clear();
            tb.clear();
            for &i in batch {
                xb.extend_from_slice(&data.inputs[i * N_INPUTS..(i + 1) * N_INPUTS]);
                tb.extend_from_slice(&data.targets[i * N_TARGETS..(i + 1) * N_TARGETS]);
            }
            let (loss, grads) =
                net.loss_and_grad(&params, &xb, &tb, Mode::Train(&mut dropout_rng))?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            adam.step(&mut params, &grads, cfg.learning_rate, cfg.weight_decay)
                .map_err(|_| Error::Diverged { epoch, loss })?;
            weighted += loss * batch.len() as f64;
        }
        let train_loss = weighted / rows as f64;
        let val_loss = val.map(|v| scaled_mse(&net, &params, v)).transpose()?;
        if let Some(v) = val_loss.filter(|v| !v.is_finite()) {
            return Err(Error::Diverged { epoch, loss: v });
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
        losses.push(train_loss);
        if cfg.early_stop_enabled
            && early_stop(&losses, cfg.early_stop_threshold, cfg.early_stop_window)
        {
            break;
        }
    }
    Ok((params, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_history_never_stops() {
        for n in 0..=5 {
            assert!(!early_stop(&vec![1.0; n], 0.01, 5));
        }
    }

    #[test]
    fn five_small_changes_stop() {
        assert!(early_stop(&[1.0, 0.995, 0.991, 0.987, 0.983, 0.979], 0.01, 5));
    }

    #[test]
    fn large_drop_inside_window_blocks_stop() {
        assert!(!early_stop(&[1.0, 0.995, 0.90, 0.897, 0.894, 0.891], 0.01, 5));
        // once the drop leaves the window the rule fires
        assert!(early_stop(&[1.0, 0.995, 0.90, 0.897, 0.894, 0.891, 0.889, 0.887], 0.01, 5));
    }

    #[test]
    fn zero_previous_loss_counts_as_converged() {
        assert!(early_stop(&[0.0; 6], 0.01, 5));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig { learning_rate: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { early_stop_threshold: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { early_stop_window: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_json_rejects_unknown_and_seed() {
        let ok: TrainConfig = serde_json::from_str(r#"{"learning_rate": 0.01}"#).unwrap();
        assert_eq!(ok.max_epochs, 200);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"lr": 0.01}"#).is_err());
        assert!(serde_json::from_str::<TrainConfig>(r#"{"seed": 3}"#).is_err());
    }

    #[test]
    fn history_csv_layout() {
        let h = TrainHistory {
            epochs: vec![
                EpochRecord { epoch: 1, train_loss: 0.5, val_loss: Some(0.25), wall_seconds: 1.5 },
                EpochRecord { epoch: 2, train_loss: 0.125, val_loss: None, wall_seconds: 2.0 },
            ],
        };
        assert_eq!(
            h.to_csv(),
            "epoch,train_loss,val_loss,wall_seconds\n1,0.5,0.25,1.5\n2,0.125,,2\n"
        );
    }
}
