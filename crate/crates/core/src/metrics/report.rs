use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::rank::spearman;
use super::surface::{force_coefficients, order_surface};
use crate::data::{target, Dataset, ScalerPair, N_TARGETS};
use crate::error::{Error, Result};
use crate::packed_net::{PackedMlp, Params};

/// Per-channel MSE over paired rows.
pub fn mse_per_channel(
    pred: &[[f64; N_TARGETS]],
    truth: &[[f64; N_TARGETS]],
) -> Result<[f64; N_TARGETS]> {
    let mut acc = MseAccumulator::default();
    acc.add(pred, truth)?;
    Ok(acc.finish())
}

#[derive(Debug, Default)]
struct MseAccumulator {
    sums: [f64; N_TARGETS],
    count: usize,
}

impl MseAccumulator {
    fn add(&mut self, pred: &[[f64; N_TARGETS]], truth: &[[f64; N_TARGETS]]) -> Result<()> {
        if pred.len() != truth.len() {
            return Err(Error::Shape {
                context: "mse rows",
                expected: truth.len(),
                got: pred.len(),
            });
        }
        for (p, t) in pred.iter().zip(truth) {
            for c in 0..N_TARGETS {
                self.sums[c] += (p[c] - t[c]) * (p[c] - t[c]);
            }
        }
        self.count += pred.len();
        Ok(())
    }

    fn finish(&self) -> [f64; N_TARGETS] {
        let n = self.count.max(1) as f64;
        self.sums.map(|s| s / n)
    }
}

/// Mean over simulations of `|pred - truth| / |truth|`.
pub fn mean_relative_error(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape {
            context: "relative error inputs",
            expected: truth.len(),
            got: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Undefined("relative error of no samples".into()));
    }
    if let Some(i) = truth.iter().position(|&t| t == 0.0) {
        return Err(Error::Undefined(format!(
            "zero reference value for simulation #{i}"
        )));
    }
    let total: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t).abs() / t.abs())
        .sum();
    Ok(total / truth.len() as f64)
}

/// The nine evaluation metrics of one model on one split. `None` marks a
/// metric that is undefined on this split (fewer than two simulations, a
/// constant coefficient list, or a zero reference coefficient).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mse_x_velocity: f64,
    pub mse_y_velocity: f64,
    pub mse_pressure: f64,
    pub mse_surface_pressure: f64,
    pub mse_turbulent_viscosity: f64,
    pub mean_relative_drag: Option<f64>,
    pub mean_relative_lift: Option<f64>,
    pub spearman_drag: Option<f64>,
    pub spearman_lift: Option<f64>,
}

pub const METRIC_LABELS: [&str; 9] = [
    "x-velocity",
    "y-velocity",
    "pressure",
    "surface pressure",
    "turbulent viscosity",
    "mean relative drag",
    "mean relative lift",
    "Spearman's correlation for drag",
    "Spearman's correlation for lift",
];

impl EvalReport {
    /// Metrics in display order, paired with their human-readable names.
    pub fn labeled(&self) -> [(&'static str, Option<f64>); 9] {
        let v = [
            Some(self.mse_x_velocity),
            Some(self.mse_y_velocity),
            Some(self.mse_pressure),
            Some(self.mse_surface_pressure),
            Some(self.mse_turbulent_viscosity),
            self.mean_relative_drag,
            self.mean_relative_lift,
            self.spearman_drag,
            self.spearman_lift,
        ];
        std::array::from_fn(|i| (METRIC_LABELS[i], v[i]))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Force coefficients of one simulation from predicted and true pressure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCoefficients {
    pub sim: String,
    pub drag_pred: f64,
    pub drag_true: f64,
    pub lift_pred: f64,
    pub lift_true: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub coefficients: Vec<SimCoefficients>,
}

impl Evaluation {
    pub fn coefficients_csv(&self) -> String {
        let mut out = String::from("sim,drag_pred,drag_true,lift_pred,lift_true\n");
        for c in &self.coefficients {
            writeln!(
                out,
                "{},{},{},{},{}",
                c.sim, c.drag_pred, c.drag_true, c.lift_pred, c.lift_true
            )
            .expect("writing to a String cannot fail");
        }
        out
    }

    pub fn write(&self, report_json: &Path, coefficients_csv: &Path) -> Result<()> {
        fs::write(report_json, self.report.to_json() + "\n")
            .map_err(|e| Error::io(report_json, e))?;
        fs::write(coefficients_csv, self.coefficients_csv())
            .map_err(|e| Error::io(coefficients_csv, e))
    }
}

/// Scores physical-unit predictions (one row per point, per simulation).
pub fn evaluate_predictions(
    dataset: &Dataset,
    predictions: &[Vec<[f64; N_TARGETS]>],
) -> Result<Evaluation> {
    if predictions.len() != dataset.len() {
        return Err(Error::Shape {
            context: "prediction sets",
            expected: dataset.len(),
            got: predictions.len(),
        });
    }
    if dataset.is_empty() {
        return Err(Error::InvalidDataset("cannot evaluate an empty split".into()));
    }

    let mut field = MseAccumulator::default();
    let (mut surf_sse, mut surf_n) = (0.0, 0usize);
    let mut coefficients = Vec::with_capacity(dataset.len());
    for (sim, pred) in dataset.simulations.iter().zip(predictions) {
        field.add(pred, &sim.targets)?;
        let polyline = order_surface(sim)?;
        // point order, so an all-surface split reproduces the pressure MSE exactly
        for (i, (p, t)) in pred.iter().zip(&sim.targets).enumerate() {
            if sim.is_surface(i) {
                let d = p[target::PRESSURE] - t[target::PRESSURE];
                surf_sse += d * d;
                surf_n += 1;
            }
        }

        let p_pred: Vec<f64> = pred.iter().map(|r| r[target::PRESSURE]).collect();
        let p_true: Vec<f64> = sim.targets.iter().map(|r| r[target::PRESSURE]).collect();
        let fp = force_coefficients(sim, &polyline, &p_pred)?;
        let ft = force_coefficients(sim, &polyline, &p_true)?;
        coefficients.push(SimCoefficients {
            sim: sim.name.clone(),
            drag_pred: fp.drag,
            drag_true: ft.drag,
            lift_pred: fp.lift,
            lift_true: ft.lift,
        });
    }

    let column = |f: fn(&SimCoefficients) -> f64| coefficients.iter().map(f).collect::<Vec<_>>();
    let (drag_pred, drag_true) = (column(|c| c.drag_pred), column(|c| c.drag_true));
    let (lift_pred, lift_true) = (column(|c| c.lift_pred), column(|c| c.lift_true));
    let rank = |p: &[f64], t: &[f64]| {
        if p.len() < 2 {
            None
        } else {
            spearman(p, t).ok()
        }
    };

    let mse = field.finish();
    let report = EvalReport {
        mse_x_velocity: mse[target::VX],
        mse_y_velocity: mse[target::VY],
        mse_pressure: mse[target::PRESSURE],
        mse_surface_pressure: surf_sse / surf_n.max(1) as f64,
        mse_turbulent_viscosity: mse[target::NUT],
        mean_relative_drag: mean_relative_error(&drag_pred, &drag_true).ok(),
        mean_relative_lift: mean_relative_error(&lift_pred, &lift_true).ok(),
        spearman_drag: rank(&drag_pred, &drag_true),
        spearman_lift: rank(&lift_pred, &lift_true),
    };
    Ok(Evaluation {
        report,
        coefficients,
    })
}

/// Physical-unit predictions of a trained surrogate for every simulation.
pub fn predict_dataset(
    net: &PackedMlp,
    params: &Params,
    scaler: &ScalerPair,
    dataset: &Dataset,
) -> Result<Vec<Vec<[f64; N_TARGETS]>>> {
    net.exec()
        .map(dataset.len(), |s| {
            let sim = &dataset.simulations[s];
            let scaled = net.predict(params, &scaler.scale_inputs(&sim.points))?;
            scaler.unscale_targets(&scaled)
        })
        .into_iter()
        .collect()
}

pub fn evaluate(
    net: &PackedMlp,
    params: &Params,
    scaler: &ScalerPair,
    dataset: &Dataset,
) -> Result<Evaluation> {
    let predictions = predict_dataset(net, params, scaler, dataset)?;
    evaluate_predictions(dataset, &predictions)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_cases() {
        let t = [[1.0, 2.0, 3.0, 4.0], [0.0, -1.0, 5.0, 0.5]];
        assert_eq!(mse_per_channel(&t, &t).unwrap(), [0.0; 4]);
        let p = t.map(|r| [r[0] + 1.0, r[1], r[2], r[3]]);
        assert_eq!(mse_per_channel(&p, &t).unwrap(), [1.0, 0.0, 0.0, 0.0]);
        assert!(mse_per_channel(&p[..1], &t).is_err());
    }

    #[test]
    fn relative_error_cases() {
        assert_eq!(mean_relative_error(&[1.0, -2.0], &[1.0, -2.0]).unwrap(), 0.0);
        assert_eq!(mean_relative_error(&[2.0, -4.0], &[1.0, -2.0]).unwrap(), 1.0);
        assert_eq!(mean_relative_error(&[1.5, 0.5], &[1.0, 1.0]).unwrap(), 0.5);
        let err = mean_relative_error(&[1.0, 1.0], &[1.0, 0.0]).unwrap_err();
        assert!(err.to_string().contains("#1"));
    }

    #[test]
    fn report_has_nine_labeled_metrics() {
        let r = EvalReport {
            mse_x_velocity: 1.0,
            mse_y_velocity: 2.0,
            mse_pressure: 3.0,
            mse_surface_pressure: 4.0,
            mse_turbulent_viscosity: 5.0,
            mean_relative_drag: Some(6.0),
            mean_relative_lift: Some(7.0),
            spearman_drag: None,
            spearman_lift: Some(0.5),
        };
        let labels: Vec<&str> = r.labeled().iter().map(|l| l.0).collect();
        assert_eq!(labels, METRIC_LABELS);
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        let keys: Vec<&String> = json.as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), 9);
        assert!(json["spearman_drag"].is_null());
    }
}
