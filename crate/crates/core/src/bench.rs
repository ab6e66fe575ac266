//! Training-cost comparison of packed ensembles: parameter counts, wall-clock
//! training time and evaluation metrics per model, one report per split.
//!
//! Runs are recorded in a raw [`BenchRun`] log; every report is a pure view of
//! that log, so reports regenerated from a saved log are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ScalerPair, Split};
use crate::error::{Error, Result};
use crate::exec::{with_threads, Exec};
use crate::metrics::{evaluate, EvalReport};
use crate::packed_net::{param_count, plan_layers, PackedMlp, PackedSpec, Params};
use crate::training::{train_pooled, PooledData, TrainConfig, TrainHistory};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineInfo {
    pub cpu: String,
    pub threads_used: usize,
    pub available_threads: usize,
}

impl MachineInfo {
    pub fn detect(threads_used: usize) -> Self {
        let cpu = fs::read_to_string("/proc/cpuinfo")
            .ok()
            .and_then(|s| {
                s.lines()
                    .find(|l| l.starts_with("model name"))
                    .and_then(|l| l.split(':').nth(1))
                    .map(|v| v.trim().to_string())
            })
            .unwrap_or_else(|| std::env::consts::ARCH.to_string());
        Self {
            cpu,
            threads_used,
            available_threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TimedRun {
    pub train_seconds: f64,
    pub params: Params,
    pub history: TrainHistory,
    pub machine: MachineInfo,
}

/// Times one single-threaded training run on already-scaled data. Early
/// stopping must be off so compared runs execute the same epochs.
pub fn time_training_pooled(
    spec: &PackedSpec,
    cfg: &TrainConfig,
    data: &PooledData,
) -> Result<TimedRun> {
    if cfg.early_stop_enabled {
        return Err(Error::InvalidConfig(
            "timed runs need a fixed epoch count; disable early stopping".into(),
        ));
    }
    let cfg = TrainConfig {
        exec: Exec::Sequential,
        ..cfg.clone()
    };
    with_threads(1, || {
        let start = Instant::now();
        let (params, history) = train_pooled(spec, data, None, &cfg)?;
        let train_seconds = start.elapsed().as_secs_f64();
        Ok(TimedRun {
            train_seconds,
            params,
            history,
            machine: MachineInfo::detect(1),
        })
    })
}

/// Fits the scaler and pools the data outside the timed region, then times
/// the training call.
pub fn time_training(spec: &PackedSpec, cfg: &TrainConfig, dataset: &Dataset) -> Result<TimedRun> {
    let scaler = ScalerPair::fit(dataset)?;
    let pooled = PooledData::new(dataset, &scaler);
    time_training_pooled(spec, cfg, &pooled)
}

/// One benchmarked model configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchModel {
    #[serde(default)]
    pub name: Option<String>,
    pub layers: Vec<usize>,
    pub num_estimators: usize,
    pub alpha: usize,
    pub gamma: usize,
    #[serde(default)]
    pub dropout: bool,
    pub learning_rate: f64,
    #[serde(default)]
    pub weight_decay: f64,
}

impl BenchModel {
    pub fn spec(&self) -> PackedSpec {
        PackedSpec::new(self.num_estimators, self.alpha, self.gamma, &self.layers)
            .with_dropout(self.dropout)
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.spec().label())
    }

    fn layers_str(&self) -> String {
        let inner: Vec<String> = self.layers.iter().map(|w| w.to_string()).collect();
        format!("({})", inner.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEval {
    pub split: Split,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: BenchModel,
    pub param_count: usize,
    pub train_seconds: Option<f64>,
    pub history: TrainHistory,
    pub evals: Vec<SplitEval>,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn final_train_loss(&self) -> Option<f64> {
        self.history.final_train_loss()
    }
}

/// Raw log of a benchmark session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRun {
    pub machine: MachineInfo,
    /// False when rows trained concurrently; timings are then not comparable.
    pub timings_comparable: bool,
    pub splits: Vec<Split>,
    pub rows: Vec<RunRecord>,
}

/// Wall-clock ratio `baseline / candidate`.
pub fn speedup(baseline: &RunRecord, candidate: &RunRecord) -> Option<f64> {
    Some(baseline.train_seconds? / candidate.train_seconds?)
}

fn run_row(
    model: &BenchModel,
    cfg: &TrainConfig,
    pooled: &PooledData,
    scaler: &ScalerPair,
    evals: &[&Dataset],
) -> RunRecord {
    let spec = model.spec();
    let param_count = plan_layers(&spec).map(|p| param_count(&p)).unwrap_or(0);
    let mut record = RunRecord {
        model: model.clone(),
        param_count,
        train_seconds: None,
        history: TrainHistory::default(),
        evals: Vec::new(),
        error: None,
    };
    let cfg = TrainConfig {
        learning_rate: model.learning_rate,
        weight_decay: model.weight_decay,
        ..cfg.clone()
    };
    let timed = match time_training_pooled(&spec, &cfg, pooled) {
        Ok(t) => t,
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };
    record.train_seconds = Some(timed.train_seconds);
    record.history = timed.history;
    let net = match PackedMlp::new(&spec) {
        Ok(n) => n.with_exec(Exec::Sequential),
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };
    for ds in evals {
        let (report, error) = match evaluate(&net, &timed.params, scaler, ds) {
            Ok(ev) => (Some(ev.report), None),
            Err(e) => (None, Some(e.to_string())),
        };
        record.evals.push(SplitEval {
            split: ds.split,
            report,
            error,
        });
    }
    record
}

/// Trains each model once on `train` and evaluates it on every split in
/// `evals`. Failing rows are recorded and the remaining rows still run.
pub fn run_benchmark(
    models: &[BenchModel],
    cfg: &TrainConfig,
    train: &Dataset,
    evals: &[&Dataset],
    parallel_rows: bool,
) -> Result<BenchRun> {
    if models.is_empty() {
        return Err(Error::InvalidConfig("no models to benchmark".into()));
    }
    let scaler = ScalerPair::fit(train)?;
    let pooled = PooledData::new(train, &scaler);
    let run = |i: usize| run_row(&models[i], cfg, &pooled, &scaler, evals);
    let rows = if parallel_rows {
        Exec::Parallel.map(models.len(), run)
    } else {
        Exec::Sequential.map(models.len(), run)
    };
    let threads = if parallel_rows && Exec::parallel_available() {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        1
    };
    Ok(BenchRun {
        machine: MachineInfo::detect(threads),
        timings_comparable: !parallel_rows,
        splits: evals.iter().map(|d| d.split).collect(),
        rows,
    })
}

/// Table view of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub split: Split,
    pub timings_comparable: bool,
    pub machine: MachineInfo,
    pub rows: Vec<BenchReportRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReportRow {
    pub model: BenchModel,
    pub param_count: usize,
    pub train_seconds: Option<f64>,
    pub final_train_loss: Option<f64>,
    pub eval: Option<EvalReport>,
    pub error: Option<String>,
}

pub const BENCH_CSV_HEADER: [&str; 21] = [
    "model",
    "layers",
    "M",
    "alpha",
    "gamma",
    "dropout",
    "lr",
    "weight_decay",
    "param_count",
    "train_seconds",
    "final_train_loss",
    "mse_x_velocity",
    "mse_y_velocity",
    "mse_pressure",
    "mse_surface_pressure",
    "mse_turbulent_viscosity",
    "mean_relative_drag",
    "mean_relative_lift",
    "spearman_drag",
    "spearman_lift",
    "error",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl BenchRun {
    pub fn report(&self, split: Split) -> BenchReport {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let eval = r.evals.iter().find(|e| e.split == split);
                BenchReportRow {
                    model: r.model.clone(),
                    param_count: r.param_count,
                    train_seconds: r.train_seconds,
                    final_train_loss: r.final_train_loss(),
                    eval: eval.and_then(|e| e.report.clone()),
                    error: r.error.clone().or_else(|| eval.and_then(|e| e.error.clone())),
                }
            })
            .collect();
        BenchReport {
            split,
            timings_comparable: self.timings_comparable,
            machine: self.machine.clone(),
            rows,
        }
    }

    pub fn reports(&self) -> Vec<BenchReport> {
        self.splits.iter().map(|&s| self.report(s)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    /// Writes the raw log, per-row epoch histories and per-split reports
    /// (`bench_<split>.csv` / `.txt`) under `dir`.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        let logs = dir.join("logs");
        fs::create_dir_all(&logs).map_err(|e| Error::io(&logs, e))?;
        self.save(&dir.join("bench_raw.json"))?;
        for (i, r) in self.rows.iter().enumerate() {
            r.history
                .write_csv(&logs.join(format!("row{i:02}_history.csv")))?;
        }
        for report in self.reports() {
            let csv_path = dir.join(format!("bench_{}.csv", report.split));
            fs::write(&csv_path, report.to_csv()?).map_err(|e| Error::io(&csv_path, e))?;
            let txt_path = dir.join(format!("bench_{}.txt", report.split));
            fs::write(&txt_path, report.to_text()).map_err(|e| Error::io(&txt_path, e))?;
        }
        Ok(())
    }
}

impl BenchReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(BENCH_CSV_HEADER)?;
        for r in &self.rows {
            let m = &r.model;
            let e = r.eval.as_ref();
            let metric = |f: fn(&EvalReport) -> Option<f64>| opt(e.and_then(f));
            w.write_record([
                m.label(),
                m.layers_str(),
                m.num_estimators.to_string(),
                m.alpha.to_string(),
                m.gamma.to_string(),
                m.dropout.to_string(),
                m.learning_rate.to_string(),
                m.weight_decay.to_string(),
                r.param_count.to_string(),
                opt(r.train_seconds),
                opt(r.final_train_loss),
                metric(|e| Some(e.mse_x_velocity)),
                metric(|e| Some(e.mse_y_velocity)),
                metric(|e| Some(e.mse_pressure)),
                metric(|e| Some(e.mse_surface_pressure)),
                metric(|e| Some(e.mse_turbulent_viscosity)),
                metric(|e| e.mean_relative_drag),
                metric(|e| e.mean_relative_lift),
                metric(|e| e.spearman_drag),
                metric(|e| e.spearman_lift),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Aligned plain-text table with the hyperparameters and the four
    /// physics metrics.
    pub fn to_text(&self) -> String {
        let header = [
            "model",
            "layers",
            "M",
            "alpha",
            "gamma",
            "dropout",
            "lr",
            "weight decay",
            "params",
            "train [s]",
            "mean relative drag",
            "mean relative lift",
            "Spearman's correlation for drag",
            "Spearman's correlation for lift",
        ];
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        let mut table: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for r in &self.rows {
            let m = &r.model;
            let e = r.eval.as_ref();
            table.push(vec![
                m.label(),
                m.layers_str(),
                m.num_estimators.to_string(),
                m.alpha.to_string(),
                m.gamma.to_string(),
                m.dropout.to_string(),
                format!("{:e}", m.learning_rate),
                if m.weight_decay == 0.0 {
                    "0".to_string()
                } else {
                    format!("{:e}", m.weight_decay)
                },
                r.param_count.to_string(),
                r.train_seconds.map_or("-".to_string(), |s| format!("{s:.3}")),
                fmt(e.and_then(|e| e.mean_relative_drag)),
                fmt(e.and_then(|e| e.mean_relative_lift)),
                fmt(e.and_then(|e| e.spearman_drag)),
                fmt(e.and_then(|e| e.spearman_lift)),
            ]);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|c| table.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
            .collect();

        let mut out = format!("split: {}\n", self.split);
        for row in &table {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(cell, w)| format!("{cell:<w$}"))
                .collect();
            out.push_str(cells.join(" | ").trim_end());
            out.push('\n');
        }
        for r in self.rows.iter().filter(|r| r.error.is_some()) {
            writeln!(out, "error [{}]: {}", r.model.label(), r.error.as_deref().unwrap_or(""))
                .expect("writing to a String cannot fail");
        }
        writeln!(
            out,
            "machine: {} ({} of {} threads); timings {}",
            self.machine.cpu,
            self.machine.threads_used,
            self.machine.available_threads,
            if self.timings_comparable {
                "comparable"
            } else {
                "NOT comparable (rows trained concurrently)"
            }
        )
        .expect("writing to a String cannot fail");
        out
    }
}
