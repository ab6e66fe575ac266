//! Command-line front end. Every subcommand reads one strict JSON config and
//! writes only under `--out`; all randomness derives from `--seed`.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 1 runtime failure.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bench::{run_benchmark, BenchModel};
use crate::data::{
    generate_cylinder_flow, load_dataset, subsample, write_dataset, CylinderFlowConfig, ScalerPair,
    Split,
};
use crate::error::{Error, Result};
use crate::metrics::evaluate;
use crate::packed_net::{load_model, save_model, PackedMlp, PackedSpec};
use crate::training::{cross_validate, train, GridPoint, TrainConfig};

pub const MODEL_FILE: &str = "model.pem";
pub const SCALER_FILE: &str = "scaler.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const CV_FILE: &str = "cv_results.csv";
pub const CV_FOLDS_FILE: &str = "cv_folds.csv";

#[derive(Debug, Parser)]
#[command(name = "packed-surrogate", version, about = "Packed-ensemble flow surrogates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Seed for every random choice of the run.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for independent trainings.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic cylinder-flow datasets.
    Gen(Common),
    /// Train one model.
    Train(Common),
    /// Cross-validate a hyperparameter grid.
    Cv(Common),
    /// Evaluate a saved model on a dataset.
    Eval(Common),
    /// Time and evaluate a list of models.
    Bench(Common),
}

fn default_surface_points() -> usize {
    CylinderFlowConfig::default().surface_points
}
fn default_field_points() -> usize {
    CylinderFlowConfig::default().field_points
}
fn default_radius_range() -> [f64; 2] {
    CylinderFlowConfig::default().radius_range
}
fn default_speed_range() -> [f64; 2] {
    CylinderFlowConfig::default().inlet_speed_range
}
fn default_circulation_range() -> [f64; 2] {
    CylinderFlowConfig::default().circulation_range
}
fn default_folds() -> usize {
    4
}
fn default_fraction() -> f64 {
    1.0
}

/// `gen`: shared flow ranges plus the splits to write, each into
/// `<out>/<name>/`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    #[serde(default = "default_surface_points")]
    pub surface_points: usize,
    #[serde(default = "default_field_points")]
    pub field_points: usize,
    #[serde(default = "default_radius_range")]
    pub radius_range: [f64; 2],
    #[serde(default = "default_speed_range")]
    pub inlet_speed_range: [f64; 2],
    #[serde(default = "default_circulation_range")]
    pub circulation_range: [f64; 2],
    pub splits: Vec<GenSplit>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSplit {
    pub name: String,
    pub split: Split,
    pub num_sims: usize,
}

/// `train`: architecture, optimizer settings and dataset directories.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRunConfig {
    pub model: PackedSpec,
    #[serde(default)]
    pub train: TrainConfig,
    pub train_data: PathBuf,
    #[serde(default)]
    pub val_data: Option<PathBuf>,
}

/// `cv`: base architecture whose alpha, gamma and dropout the grid overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvRunConfig {
    pub model: PackedSpec,
    #[serde(default)]
    pub train: TrainConfig,
    pub data: PathBuf,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_fraction")]
    pub subsample_fraction: f64,
    pub grid: Vec<GridPoint>,
}

/// `eval`: a saved model, its scaler and one dataset directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRunConfig {
    pub model: PathBuf,
    pub scaler: PathBuf,
    pub data: PathBuf,
}

/// `bench`: models trained on `train_data` and scored on each `eval_data`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchRunConfig {
    pub models: Vec<BenchModel>,
    #[serde(default)]
    pub train: TrainConfig,
    pub train_data: PathBuf,
    pub eval_data: Vec<PathBuf>,
    #[serde(default)]
    pub parallel_rows: bool,
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Gen(c) => run_gen(&c),
        Command::Train(c) => run_train(&c),
        Command::Cv(c) => run_cv(&c),
        Command::Eval(c) => run_eval(&c),
        Command::Bench(c) => run_bench(&c),
    }
}

fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn train_config(mut cfg: TrainConfig, seed: u64) -> Result<TrainConfig> {
    cfg.seed = seed;
    cfg.validate()?;
    Ok(cfg)
}

fn run_gen(c: &Common) -> Result<()> {
    let cfg: GenConfig = read_config(&c.config)?;
    if cfg.splits.is_empty() {
        return Err(Error::InvalidConfig("no splits to generate".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for s in &cfg.splits {
        let valid_name = !s.name.is_empty()
            && s
                .name
                .chars()
                .all(|ch| ch.is_ascii_alphanumeric() || ch == '_' || ch == '-');
        if !valid_name || !seen.insert(&s.name) {
            return Err(Error::InvalidConfig(format!(
                "split name `{}` must be unique and use only [A-Za-z0-9_-]",
                s.name
            )));
        }
    }
    let flows: Vec<CylinderFlowConfig> = {
        let mut seeds = ChaCha8Rng::seed_from_u64(c.seed);
        cfg.splits
            .iter()
            .map(|s| CylinderFlowConfig {
                num_sims: s.num_sims,
                surface_points: cfg.surface_points,
                field_points: cfg.field_points,
                radius_range: cfg.radius_range,
                inlet_speed_range: cfg.inlet_speed_range,
                circulation_range: cfg.circulation_range,
                seed: seeds.next_u64(),
                ood: s.split == Split::TestOod,
            })
            .collect()
    };
    for f in &flows {
        f.validate()?;
    }
    create_out(&c.out)?;
    for (s, flow) in cfg.splits.iter().zip(&flows) {
        let mut ds = generate_cylinder_flow(flow)?;
        ds.split = s.split;
        write_dataset(&c.out.join(&s.name), &ds)?;
        println!("{}: {} simulations ({})", s.name, ds.len(), s.split);
    }
    Ok(())
}

fn run_train(c: &Common) -> Result<()> {
    let cfg: TrainRunConfig = read_config(&c.config)?;
    cfg.model.validate()?;
    let tcfg = train_config(cfg.train, c.seed)?;
    let train_ds = load_dataset(&cfg.train_data)?;
    let val_ds = cfg.val_data.as_deref().map(load_dataset).transpose()?;
    let scaler = ScalerPair::fit(&train_ds)?;
    let (params, history) = train(&cfg.model, &train_ds, val_ds.as_ref(), &scaler, &tcfg)?;

    create_out(&c.out)?;
    save_model(&c.out.join(MODEL_FILE), &cfg.model, &params)?;
    scaler.save(&c.out.join(SCALER_FILE))?;
    history.write_csv(&c.out.join(HISTORY_FILE))?;
    if let Some(loss) = history.final_train_loss() {
        println!(
            "{}: {} epochs, final train loss {loss}",
            cfg.model.label(),
            history.epochs.len()
        );
    }
    Ok(())
}

fn run_cv(c: &Common) -> Result<()> {
    let cfg: CvRunConfig = read_config(&c.config)?;
    cfg.model.validate()?;
    let tcfg = train_config(cfg.train, c.seed)?;
    for p in &cfg.grid {
        let mut spec = cfg.model.clone();
        spec.alpha = p.alpha;
        spec.gamma = p.gamma;
        spec.dropout_enabled = p.dropout;
        spec.validate()?;
        train_config(
            TrainConfig {
                learning_rate: p.learning_rate,
                ..tcfg.clone()
            },
            c.seed,
        )?;
    }
    if !(cfg.subsample_fraction > 0.0 && cfg.subsample_fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "subsample_fraction {} outside (0, 1]",
            cfg.subsample_fraction
        )));
    }
    let full = load_dataset(&cfg.data)?;
    let data = subsample(&full, cfg.subsample_fraction, c.seed)?;
    let result = cross_validate(&data, &cfg.grid, &cfg.model, cfg.folds, &tcfg, c.jobs as usize)?;

    create_out(&c.out)?;
    result.write(&c.out.join(CV_FILE), &c.out.join(CV_FOLDS_FILE))?;
    print!("{}", result.to_csv());
    Ok(())
}

fn run_eval(c: &Common) -> Result<()> {
    let cfg: EvalRunConfig = read_config(&c.config)?;
    let (spec, params) = load_model(&cfg.model)?;
    let scaler = ScalerPair::load(&cfg.scaler)?;
    let ds = load_dataset(&cfg.data)?;
    let net = PackedMlp::new(&spec)?;
    let evaluation = evaluate(&net, &params, &scaler, &ds)?;

    create_out(&c.out)?;
    evaluation.write(
        &c.out.join(format!("eval_{}.json", ds.split)),
        &c.out.join(format!("coefficients_{}.csv", ds.split)),
    )?;
    let mut stdout = std::io::stdout().lock();
    for (label, value) in evaluation.report.labeled() {
        let shown = value.map_or("undefined".to_string(), |v| v.to_string());
        let _ = writeln!(stdout, "{label}: {shown}");
    }
    Ok(())
}

fn run_bench(c: &Common) -> Result<()> {
    let cfg: BenchRunConfig = read_config(&c.config)?;
    let tcfg = train_config(cfg.train, c.seed)?;
    if tcfg.early_stop_enabled {
        return Err(Error::InvalidConfig(
            "bench needs a fixed epoch count; disable early stopping".into(),
        ));
    }
    for m in &cfg.models {
        m.spec().validate()?;
        train_config(
            TrainConfig {
                learning_rate: m.learning_rate,
                weight_decay: m.weight_decay,
                ..tcfg.clone()
            },
            c.seed,
        )?;
    }
    let train_ds = load_dataset(&cfg.train_data)?;
    let evals = cfg
        .eval_data
        .iter()
        .map(|p| load_dataset(p))
        .collect::<Result<Vec<_>>>()?;
    let eval_refs: Vec<_> = evals.iter().collect();
    let run = run_benchmark(&cfg.models, &tcfg, &train_ds, &eval_refs, cfg.parallel_rows)?;

    create_out(&c.out)?;
    run.write_all(&c.out)?;
    for report in run.reports() {
        print!("{}", report.to_text());
    }
    Ok(())
}
