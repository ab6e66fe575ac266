//! Reference implementations shared by the integration tests. Nothing here
//! calls into the packed layer kernels.
#![allow(dead_code)]

use packed_surrogate::data::{generate_cylinder_flow, CylinderFlowConfig, Dataset};
use packed_surrogate::packed_net::{LayerPlan, Mode, PackedMlp, Params};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense `out_width x in_width` matrix of a grouped layer: block `g` occupies
/// rows `g*pgo..` and columns `g*pgi..`, zeros elsewhere.
pub fn materialize(plan: &LayerPlan, weights: &[f64]) -> Vec<Vec<f64>> {
    let mut w = vec![vec![0.0; plan.in_width]; plan.out_width];
    let mut k = 0;
    for g in 0..plan.groups {
        for o in 0..plan.per_group_out {
            for i in 0..plan.per_group_in {
                w[g * plan.per_group_out + o][g * plan.per_group_in + i] = weights[k];
                k += 1;
            }
        }
    }
    w
}

/// A plain dense MLP: ReLU between layers, none after the last.
#[derive(Debug, Clone)]
pub struct DenseMlp {
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
}

impl DenseMlp {
    pub fn from_packed(plans: &[LayerPlan], params: &Params) -> Self {
        Self {
            weights: plans
                .iter()
                .zip(&params.layers)
                .map(|(p, l)| materialize(p, &l.weights))
                .collect(),
            biases: params.layers.iter().map(|l| l.biases.clone()).collect(),
        }
    }

    /// Activations of every layer, input first.
    pub fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        let n = self.weights.len();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let prev = acts.last().unwrap();
            let mut y: Vec<f64> = w
                .iter()
                .zip(b)
                .map(|(row, bias)| bias + row.iter().zip(prev).map(|(a, c)| a * c).sum::<f64>())
                .collect();
            if l + 1 < n {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(y);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.activations(x).pop().unwrap()
    }

    /// `sum_rows sum_c (y - t)^2 / (rows * c)` and its gradient, by textbook
    /// backpropagation with no ensemble averaging.
    pub fn loss_and_grad(&self, xs: &[Vec<f64>], ts: &[Vec<f64>]) -> (f64, DenseMlp) {
        let mut gw: Vec<Vec<Vec<f64>>> = self
            .weights
            .iter()
            .map(|w| vec![vec![0.0; w[0].len()]; w.len()])
            .collect();
        let mut gb: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        let count = (xs.len() * ts[0].len()) as f64;
        let mut loss = 0.0;
        for (x, t) in xs.iter().zip(ts) {
            let acts = self.activations(x);
            let y = acts.last().unwrap();
            let mut delta: Vec<f64> = y
                .iter()
                .zip(t)
                .map(|(a, b)| {
                    loss += (a - b) * (a - b);
                    2.0 * (a - b) / count
                })
                .collect();
            for l in (0..self.weights.len()).rev() {
                let input = &acts[l];
                for (o, d) in delta.iter().enumerate() {
                    gb[l][o] += d;
                    for (i, a) in input.iter().enumerate() {
                        gw[l][o][i] += d * a;
                    }
                }
                if l == 0 {
                    break;
                }
                delta = (0..input.len())
                    .map(|i| {
                        if input[i] > 0.0 {
                            delta
                                .iter()
                                .enumerate()
                                .map(|(o, d)| d * self.weights[l][o][i])
                                .sum()
                        } else {
                            0.0
                        }
                    })
                    .collect();
            }
        }
        (
            loss / count,
            DenseMlp {
                weights: gw,
                biases: gb,
            },
        )
    }
}

/// Ensemble-mean prediction of a packed network evaluated densely: the input
/// is repeated once per estimator, the last layer's output is cut into
/// `num_estimators` equal blocks and averaged.
pub fn dense_ensemble_predict(
    plans: &[LayerPlan],
    params: &Params,
    x: &[f64],
) -> Vec<f64> {
    let m = plans[0].groups;
    let dense = DenseMlp::from_packed(plans, params);
    let repeated: Vec<f64> = (0..m).flat_map(|_| x.iter().copied()).collect();
    let y = dense.forward(&repeated);
    let c = y.len() / m;
    (0..c)
        .map(|k| (0..m).map(|j| y[j * c + k]).sum::<f64>() / m as f64)
        .collect()
}

pub fn random_params(plans: &[LayerPlan], rng: &mut ChaCha8Rng, scale: f64) -> Params {
    let mut p = Params::zeros(plans);
    for l in &mut p.layers {
        for v in l.weights.iter_mut().chain(l.biases.iter_mut()) {
            *v = rng.random_range(-scale..scale);
        }
    }
    p
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// `|a - b| <= tol * max(1, |b|)`
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

/// Worst relative error of the analytic gradient against central differences
/// of the loss, over every parameter. `seed` fixes the dropout mask of each
/// evaluation; gradients below `floor` in magnitude are compared absolutely.
pub fn finite_difference_check(
    net: &PackedMlp,
    params: &Params,
    inputs: &[f64],
    targets: &[f64],
    seed: Option<u64>,
    step: f64,
    floor: f64,
) -> (f64, usize) {
    let mode_rng = |s: Option<u64>| s.map(ChaCha8Rng::seed_from_u64);
    let mut rng = mode_rng(seed);
    let mode = match rng.as_mut() {
        Some(r) => Mode::Train(r),
        None => Mode::Eval,
    };
    let (_, grad) = net.loss_and_grad(params, inputs, targets, mode).unwrap();
    let analytic: Vec<f64> = grad.values().collect();

    let mut work = params.clone();
    let loss_at = |k: usize, v: f64, work: &mut Params| {
        *work.value_mut(k).unwrap() = v;
        let mut rng = mode_rng(seed);
        let mode = match rng.as_mut() {
            Some(r) => Mode::Train(r),
            None => Mode::Eval,
        };
        net.loss(work, inputs, targets, mode).unwrap()
    };
    let mut worst = 0.0f64;
    let mut checked = 0;
    let originals: Vec<f64> = params.values().collect();
    for (k, &orig) in originals.iter().enumerate() {
        let plus = loss_at(k, orig + step, &mut work);
        let minus = loss_at(k, orig - step, &mut work);
        *work.value_mut(k).unwrap() = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        worst = worst.max(rel);
        checked += 1;
    }
    (worst, checked)
}

/// Small cylinder-flow training set used by the learning and timing checks.
pub fn small_flow_dataset(num_sims: usize, surface: usize, field: usize, seed: u64) -> Dataset {
    generate_cylinder_flow(&CylinderFlowConfig {
        num_sims,
        surface_points: surface,
        field_points: field,
        seed,
        ..CylinderFlowConfig::default()
    })
    .unwrap()
}
