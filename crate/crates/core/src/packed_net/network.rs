//! Forward evaluation and backpropagation for packed MLPs.
//!
//! Batches are flat row-major buffers (`rows x in_features`). Every batch is
//! cut into fixed chunks of [`CHUNK_ROWS`] rows; chunk results are reduced in
//! chunk order, which keeps the sequential and parallel paths bit-identical.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{LayerParams, Params};
use super::spec::{plan_layers, LayerPlan, PackedSpec};
use crate::error::{Error, Result};
use crate::exec::Exec;

pub const CHUNK_ROWS: usize = 256;

/// Evaluation mode. Training draws dropout masks from the supplied RNG.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

/// Outputs of every estimator plus their arithmetic mean.
#[derive(Debug, Clone, PartialEq)]
pub struct PerEstimatorOutput {
    pub num_estimators: usize,
    pub batch: usize,
    pub out_features: usize,
    /// `num_estimators x batch x out_features`
    pub estimator_outputs: Vec<f64>,
    /// `batch x out_features`
    pub mean_output: Vec<f64>,
}

impl PerEstimatorOutput {
    pub fn estimator(&self, j: usize) -> &[f64] {
        let n = self.batch * self.out_features;
        &self.estimator_outputs[j * n..(j + 1) * n]
    }
}

/// A packed MLP topology: layer plans plus dropout setting.
#[derive(Debug, Clone)]
pub struct PackedMlp {
    plans: Vec<LayerPlan>,
    dropout: Option<f64>,
    exec: Exec,
}

impl PackedMlp {
    pub fn new(spec: &PackedSpec) -> Result<Self> {
        Self::from_plans(plan_layers(spec)?, spec.dropout())
    }

    /// Builds a network from explicit plans. The first plan's group count is
    /// the number of estimators; the input is replicated that many times.
    pub fn from_plans(plans: Vec<LayerPlan>, dropout: Option<f64>) -> Result<Self> {
        let (first, last) = match (plans.first(), plans.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(Error::InvalidSpec("no layers".into())),
        };
        for (i, p) in plans.iter().enumerate() {
            if !p.is_consistent() {
                return Err(Error::InvalidSpec(format!("layer {i} plan is inconsistent")));
            }
            if i > 0 && plans[i - 1].out_width != p.in_width {
                return Err(Error::LayerShape {
                    layer: i,
                    expected: plans[i - 1].out_width,
                    got: p.in_width,
                });
            }
        }
        if last.groups != first.groups {
            return Err(Error::InvalidSpec(format!(
                "output layer has {} groups but input layer has {}",
                last.groups, first.groups
            )));
        }
        if let Some(p) = dropout {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::InvalidSpec(format!("dropout {p} outside [0, 1)")));
            }
        }
        Ok(Self {
            plans,
            dropout: dropout.filter(|&p| p > 0.0),
            exec: Exec::default(),
        })
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    pub fn plans(&self) -> &[LayerPlan] {
        &self.plans
    }

    pub fn dropout(&self) -> Option<f64> {
        self.dropout
    }

    pub fn num_estimators(&self) -> usize {
        self.plans[0].groups
    }

    pub fn in_features(&self) -> usize {
        self.plans[0].per_group_in
    }

    pub fn out_features(&self) -> usize {
        self.plans[self.plans.len() - 1].per_group_out
    }

    fn batch_rows(&self, inputs: &[f64]) -> Result<usize> {
        let width = self.in_features();
        if !inputs.len().is_multiple_of(width) {
            return Err(Error::LayerShape {
                layer: 0,
                expected: width,
                got: inputs.len() % width,
            });
        }
        Ok(inputs.len() / width)
    }

    pub fn forward(
        &self,
        params: &Params,
        inputs: &[f64],
        mode: Mode<'_>,
    ) -> Result<PerEstimatorOutput> {
        params.check_shapes(&self.plans)?;
        let rows = self.batch_rows(inputs)?;
        let masks = self.draw_masks(rows, mode);
        let chunks = self.exec.map(rows.div_ceil(CHUNK_ROWS), |c| {
            let (lo, hi) = chunk_bounds(c, rows);
            let cache = self.forward_chunk(params, inputs, &masks, lo, hi);
            cache.acts.into_iter().last().unwrap_or_default()
        });
        let raw: Vec<f64> = chunks.concat();
        Ok(self.split_estimators(&raw, rows))
    }

    /// Ensemble-mean prediction in eval mode (`rows x out_features`).
    pub fn predict(&self, params: &Params, inputs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(params, inputs, Mode::Eval)?.mean_output)
    }

    /// Mean squared error of the ensemble mean, without gradients.
    pub fn loss(
        &self,
        params: &Params,
        inputs: &[f64],
        targets: &[f64],
        mode: Mode<'_>,
    ) -> Result<f64> {
        let out = self.forward(params, inputs, mode)?;
        if targets.len() != out.mean_output.len() {
            return Err(Error::Shape {
                context: "targets",
                expected: out.mean_output.len(),
                got: targets.len(),
            });
        }
        if out.batch == 0 {
            return Err(Error::EmptyBatch);
        }
        let sse: f64 = out
            .mean_output
            .iter()
            .zip(targets)
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        Ok(sse / targets.len() as f64)
    }

    /// Loss (mean over batch and channels of the squared ensemble-mean error)
    /// and its exact gradient with respect to every parameter.
    pub fn loss_and_grad(
        &self,
        params: &Params,
        inputs: &[f64],
        targets: &[f64],
        mode: Mode<'_>,
    ) -> Result<(f64, Params)> {
        params.check_shapes(&self.plans)?;
        let rows = self.batch_rows(inputs)?;
        if rows == 0 {
            return Err(Error::EmptyBatch);
        }
        let out_f = self.out_features();
        if targets.len() != rows * out_f {
            return Err(Error::Shape {
                context: "targets",
                expected: rows * out_f,
                got: targets.len(),
            });
        }
        let masks = self.draw_masks(rows, mode);
        let denom = (rows * out_f) as f64;
        let partials = self.exec.map(rows.div_ceil(CHUNK_ROWS), |c| {
            let (lo, hi) = chunk_bounds(c, rows);
            self.chunk_loss_and_grad(params, inputs, targets, &masks, lo, hi, denom)
        });

        let mut sse = 0.0;
        let mut grads = params.zeros_like();
        for (chunk_sse, chunk_grads) in &partials {
            sse += chunk_sse;
            grads.add_assign(chunk_grads);
        }
        Ok((sse / denom, grads))
    }

    /// Dropout scale factors (0 or 1/keep) for every hidden activation,
    /// drawn layer by layer in row-major order.
    fn draw_masks(&self, rows: usize, mode: Mode<'_>) -> Option<Vec<Vec<f64>>> {
        let (Some(p), Mode::Train(rng)) = (self.dropout, mode) else {
            return None;
        };
        let keep = 1.0 - p;
        let scale = 1.0 / keep;
        let hidden = &self.plans[..self.plans.len() - 1];
        Some(
            hidden
                .iter()
                .map(|plan| {
                    (0..rows * plan.out_width)
                        .map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 })
                        .collect()
                })
                .collect(),
        )
    }

    fn forward_chunk(
        &self,
        params: &Params,
        inputs: &[f64],
        masks: &Option<Vec<Vec<f64>>>,
        lo: usize,
        hi: usize,
    ) -> ChunkCache {
        let rows = hi - lo;
        let in_f = self.in_features();
        let m = self.num_estimators();
        let src = &inputs[lo * in_f..hi * in_f];

        let mut replicated = Vec::with_capacity(rows * m * in_f);
        for row in src.chunks_exact(in_f) {
            for _ in 0..m {
                replicated.extend_from_slice(row);
            }
        }

        let n_layers = self.plans.len();
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(replicated);
        for (l, (plan, layer)) in self.plans.iter().zip(&params.layers).enumerate() {
            let mut out = vec![0.0; rows * plan.out_width];
            grouped_affine(plan, layer, &acts[l], rows, &mut out);
            if l + 1 < n_layers {
                for v in &mut out {
                    *v = v.max(0.0);
                }
                if let Some(masks) = masks {
                    let mask = &masks[l][lo * plan.out_width..hi * plan.out_width];
                    for (v, s) in out.iter_mut().zip(mask) {
                        *v *= s;
                    }
                }
            }
            acts.push(out);
        }
        ChunkCache { acts }
    }

    #[allow(clippy::too_many_arguments)]
    fn chunk_loss_and_grad(
        &self,
        params: &Params,
        inputs: &[f64],
        targets: &[f64],
        masks: &Option<Vec<Vec<f64>>>,
        lo: usize,
        hi: usize,
        denom: f64,
    ) -> (f64, Params) {
        let rows = hi - lo;
        let m = self.num_estimators();
        let out_f = self.out_features();
        let cache = self.forward_chunk(params, inputs, masks, lo, hi);
        let raw = cache.acts.last().expect("at least one layer");
        let tgt = &targets[lo * out_f..hi * out_f];

        // d loss / d raw output; every estimator receives the mean's gradient / M
        let mut sse = 0.0;
        let mut delta = vec![0.0; rows * m * out_f];
        for r in 0..rows {
            let row = &raw[r * m * out_f..(r + 1) * m * out_f];
            for c in 0..out_f {
                let mean = ensemble_mean(row, m, out_f, c);
                let err = mean - tgt[r * out_f + c];
                sse += err * err;
                let g = 2.0 * err / denom / m as f64;
                for j in 0..m {
                    delta[r * m * out_f + j * out_f + c] = g;
                }
            }
        }

        let mut grads = params.zeros_like();
        for l in (0..self.plans.len()).rev() {
            let plan = &self.plans[l];
            let input = &cache.acts[l];
            let mut d_input = (l > 0).then(|| vec![0.0; rows * plan.in_width]);
            grouped_affine_backward(
                plan,
                &params.layers[l],
                input,
                &delta,
                rows,
                &mut grads.layers[l],
                d_input.as_deref_mut(),
            );
            if let Some(mut d) = d_input {
                // through the previous layer's dropout and ReLU
                let prev = &self.plans[l - 1];
                let mask = masks
                    .as_ref()
                    .map(|ms| &ms[l - 1][lo * prev.out_width..hi * prev.out_width]);
                for (k, (dv, &a)) in d.iter_mut().zip(input).enumerate() {
                    *dv = if a > 0.0 {
                        mask.map_or(*dv, |s| *dv * s[k])
                    } else {
                        0.0
                    };
                }
                delta = d;
            }
        }
        (sse, grads)
    }

    fn split_estimators(&self, raw: &[f64], rows: usize) -> PerEstimatorOutput {
        let m = self.num_estimators();
        let out_f = self.out_features();
        let mut estimator_outputs = vec![0.0; m * rows * out_f];
        let mut mean_output = vec![0.0; rows * out_f];
        for r in 0..rows {
            let row = &raw[r * m * out_f..(r + 1) * m * out_f];
            for j in 0..m {
                let dst = (j * rows + r) * out_f;
                estimator_outputs[dst..dst + out_f]
                    .copy_from_slice(&row[j * out_f..(j + 1) * out_f]);
            }
            for c in 0..out_f {
                mean_output[r * out_f + c] = ensemble_mean(row, m, out_f, c);
            }
        }
        PerEstimatorOutput {
            num_estimators: m,
            batch: rows,
            out_features: out_f,
            estimator_outputs,
            mean_output,
        }
    }
}

struct ChunkCache {
    /// `acts[0]` is the replicated input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
}

fn chunk_bounds(chunk: usize, rows: usize) -> (usize, usize) {
    let lo = chunk * CHUNK_ROWS;
    (lo, (lo + CHUNK_ROWS).min(rows))
}

fn ensemble_mean(row: &[f64], m: usize, out_f: usize, c: usize) -> f64 {
    let mut s = 0.0;
    for j in 0..m {
        s += row[j * out_f + c];
    }
    s / m as f64
}

/// `out = x W^T + b` with block-diagonal `W`, for `rows` samples.
pub fn grouped_affine(
    plan: &LayerPlan,
    layer: &LayerParams,
    input: &[f64],
    rows: usize,
    out: &mut [f64],
) {
    let (pgi, pgo) = (plan.per_group_in, plan.per_group_out);
    for r in 0..rows {
        let x = &input[r * plan.in_width..(r + 1) * plan.in_width];
        let y = &mut out[r * plan.out_width..(r + 1) * plan.out_width];
        for g in 0..plan.groups {
            let xg = &x[g * pgi..(g + 1) * pgi];
            for o in 0..pgo {
                let k = g * pgo + o;
                let w = &layer.weights[k * pgi..(k + 1) * pgi];
                let mut s = layer.biases[k];
                for (wi, xi) in w.iter().zip(xg) {
                    s += wi * xi;
                }
                y[k] = s;
            }
        }
    }
}

/// Accumulates weight/bias gradients of a grouped affine layer and, when
/// requested, writes the gradient with respect to its input.
pub fn grouped_affine_backward(
    plan: &LayerPlan,
    layer: &LayerParams,
    input: &[f64],
    d_out: &[f64],
    rows: usize,
    grads: &mut LayerParams,
    mut d_input: Option<&mut [f64]>,
) {
    let (pgi, pgo) = (plan.per_group_in, plan.per_group_out);
    for r in 0..rows {
        let x = &input[r * plan.in_width..(r + 1) * plan.in_width];
        let dy = &d_out[r * plan.out_width..(r + 1) * plan.out_width];
        for g in 0..plan.groups {
            let xg = &x[g * pgi..(g + 1) * pgi];
            for o in 0..pgo {
                let k = g * pgo + o;
                let d = dy[k];
                if d == 0.0 {
                    continue;
                }
                grads.biases[k] += d;
                let dw = &mut grads.weights[k * pgi..(k + 1) * pgi];
                for (dwi, xi) in dw.iter_mut().zip(xg) {
                    *dwi += d * xi;
                }
                if let Some(dx) = d_input.as_deref_mut() {
                    let w = &layer.weights[k * pgi..(k + 1) * pgi];
                    let dxg = &mut dx[r * plan.in_width + g * pgi..r * plan.in_width + (g + 1) * pgi];
                    for (dxi, wi) in dxg.iter_mut().zip(w) {
                        *dxi += d * wi;
                    }
                }
            }
        }
    }
}
