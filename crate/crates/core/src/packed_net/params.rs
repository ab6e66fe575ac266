use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::LayerPlan;
use crate::error::{Error, Result};

/// Weights and biases of one grouped layer.
///
/// `weights` is laid out `[group][out][in]`: the entry coupling input `i` to
/// output `o` of group `g` sits at `(g * per_group_out + o) * per_group_in + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Parameters of a whole packed network; also used for gradients and Adam
/// moments since they share the shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub layers: Vec<LayerParams>,
}

impl Params {
    pub fn zeros(plans: &[LayerPlan]) -> Self {
        Self {
            layers: plans
                .iter()
                .map(|p| LayerParams {
                    weights: vec![0.0; p.weight_count()],
                    biases: vec![0.0; p.out_width],
                })
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn check_shapes(&self, plans: &[LayerPlan]) -> Result<()> {
        if self.layers.len() != plans.len() {
            return Err(Error::Shape {
                context: "layer count",
                expected: plans.len(),
                got: self.layers.len(),
            });
        }
        for (i, (l, p)) in self.layers.iter().zip(plans).enumerate() {
            if l.weights.len() != p.weight_count() {
                return Err(Error::LayerShape {
                    layer: i,
                    expected: p.weight_count(),
                    got: l.weights.len(),
                });
            }
            if l.biases.len() != p.out_width {
                return Err(Error::LayerShape {
                    layer: i,
                    expected: p.out_width,
                    got: l.biases.len(),
                });
            }
        }
        Ok(())
    }

    /// Index of the first layer holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.layers.iter().position(|l| {
            l.weights.iter().chain(&l.biases).any(|v| !v.is_finite())
        })
    }

    /// `self += other`, element by element in storage order.
    pub fn add_assign(&mut self, other: &Params) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += y;
            }
            for (x, y) in a.biases.iter_mut().zip(&b.biases) {
                *x += y;
            }
        }
    }

    /// All values in storage order (layer by layer, weights then biases).
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
    }

    /// Mutable access to the `k`-th value in storage order.
    pub fn value_mut(&mut self, mut k: usize) -> Option<&mut f64> {
        for l in &mut self.layers {
            if k < l.weights.len() {
                return l.weights.get_mut(k);
            }
            k -= l.weights.len();
            if k < l.biases.len() {
                return l.biases.get_mut(k);
            }
            k -= l.biases.len();
        }
        None
    }
}

/// He-uniform weights with bound `sqrt(6 / per_group_in)`, zero biases.
pub fn init_params(plans: &[LayerPlan], seed: u64) -> Params {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Params::zeros(plans);
    for (layer, plan) in params.layers.iter_mut().zip(plans) {
        let bound = (6.0 / plan.per_group_in as f64).sqrt();
        for w in &mut layer.weights {
            *w = rng.random_range(-bound..=bound);
        }
    }
    params
}
