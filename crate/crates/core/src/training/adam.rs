use crate::error::{Error, Result};
use crate::packed_net::Params;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam moment estimates, shaped like the parameters they track.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Params,
    pub second_moment: Params,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(params: &Params) -> Self {
        Self {
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            step_count: 0,
        }
    }

    /// One bias-corrected Adam update. Weight decay is coupled L2
    /// (`g += weight_decay * w`) and applies to weights only, not biases.
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(
        &mut self,
        params: &mut Params,
        grads: &Params,
        learning_rate: f64,
        weight_decay: f64,
    ) -> Result<()> {
        if let Some(layer) = grads.first_non_finite() {
            return Err(Error::NonFiniteGradient { layer });
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2 = 1.0 - BETA2.powi(t);

        let update = |w: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *w -= learning_rate * m_hat / (v_hat.sqrt() + EPSILON);
        };

        for (l, layer) in params.layers.iter_mut().enumerate() {
            let g = &grads.layers[l];
            let m = &mut self.first_moment.layers[l];
            let v = &mut self.second_moment.layers[l];
            for k in 0..layer.weights.len() {
                let gk = g.weights[k] + weight_decay * layer.weights[k];
                update(&mut layer.weights[k], gk, &mut m.weights[k], &mut v.weights[k]);
            }
            for k in 0..layer.biases.len() {
                update(&mut layer.biases[k], g.biases[k], &mut m.biases[k], &mut v.biases[k]);
            }
        }
        Ok(())
    }
}

pub fn adam_step(
    params: &mut Params,
    grads: &Params,
    state: &mut AdamState,
    learning_rate: f64,
    weight_decay: f64,
) -> Result<()> {
    state.step(params, grads, learning_rate, weight_decay)
}
