use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DROPOUT: f64 = 0.2;
pub const FLOW_IN_FEATURES: usize = 7;
pub const FLOW_OUT_FEATURES: usize = 4;

/// Architecture of a Packed-Ensemble MLP: `num_estimators` sub-networks whose
/// hidden widths are scaled by `alpha` and split into `gamma` groups each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackedSpec {
    pub num_estimators: usize,
    pub alpha: usize,
    pub gamma: usize,
    #[serde(default = "default_in")]
    pub in_features: usize,
    #[serde(default = "default_out")]
    pub out_features: usize,
    pub hidden_widths: Vec<usize>,
    #[serde(default)]
    pub dropout_enabled: bool,
    #[serde(default = "default_dropout")]
    pub dropout_p: f64,
}

fn default_in() -> usize {
    FLOW_IN_FEATURES
}

fn default_out() -> usize {
    FLOW_OUT_FEATURES
}

fn default_dropout() -> f64 {
    DEFAULT_DROPOUT
}

impl PackedSpec {
    /// PE(M, alpha, gamma) on the 7 -> 4 flow schema, dropout off.
    pub fn new(num_estimators: usize, alpha: usize, gamma: usize, hidden_widths: &[usize]) -> Self {
        Self {
            num_estimators,
            alpha,
            gamma,
            in_features: FLOW_IN_FEATURES,
            out_features: FLOW_OUT_FEATURES,
            hidden_widths: hidden_widths.to_vec(),
            dropout_enabled: false,
            dropout_p: DEFAULT_DROPOUT,
        }
    }

    pub fn with_dropout(mut self, enabled: bool) -> Self {
        self.dropout_enabled = enabled;
        self
    }

    pub fn with_features(mut self, in_features: usize, out_features: usize) -> Self {
        self.in_features = in_features;
        self.out_features = out_features;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_estimators", self.num_estimators),
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("in_features", self.in_features),
            ("out_features", self.out_features),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidSpec(format!("{name} must be >= 1")));
            }
        }
        if self.hidden_widths.is_empty() {
            return Err(Error::InvalidSpec("hidden_widths must be non-empty".into()));
        }
        if let Some(i) = self.hidden_widths.iter().position(|&h| h == 0) {
            return Err(Error::InvalidSpec(format!("hidden width #{i} is zero")));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidSpec(format!(
                "dropout_p = {} outside [0, 1)",
                self.dropout_p
            )));
        }
        Ok(())
    }

    /// Dropout probability if dropout is active.
    pub fn dropout(&self) -> Option<f64> {
        (self.dropout_enabled && self.dropout_p > 0.0).then_some(self.dropout_p)
    }

    /// Short `PE(M,a,g)` label.
    pub fn label(&self) -> String {
        format!("PE({},{},{})", self.num_estimators, self.alpha, self.gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerRole {
    First,
    Hidden,
    Last,
}

/// One grouped affine layer. The weight matrix is block-diagonal with
/// `groups` blocks of shape `per_group_out x per_group_in`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub role: LayerRole,
    pub in_width: usize,
    pub out_width: usize,
    pub groups: usize,
    pub per_group_in: usize,
    pub per_group_out: usize,
}

impl LayerPlan {
    pub fn new(role: LayerRole, groups: usize, per_group_in: usize, per_group_out: usize) -> Self {
        Self {
            role,
            in_width: groups * per_group_in,
            out_width: groups * per_group_out,
            groups,
            per_group_in,
            per_group_out,
        }
    }

    pub fn weight_count(&self) -> usize {
        self.groups * self.per_group_out * self.per_group_in
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.out_width
    }

    pub(crate) fn is_consistent(&self) -> bool {
        self.groups > 0
            && self.per_group_in > 0
            && self.per_group_out > 0
            && self.in_width == self.groups * self.per_group_in
            && self.out_width == self.groups * self.per_group_out
    }
}

/// Smallest multiple of `m * gamma` that is at least `alpha * width`.
pub fn widened_width(width: usize, num_estimators: usize, alpha: usize, gamma: usize) -> usize {
    let unit = num_estimators * gamma;
    (alpha * width).div_ceil(unit).max(1) * unit
}

/// Derives the layer plans of a packed MLP.
///
/// The input is replicated once per estimator and enters a layer with
/// `M` groups; interior layers use `M * gamma` groups; the output layer has
/// `M` groups of `out_features` so every estimator emits a full prediction.
pub fn plan_layers(spec: &PackedSpec) -> Result<Vec<LayerPlan>> {
    spec.validate()?;
    let m = spec.num_estimators;
    let inner_groups = m * spec.gamma;
    let widths: Vec<usize> = spec
        .hidden_widths
        .iter()
        .map(|&h| widened_width(h, m, spec.alpha, spec.gamma))
        .collect();

    let mut plans = Vec::with_capacity(widths.len() + 1);
    plans.push(LayerPlan::new(
        LayerRole::First,
        m,
        spec.in_features,
        widths[0] / m,
    ));
    for pair in widths.windows(2) {
        plans.push(LayerPlan::new(
            LayerRole::Hidden,
            inner_groups,
            pair[0] / inner_groups,
            pair[1] / inner_groups,
        ));
    }
    let last = *widths.last().expect("hidden_widths validated non-empty");
    plans.push(LayerPlan::new(
        LayerRole::Last,
        m,
        last / m,
        spec.out_features,
    ));
    Ok(plans)
}

pub fn param_count(plans: &[LayerPlan]) -> usize {
    plans.iter().map(LayerPlan::param_count).sum()
}

/// Weights (no biases) of the interior `Hidden` layers.
pub fn hidden_weight_count(plans: &[LayerPlan]) -> usize {
    plans
        .iter()
        .filter(|p| p.role == LayerRole::Hidden)
        .map(LayerPlan::weight_count)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MODEL_15: [usize; 9] = [64, 64, 8, 64, 64, 64, 8, 64, 64];

    #[test]
    fn model_15_plans() {
        let plans = plan_layers(&PackedSpec::new(8, 4, 1, &MODEL_15)).unwrap();
        assert_eq!(plans.len(), 10);
        let first = plans[0];
        assert_eq!((first.groups, first.per_group_in, first.out_width), (8, 7, 256));
        assert_eq!(first.in_width, 56);
        // width-8 layers widen to 32
        assert_eq!(plans[2].out_width, 32);
        assert_eq!(plans[3].in_width, 32);
        let last = plans[9];
        assert_eq!(last.role, LayerRole::Last);
        assert_eq!((last.in_width, last.out_width, last.per_group_out), (256, 32, 4));
    }

    #[test]
    fn identity_configuration_is_dense() {
        let plans = plan_layers(&PackedSpec::new(1, 1, 1, &[48, 128, 48])).unwrap();
        let dims: Vec<_> = plans.iter().map(|p| (p.in_width, p.out_width, p.groups)).collect();
        assert_eq!(dims, vec![(7, 48, 1), (48, 128, 1), (128, 48, 1), (48, 4, 1)]);
    }

    #[test]
    fn widening_rounds_up_to_group_multiple() {
        assert_eq!(widened_width(10, 4, 2, 2), 24);
        // never narrower than one unit per group
        assert_eq!(widened_width(1, 8, 1, 2), 16);
        let plans = plan_layers(&PackedSpec::new(4, 2, 2, &[10])).unwrap();
        assert_eq!(plans[0].out_width, 24);
    }

    #[test]
    fn param_counts() {
        let dense = plan_layers(&PackedSpec::new(1, 1, 1, &[48])).unwrap();
        assert_eq!(param_count(&dense), 580);

        let plans = plan_layers(&PackedSpec::new(4, 2, 2, &[48, 128])).unwrap();
        assert_eq!(plans[1].param_count(), 3328);
    }

    #[test]
    fn rejects_degenerate_specs() {
        assert!(PackedSpec::new(0, 1, 1, &[8]).validate().is_err());
        assert!(PackedSpec::new(1, 1, 1, &[]).validate().is_err());
        assert!(PackedSpec::new(1, 1, 1, &[8, 0]).validate().is_err());
        let mut s = PackedSpec::new(1, 1, 1, &[8]);
        s.dropout_p = 1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn plan_invariants_hold_for_many_specs() {
        for m in 1..=5 {
            for alpha in 1..=4 {
                for gamma in 1..=3 {
                    let spec = PackedSpec::new(m, alpha, gamma, &[5, 17, 3]);
                    let plans = plan_layers(&spec).unwrap();
                    for (i, p) in plans.iter().enumerate() {
                        assert!(p.is_consistent());
                        if i > 0 {
                            assert_eq!(plans[i - 1].out_width, p.in_width);
                        }
                    }
                    assert_eq!(plans[0].groups, m);
                    assert_eq!(plans[0].per_group_in, 7);
                    assert_eq!(plans.last().unwrap().per_group_out, 4);
                    assert!(plans[1..plans.len() - 1].iter().all(|p| p.groups == m * gamma));
                }
            }
        }
    }
}
