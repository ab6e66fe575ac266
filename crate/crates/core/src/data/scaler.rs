use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::simulation::{Dataset, N_INPUTS, N_TARGETS};
use crate::error::{Error, Result};

/// Std entries below this are treated as constant channels and set to 1.
pub const STD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channels {
    Inputs,
    Targets,
}

impl Channels {
    pub fn width(self) -> usize {
        match self {
            Channels::Inputs => N_INPUTS,
            Channels::Targets => N_TARGETS,
        }
    }
}

/// Per-channel standardizers for model inputs and targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalerPair {
    pub input_mean: [f64; N_INPUTS],
    pub input_std: [f64; N_INPUTS],
    pub target_mean: [f64; N_TARGETS],
    pub target_std: [f64; N_TARGETS],
}

fn fit_channels<'a, const C: usize>(
    rows: impl Iterator<Item = &'a [f64; C]> + Clone,
) -> ([f64; C], [f64; C]) {
    let mut n = 0usize;
    let mut mean = [0.0; C];
    for r in rows.clone() {
        n += 1;
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    let count = n.max(1) as f64;
    for m in &mut mean {
        *m /= count;
    }
    let mut var = [0.0; C];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var.map(|s| {
        let sd = (s / count).sqrt();
        if sd < STD_FLOOR {
            1.0
        } else {
            sd
        }
    });
    (mean, std)
}

impl ScalerPair {
    /// Population mean/std over the pooled points of every training simulation.
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.total_points() == 0 {
            return Err(Error::InvalidDataset("cannot fit a scaler on no points".into()));
        }
        let (input_mean, input_std) = fit_channels(train.pooled_points());
        let (target_mean, target_std) = fit_channels(train.pooled_targets());
        Ok(Self {
            input_mean,
            input_std,
            target_mean,
            target_std,
        })
    }

    fn stats(&self, which: Channels) -> (&[f64], &[f64]) {
        match which {
            Channels::Inputs => (&self.input_mean, &self.input_std),
            Channels::Targets => (&self.target_mean, &self.target_std),
        }
    }

    /// Transforms a flat row-major buffer whose rows are `width` wide.
    pub fn apply(
        &self,
        data: &[f64],
        width: usize,
        direction: Direction,
        which: Channels,
    ) -> Result<Vec<f64>> {
        if width != which.width() {
            return Err(Error::Shape {
                context: "scaler channels",
                expected: which.width(),
                got: width,
            });
        }
        if !data.len().is_multiple_of(width) {
            return Err(Error::Shape {
                context: "scaler row length",
                expected: width,
                got: data.len() % width,
            });
        }
        let (mean, std) = self.stats(which);
        let mut out = data.to_vec();
        for row in out.chunks_exact_mut(width) {
            for ((v, m), s) in row.iter_mut().zip(mean).zip(std) {
                *v = match direction {
                    Direction::Forward => (*v - m) / s,
                    Direction::Inverse => *v * s + m,
                };
            }
        }
        Ok(out)
    }

    pub fn scale_inputs(&self, points: &[[f64; N_INPUTS]]) -> Vec<f64> {
        self.apply(points.as_flattened(), N_INPUTS, Direction::Forward, Channels::Inputs)
            .expect("fixed-width rows")
    }

    pub fn scale_targets(&self, targets: &[[f64; N_TARGETS]]) -> Vec<f64> {
        self.apply(targets.as_flattened(), N_TARGETS, Direction::Forward, Channels::Targets)
            .expect("fixed-width rows")
    }

    /// Maps scaled model output back to physical units.
    pub fn unscale_targets(&self, scaled: &[f64]) -> Result<Vec<[f64; N_TARGETS]>> {
        let flat = self.apply(scaled, N_TARGETS, Direction::Inverse, Channels::Targets)?;
        Ok(flat
            .chunks_exact(N_TARGETS)
            .map(|c| c.try_into().expect("chunk width"))
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::simulation::{Simulation, Split};

    fn sim(name: &str, xs: &[f64]) -> Simulation {
        Simulation::new(
            name,
            xs.iter().map(|&x| [x, 3.0, 1.0, 0.0, 1.0, 0.0, 0.0]).collect(),
            xs.iter().map(|&x| [2.0 * x, 0.0, x * x, 1.0]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn two_point_channel() {
        let ds = Dataset::new(Split::Train, vec![sim("a", &[0.0, 2.0])]).unwrap();
        let s = ScalerPair::fit(&ds).unwrap();
        assert_eq!(s.input_mean[0], 1.0);
        assert_eq!(s.input_std[0], 1.0);
    }

    #[test]
    fn constant_channel_is_clamped() {
        let ds = Dataset::new(Split::Train, vec![sim("a", &[0.0, 2.0, 5.0])]).unwrap();
        let s = ScalerPair::fit(&ds).unwrap();
        assert_eq!(s.input_mean[1], 3.0);
        assert_eq!(s.input_std[1], 1.0);
        let scaled = s.scale_inputs(&ds.simulations[0].points);
        assert!(scaled.chunks(7).all(|r| r[1] == 0.0));
    }

    #[test]
    fn pooled_equals_concatenated() {
        let split = Dataset::new(Split::Train, vec![sim("a", &[0.5, 1.0]), sim("b", &[4.0, -2.0, 7.0])]).unwrap();
        let joined = Dataset::new(Split::Train, vec![sim("ab", &[0.5, 1.0, 4.0, -2.0, 7.0])]).unwrap();
        assert_eq!(ScalerPair::fit(&split).unwrap(), ScalerPair::fit(&joined).unwrap());
    }

    #[test]
    fn zero_output_maps_to_target_mean() {
        let ds = Dataset::new(Split::Train, vec![sim("a", &[1.0, 2.0, 4.0])]).unwrap();
        let s = ScalerPair::fit(&ds).unwrap();
        let back = s.unscale_targets(&[0.0; 4]).unwrap();
        assert_eq!(back[0], s.target_mean);
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let ds = Dataset::new(Split::Train, vec![sim("a", &[1.0, 2.0])]).unwrap();
        let s = ScalerPair::fit(&ds).unwrap();
        assert!(s.apply(&[0.0; 8], 4, Direction::Forward, Channels::Inputs).is_err());
        assert!(s.apply(&[0.0; 9], 4, Direction::Forward, Channels::Targets).is_err());
    }
}
