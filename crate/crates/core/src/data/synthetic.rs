//! Analytic stand-in dataset: inviscid flow past a circular cylinder with
//! circulation.
//!
//! With freestream `(U, 0)`, radius `R` and circulation `G` (positive =
//! clockwise), the complex velocity is
//! `u - i v = U (1 - R^2 / z^2) + i G / (2 pi z)`.
//! Pressure follows Bernoulli with zero gauge at infinity, and the lift per
//! unit span and density is `U G`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::simulation::{Dataset, Simulation, Split, N_INPUTS, N_TARGETS};
use crate::error::{Error, Result};

/// Outer radius of sampled field points, in cylinder radii.
pub const FIELD_EXTENT: f64 = 10.0;

/// Coefficient of the auxiliary `nut` field: `0.01 * distance * speed`.
pub const NUT_COEFF: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylinderFlow {
    pub radius: f64,
    pub speed: f64,
    pub circulation: f64,
}

impl CylinderFlow {
    pub fn velocity(&self, x: f64, y: f64) -> (f64, f64) {
        let (r, u_inf, g) = (self.radius, self.speed, self.circulation);
        let r2 = x * x + y * y;
        let r4 = r2 * r2;
        let re = u_inf * (1.0 - r * r * (x * x - y * y) / r4) + g * y / (2.0 * PI * r2);
        let im = u_inf * 2.0 * r * r * x * y / r4 + g * x / (2.0 * PI * r2);
        (re, -im)
    }

    /// Kinematic pressure `p / rho`.
    pub fn pressure(&self, x: f64, y: f64) -> f64 {
        let (u, v) = self.velocity(x, y);
        0.5 * self.speed * self.speed - 0.5 * (u * u + v * v)
    }

    /// Kutta–Joukowski lift per unit span and density.
    pub fn lift_per_density(&self) -> f64 {
        self.speed * self.circulation
    }

    fn sample(&self, x: f64, y: f64, normal: (f64, f64)) -> ([f64; N_INPUTS], [f64; N_TARGETS]) {
        let distance = if normal == (0.0, 0.0) {
            (x.hypot(y) - self.radius).max(0.0)
        } else {
            0.0
        };
        let (u, v) = self.velocity(x, y);
        let nut = NUT_COEFF * distance * u.hypot(v);
        (
            [x, y, self.speed, 0.0, distance, normal.0, normal.1],
            [u, v, self.pressure(x, y), nut],
        )
    }

    /// Samples `surface_points` evenly on the wall (starting at a random
    /// phase) and `field_points` log-uniformly in radius out to
    /// [`FIELD_EXTENT`] radii.
    pub fn simulate(
        &self,
        name: impl Into<String>,
        surface_points: usize,
        field_points: usize,
        rng: &mut impl Rng,
    ) -> Result<Simulation> {
        let mut points = Vec::with_capacity(surface_points + field_points);
        let mut targets = Vec::with_capacity(surface_points + field_points);
        let step = 2.0 * PI / surface_points as f64;
        let phase = rng.random_range(0.0..step);
        for k in 0..surface_points {
            let theta = phase + step * k as f64;
            let (s, c) = theta.sin_cos();
            let (p, t) = self.sample(self.radius * c, self.radius * s, (c, s));
            points.push(p);
            targets.push(t);
        }
        for _ in 0..field_points {
            let u: f64 = rng.random_range(0.005..=1.0);
            let rad = self.radius * FIELD_EXTENT.powf(u);
            let theta = rng.random_range(0.0..2.0 * PI);
            let (s, c) = theta.sin_cos();
            let (p, t) = self.sample(rad * c, rad * s, (0.0, 0.0));
            points.push(p);
            targets.push(t);
        }
        Simulation::new(name, points, targets)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CylinderFlowConfig {
    pub num_sims: usize,
    pub surface_points: usize,
    pub field_points: usize,
    pub radius_range: [f64; 2],
    pub inlet_speed_range: [f64; 2],
    pub circulation_range: [f64; 2],
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ood: bool,
}

impl Default for CylinderFlowConfig {
    fn default() -> Self {
        Self {
            num_sims: 20,
            surface_points: 64,
            field_points: 256,
            radius_range: [0.5, 1.0],
            inlet_speed_range: [5.0, 15.0],
            circulation_range: [-10.0, 10.0],
            seed: 0,
            ood: false,
        }
    }
}

impl CylinderFlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_sims < 1 || self.surface_points < 3 || self.field_points < 3 {
            return Err(Error::InvalidConfig(
                "need num_sims >= 1, surface_points >= 3 and field_points >= 3".into(),
            ));
        }
        for (name, [lo, hi]) in [
            ("radius_range", self.radius_range),
            ("inlet_speed_range", self.inlet_speed_range),
            ("circulation_range", self.circulation_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidConfig(format!("{name} [{lo}, {hi}] is invalid")));
            }
        }
        if self.radius_range[0] <= 0.0 || self.inlet_speed_range[0] <= 0.0 {
            return Err(Error::InvalidConfig(
                "radius and inlet speed must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Range actually sampled: the configured one, or for out-of-distribution
    /// data a disjoint range just above it.
    pub fn effective_range(&self, [lo, hi]: [f64; 2]) -> [f64; 2] {
        if !self.ood {
            return [lo, hi];
        }
        let span = if hi > lo { hi - lo } else { hi.abs().max(1.0) * 0.5 };
        [hi + 0.1 * span, hi + span]
    }
}

fn draw(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

pub fn generate_cylinder_flow(cfg: &CylinderFlowConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (prefix, split) = if cfg.ood {
        ("ood", Split::TestOod)
    } else {
        ("sim", Split::Train)
    };
    let sims = (0..cfg.num_sims)
        .map(|i| {
            let flow = CylinderFlow {
                radius: draw(&mut rng, cfg.effective_range(cfg.radius_range)),
                speed: draw(&mut rng, cfg.effective_range(cfg.inlet_speed_range)),
                circulation: draw(&mut rng, cfg.effective_range(cfg.circulation_range)),
            };
            flow.simulate(
                format!("{prefix}_{i:04}"),
                cfg.surface_points,
                cfg.field_points,
                &mut rng,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(split, sims)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::simulation::{input, target};

    #[test]
    fn surface_points_lie_on_the_wall() {
        let ds = generate_cylinder_flow(&CylinderFlowConfig {
            num_sims: 3,
            ..Default::default()
        })
        .unwrap();
        for sim in &ds.simulations {
            let surf = sim.surface_indices();
            assert_eq!(surf.len(), 64);
            for &i in &surf {
                let p = &sim.points[i];
                assert_eq!(p[input::DISTANCE], 0.0);
                let n = p[input::NX].hypot(p[input::NY]);
                assert!((n - 1.0).abs() < 1e-12);
                // radial: normal parallel to position
                let cross = p[input::X] * p[input::NY] - p[input::Y] * p[input::NX];
                assert!(cross.abs() < 1e-12);
                assert!(p[input::X] * p[input::NX] + p[input::Y] * p[input::NY] > 0.0);
            }
        }
    }

    #[test]
    fn far_field_recovers_freestream() {
        let flow = CylinderFlow { radius: 0.7, speed: 12.0, circulation: 3.0 };
        for k in 0..16 {
            let theta = k as f64 * PI / 8.0;
            let (u, v) = flow.velocity(70.0 * theta.cos(), 70.0 * theta.sin());
            assert!(((u - 12.0).powi(2) + v * v).sqrt() < 1e-3 * 12.0);
        }
    }

    #[test]
    fn front_stagnation_pressure() {
        let flow = CylinderFlow { radius: 1.3, speed: 8.0, circulation: 0.0 };
        let (u, v) = flow.velocity(-1.3, 0.0);
        assert!(u.abs() < 1e-12 && v.abs() < 1e-12);
        assert!((flow.pressure(-1.3, 0.0) - 32.0).abs() < 1e-12);
    }

    #[test]
    fn wall_velocity_is_tangential() {
        let flow = CylinderFlow { radius: 0.9, speed: 6.0, circulation: -4.0 };
        for k in 0..32 {
            let theta = k as f64 * PI / 16.0 + 0.1;
            let (x, y) = (0.9 * theta.cos(), 0.9 * theta.sin());
            let (u, v) = flow.velocity(x, y);
            assert!((u * theta.cos() + v * theta.sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_free_away_from_wall() {
        let flow = CylinderFlow { radius: 1.0, speed: 10.0, circulation: 0.0 };
        let h = 1e-4;
        for i in -6..=6 {
            for j in -6..=6 {
                let (x, y) = (i as f64 * 0.5, j as f64 * 0.5);
                if x.hypot(y) < 1.5 {
                    continue;
                }
                let du = (flow.velocity(x + h, y).0 - flow.velocity(x - h, y).0) / (2.0 * h);
                let dv = (flow.velocity(x, y + h).1 - flow.velocity(x, y - h).1) / (2.0 * h);
                assert!((du + dv).abs() < 1e-6 * flow.speed / flow.radius, "div at ({x},{y}) = {}", du + dv);
            }
        }
    }

    #[test]
    fn ood_ranges_are_disjoint() {
        let base = CylinderFlowConfig::default();
        let ood = CylinderFlowConfig { ood: true, ..base.clone() };
        let [lo, _] = ood.effective_range(base.inlet_speed_range);
        assert!(lo > base.inlet_speed_range[1]);
        let ds = generate_cylinder_flow(&CylinderFlowConfig { num_sims: 5, ..ood }).unwrap();
        assert_eq!(ds.split, Split::TestOod);
        for sim in &ds.simulations {
            assert!(sim.inlet_velocity()[0] > base.inlet_speed_range[1]);
        }
    }

    #[test]
    fn generation_is_seeded() {
        let cfg = CylinderFlowConfig { num_sims: 2, seed: 3, ..Default::default() };
        assert_eq!(generate_cylinder_flow(&cfg).unwrap(), generate_cylinder_flow(&cfg).unwrap());
        let other = CylinderFlowConfig { seed: 4, ..cfg.clone() };
        assert_ne!(generate_cylinder_flow(&cfg).unwrap(), generate_cylinder_flow(&other).unwrap());
    }

    #[test]
    fn nut_is_smooth_auxiliary_field() {
        let ds = generate_cylinder_flow(&CylinderFlowConfig { num_sims: 1, ..Default::default() }).unwrap();
        let sim = &ds.simulations[0];
        for (p, t) in sim.points.iter().zip(&sim.targets) {
            let speed = t[target::VX].hypot(t[target::VY]);
            assert!((t[target::NUT] - 0.01 * p[input::DISTANCE] * speed).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let bad = CylinderFlowConfig { surface_points: 2, ..Default::default() };
        assert!(generate_cylinder_flow(&bad).is_err());
        let bad = CylinderFlowConfig { radius_range: [2.0, 1.0], ..Default::default() };
        assert!(generate_cylinder_flow(&bad).is_err());
    }
}
