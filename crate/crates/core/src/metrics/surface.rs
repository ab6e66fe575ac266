use serde::{Deserialize, Serialize};

use crate::data::{input, Simulation};
use crate::error::{Error, Result};

/// Wall points in polygon order with per-point effective arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePolyline {
    pub indices: Vec<usize>,
    /// Half the sum of the two polygon edges meeting at each point.
    pub segment_lengths: Vec<f64>,
}

impl SurfacePolyline {
    pub fn perimeter(&self) -> f64 {
        self.segment_lengths.iter().sum()
    }
}

/// Orders the wall points (nonzero normals) by angle around their centroid,
/// ties broken by distance from it, and closes the polygon. Assumes the
/// section is star-shaped with respect to its centroid.
pub fn order_surface(sim: &Simulation) -> Result<SurfacePolyline> {
    let surface = sim.surface_indices();
    if surface.len() < 3 {
        return Err(Error::InvalidSimulation {
            name: sim.name.clone(),
            message: format!("{} surface points, need at least 3", surface.len()),
        });
    }
    let pos = |i: usize| (sim.points[i][input::X], sim.points[i][input::Y]);
    let n = surface.len() as f64;
    let (sx, sy) = surface.iter().fold((0.0, 0.0), |(ax, ay), &i| {
        let (x, y) = pos(i);
        (ax + x, ay + y)
    });
    let (cx, cy) = (sx / n, sy / n);

    let mut keyed: Vec<(f64, f64, usize)> = surface
        .iter()
        .map(|&i| {
            let (x, y) = pos(i);
            ((y - cy).atan2(x - cx), (x - cx).hypot(y - cy), i)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let indices: Vec<usize> = keyed.into_iter().map(|k| k.2).collect();

    let m = indices.len();
    let edge = |a: usize, b: usize| {
        let (xa, ya) = pos(indices[a]);
        let (xb, yb) = pos(indices[b]);
        (xb - xa).hypot(yb - ya)
    };
    // edges[k] joins point k to point k+1 (cyclically)
    let edges: Vec<f64> = (0..m).map(|k| edge(k, (k + 1) % m)).collect();
    let segment_lengths = (0..m)
        .map(|k| 0.5 * (edges[(k + m - 1) % m] + edges[k]))
        .collect();
    Ok(SurfacePolyline {
        indices,
        segment_lengths,
    })
}

/// Pressure-only force coefficients per unit span.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceCoefficients {
    pub drag: f64,
    pub lift: f64,
}

/// Integrated pressure force per unit density and span:
/// `F / rho = -sum_i p_i n_i l_i` over the wall points.
pub fn pressure_force(
    sim: &Simulation,
    polyline: &SurfacePolyline,
    pressure: &[f64],
) -> Result<[f64; 2]> {
    if pressure.len() != sim.len() {
        return Err(Error::Shape {
            context: "pressure field",
            expected: sim.len(),
            got: pressure.len(),
        });
    }
    let mut force = [0.0; 2];
    for (&i, &len) in polyline.indices.iter().zip(&polyline.segment_lengths) {
        let p = &sim.points[i];
        force[0] -= pressure[i] * p[input::NX] * len;
        force[1] -= pressure[i] * p[input::NY] * len;
    }
    Ok(force)
}

/// Drag (x) and lift (y) force normalized by `0.5 |v_inlet|^2`.
/// `pressure` holds `p / rho` for every point of `sim`.
pub fn force_coefficients(
    sim: &Simulation,
    polyline: &SurfacePolyline,
    pressure: &[f64],
) -> Result<ForceCoefficients> {
    let [vx, vy] = sim.inlet_velocity();
    let dynamic = 0.5 * (vx * vx + vy * vy);
    if dynamic == 0.0 {
        return Err(Error::InvalidSimulation {
            name: sim.name.clone(),
            message: "zero inlet speed".into(),
        });
    }
    let [fx, fy] = pressure_force(sim, polyline, pressure)?;
    Ok(ForceCoefficients {
        drag: fx / dynamic,
        lift: fy / dynamic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn polygon(name: &str, pts: &[(f64, f64)]) -> Simulation {
        // outward normals approximated by the direction from the origin
        Simulation::new(
            name,
            pts.iter()
                .map(|&(x, y)| {
                    let r = x.hypot(y);
                    [x, y, 1.0, 0.0, 0.0, x / r, y / r]
                })
                .collect(),
            vec![[0.0; 4]; pts.len()],
        )
        .unwrap()
    }

    #[test]
    fn triangle_half_edges() {
        let sim = polygon("t", &[(3.0, -1.0), (-1.0, -1.0), (-1.0, 2.0)]);
        let poly = order_surface(&sim).unwrap();
        // sides: 4 (bottom), 3 (left), 5 (hypotenuse)
        let by_index: Vec<f64> = (0..3)
            .map(|i| poly.segment_lengths[poly.indices.iter().position(|&k| k == i).unwrap()])
            .collect();
        assert!((by_index[0] - 4.5).abs() < 1e-12); // 4 and 5
        assert!((by_index[1] - 3.5).abs() < 1e-12); // 4 and 3
        assert!((by_index[2] - 4.0).abs() < 1e-12); // 3 and 5
        assert!((poly.perimeter() - 12.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_surface_points() {
        let sim = polygon("t", &[(1.0, 0.0), (0.0, 1.0)]);
        assert!(order_surface(&sim).is_err());
    }

    #[test]
    fn zero_inlet_rejected() {
        let mut sim = polygon("t", &[(1.0, 0.0), (0.0, 1.0), (-1.0, -1.0)]);
        for p in &mut sim.points {
            p[input::INLET_VX] = 0.0;
        }
        let poly = order_surface(&sim).unwrap();
        assert!(force_coefficients(&sim, &poly, &[1.0; 3]).is_err());
    }
}
