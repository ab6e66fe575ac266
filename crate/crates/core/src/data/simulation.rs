use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_INPUTS: usize = 7;
pub const N_TARGETS: usize = 4;

/// Column names of a simulation CSV, inputs first.
pub const CSV_COLUMNS: [&str; N_INPUTS + N_TARGETS] = [
    "x", "y", "inlet_vx", "inlet_vy", "distance", "nx", "ny", "vx", "vy", "p", "nut",
];

/// Input channel indices.
pub mod input {
    pub const X: usize = 0;
    pub const Y: usize = 1;
    pub const INLET_VX: usize = 2;
    pub const INLET_VY: usize = 3;
    pub const DISTANCE: usize = 4;
    pub const NX: usize = 5;
    pub const NY: usize = 6;
}

/// Target channel indices.
pub mod target {
    pub const VX: usize = 0;
    pub const VY: usize = 1;
    pub const PRESSURE: usize = 2;
    pub const NUT: usize = 3;
}

const NORMAL_TOL: f64 = 1e-6;
const SURFACE_DISTANCE_TOL: f64 = 1e-12;

/// One flow field sampled on an unordered point cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub name: String,
    pub points: Vec<[f64; N_INPUTS]>,
    pub targets: Vec<[f64; N_TARGETS]>,
}

impl Simulation {
    pub fn new(
        name: impl Into<String>,
        points: Vec<[f64; N_INPUTS]>,
        targets: Vec<[f64; N_TARGETS]>,
    ) -> Result<Self> {
        let sim = Self {
            name: name.into(),
            points,
            targets,
        };
        sim.validate()?;
        Ok(sim)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| Error::InvalidSimulation {
            name: self.name.clone(),
            message,
        };
        if self.points.is_empty() {
            return Err(fail("no points".into()));
        }
        if self.points.len() != self.targets.len() {
            return Err(fail(format!(
                "{} points but {} targets",
                self.points.len(),
                self.targets.len()
            )));
        }
        for (i, (p, t)) in self.points.iter().zip(&self.targets).enumerate() {
            if let Some(c) = p.iter().chain(t).position(|v| !v.is_finite()) {
                return Err(fail(format!("point {i}: non-finite `{}`", CSV_COLUMNS[c])));
            }
            let d = p[input::DISTANCE];
            if d < 0.0 {
                return Err(fail(format!("point {i}: negative distance {d}")));
            }
            let (nx, ny) = (p[input::NX], p[input::NY]);
            if nx != 0.0 || ny != 0.0 {
                let norm = nx.hypot(ny);
                if (norm - 1.0).abs() > NORMAL_TOL {
                    return Err(fail(format!("point {i}: normal has norm {norm}")));
                }
                if d > SURFACE_DISTANCE_TOL {
                    return Err(fail(format!(
                        "point {i}: surface point with distance {d}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_surface(&self, i: usize) -> bool {
        let p = &self.points[i];
        p[input::NX] != 0.0 || p[input::NY] != 0.0
    }

    pub fn surface_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_surface(i)).collect()
    }

    /// Inlet velocity; constant over the points of a simulation.
    pub fn inlet_velocity(&self) -> [f64; 2] {
        let p = &self.points[0];
        [p[input::INLET_VX], p[input::INLET_VY]]
    }

    pub fn flat_points(&self) -> Vec<f64> {
        self.points.as_flattened().to_vec()
    }

    pub fn flat_targets(&self) -> Vec<f64> {
        self.targets.as_flattened().to_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
    TestOod,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::TestOod => "test_ood",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub simulations: Vec<Simulation>,
}

impl Dataset {
    pub fn new(split: Split, simulations: Vec<Simulation>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &simulations {
            if !seen.insert(s.name.as_str()) {
                return Err(Error::InvalidDataset(format!(
                    "duplicate simulation name `{}`",
                    s.name
                )));
            }
        }
        Ok(Self { split, simulations })
    }

    pub fn len(&self) -> usize {
        self.simulations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.simulations.is_empty()
    }

    pub fn total_points(&self) -> usize {
        self.simulations.iter().map(Simulation::len).sum()
    }

    /// Sub-dataset with the simulations at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            split: self.split,
            simulations: indices.iter().map(|&i| self.simulations[i].clone()).collect(),
        }
    }

    pub fn pooled_points(&self) -> impl Iterator<Item = &[f64; N_INPUTS]> + Clone {
        self.simulations.iter().flat_map(|s| &s.points)
    }

    pub fn pooled_targets(&self) -> impl Iterator<Item = &[f64; N_TARGETS]> + Clone {
        self.simulations.iter().flat_map(|s| &s.targets)
    }
}

/// `manifest.json` of a dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub split: Split,
    pub simulations: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn load_simulation(path: &Path) -> Result<Simulation> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let schema = |message: String| Error::Schema {
        path: path.to_path_buf(),
        message,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| schema(e.to_string()))?;
    let headers = reader.headers().map_err(|e| schema(e.to_string()))?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(schema("empty file".into()));
    }

    let mut column_of = [usize::MAX; N_INPUTS + N_TARGETS];
    for (pos, h) in headers.iter().enumerate() {
        match CSV_COLUMNS.iter().position(|c| *c == h) {
            Some(k) if column_of[k] != usize::MAX => {
                return Err(schema(format!("duplicate column `{h}`")))
            }
            Some(k) => column_of[k] = pos,
            None => return Err(schema(format!("unexpected column `{h}`"))),
        }
    }
    if let Some(k) = column_of.iter().position(|&p| p == usize::MAX) {
        return Err(schema(format!("missing column `{}`", CSV_COLUMNS[k])));
    }

    let mut points = Vec::new();
    let mut targets = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        let mut values = [0.0; N_INPUTS + N_TARGETS];
        for (k, &pos) in column_of.iter().enumerate() {
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                row,
                column: CSV_COLUMNS[k].to_string(),
                message,
            };
            let field = record.get(pos).unwrap_or("");
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(format!("cannot parse `{field}` as a number")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("non-finite value `{field}`")));
            }
            values[k] = v;
        }
        let mut p = [0.0; N_INPUTS];
        let mut t = [0.0; N_TARGETS];
        p.copy_from_slice(&values[..N_INPUTS]);
        t.copy_from_slice(&values[N_INPUTS..]);
        points.push(p);
        targets.push(t);
    }
    if points.is_empty() {
        return Err(schema("no data rows".into()));
    }
    Simulation::new(name, points, targets)
}

pub fn write_simulation(path: &Path, sim: &Simulation) -> Result<()> {
    let mut out = String::with_capacity(64 * (sim.len() + 1));
    out.push_str(&CSV_COLUMNS.join(","));
    out.push('\n');
    for (p, t) in sim.points.iter().zip(&sim.targets) {
        for (k, v) in p.iter().chain(t).enumerate() {
            if k > 0 {
                out.push(',');
            }
            // `Display` for f64 is the shortest round-tripping representation
            write!(out, "{v}").expect("writing to a String cannot fail");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::json(&manifest_path, e))?;
    let simulations = manifest
        .simulations
        .iter()
        .map(|f| load_simulation(&dir.join(f)))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(manifest.split, simulations)
}

/// Writes one CSV per simulation plus `manifest.json` into `dir`.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::with_capacity(dataset.len());
    for sim in &dataset.simulations {
        let file = format!("{}.csv", sim.name);
        write_simulation(&dir.join(&file), sim)?;
        files.push(file);
    }
    let manifest = Manifest {
        split: dataset.split,
        simulations: files,
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "x,y,inlet_vx,inlet_vy,distance,nx,ny,vx,vy,p,nut";

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn parses_two_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "a.csv",
            &format!("{HEADER}\n1,0,10,0,0,1,0,0,0,50,0\n2.5,-1,10,0,1.5,0,0,9.5,0.25,3,0.001\n"),
        );
        let sim = load_simulation(&p).unwrap();
        assert_eq!(sim.name, "a");
        assert_eq!(sim.len(), 2);
        assert_eq!(sim.points[1], [2.5, -1.0, 10.0, 0.0, 1.5, 0.0, 0.0]);
        assert_eq!(sim.targets[1], [9.5, 0.25, 3.0, 0.001]);
        assert!(sim.is_surface(0) && !sim.is_surface(1));
    }

    #[test]
    fn reordered_columns_are_mapped_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "b.csv",
            "nut,p,vy,vx,ny,nx,distance,inlet_vy,inlet_vx,y,x\n4,3,2,1,0,0,0.5,0,10,7,6\n",
        );
        let sim = load_simulation(&p).unwrap();
        assert_eq!(sim.points[0], [6.0, 7.0, 10.0, 0.0, 0.5, 0.0, 0.0]);
        assert_eq!(sim.targets[0], [1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c.csv", "x,y,inlet_vx,inlet_vy,distance,nx,ny,vx,vy,p\n0,0,1,0,1,0,0,0,0,0\n");
        let err = load_simulation(&p).unwrap_err().to_string();
        assert!(err.contains("missing column `nut`"), "{err}");
    }

    #[test]
    fn extra_column_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "d.csv", &format!("{HEADER},z\n0,0,1,0,1,0,0,0,0,0,0,0\n"));
        assert!(load_simulation(&p).unwrap_err().to_string().contains("unexpected column `z`"));
    }

    #[test]
    fn non_finite_value_reports_location() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "e.csv",
            &format!("{HEADER}\n0,0,1,0,1,0,0,0,0,0,0\n0,0,1,0,1,0,0,0,NaN,0,0\n"),
        );
        match load_simulation(&p).unwrap_err() {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "vy");
            }
            e => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn empty_inputs_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_simulation(&write(dir.path(), "f.csv", "")).is_err());
        assert!(load_simulation(&write(dir.path(), "g.csv", &format!("{HEADER}\n"))).is_err());
    }

    #[test]
    fn invariants_enforced() {
        let bad_normal = Simulation::new("s", vec![[0.0, 0.0, 1.0, 0.0, 0.0, 0.5, 0.0]], vec![[0.0; 4]]);
        assert!(bad_normal.is_err());
        let off_surface = Simulation::new("s", vec![[0.0, 0.0, 1.0, 0.0, 0.3, 1.0, 0.0]], vec![[0.0; 4]]);
        assert!(off_surface.is_err());
        let negative = Simulation::new("s", vec![[0.0, 0.0, 1.0, 0.0, -0.1, 0.0, 0.0]], vec![[0.0; 4]]);
        assert!(negative.is_err());
        let dup = Dataset::new(
            Split::Train,
            vec![
                Simulation::new("s", vec![[0.0; 7]], vec![[0.0; 4]]).unwrap(),
                Simulation::new("s", vec![[0.0; 7]], vec![[0.0; 4]]).unwrap(),
            ],
        );
        assert!(dup.is_err());
    }
}
