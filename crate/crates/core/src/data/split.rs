use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::simulation::Dataset;
use crate::error::{Error, Result};

/// Simulation indices of one cross-validation fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Seeded k-fold partition of `n` simulations. Validation folds are disjoint,
/// cover every simulation, and differ in size by at most one.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("k-fold needs k >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::InvalidDataset(format!(
            "{n} simulations cannot fill {k} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut validation = order[start..start + size].to_vec();
        validation.sort_unstable();
        let mut train: Vec<usize> = order[..start]
            .iter()
            .chain(&order[start + size..])
            .copied()
            .collect();
        train.sort_unstable();
        folds.push(Fold { train, validation });
        start += size;
    }
    Ok(folds)
}

/// Splits at simulation granularity; returns `(train, validation)` datasets.
pub fn kfold_split(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<(Dataset, Dataset)>> {
    Ok(kfold_indices(dataset.len(), k, seed)?
        .iter()
        .map(|f| (dataset.select(&f.train), dataset.select(&f.validation)))
        .collect())
}

/// Number of simulations kept by [`subsample`]: `ceil(fraction * n)`, with
/// products within 1e-9 of an integer taken as that integer.
pub fn subsample_count(n: usize, fraction: f64) -> usize {
    let x = fraction * n as f64;
    let nearest = x.round();
    let k = if (x - nearest).abs() < 1e-9 { nearest } else { x.ceil() };
    (k as usize).clamp(usize::from(n > 0), n)
}

/// Keeps a seeded random subset of simulations, preserving their order.
pub fn subsample(dataset: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "subsample fraction {fraction} outside (0, 1]"
        )));
    }
    let keep = subsample_count(dataset.len(), fraction);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut chosen = order[..keep].to_vec();
    chosen.sort_unstable();
    Ok(dataset.select(&chosen))
}
