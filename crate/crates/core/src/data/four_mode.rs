use std::f64::consts::FRAC_1_SQRT_2;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::trajectory::{Dataset, Trajectory};
use crate::error::{Result, VdmError};
use crate::VdmRng;

/// Planar trajectories that leave a common start along one of four diagonals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourModeConfig {
    pub seq_len: usize,
    pub prefix_len: usize,
    pub start_std: f64,
    pub step: f64,
    pub step_std: f64,
}

impl Default for FourModeConfig {
    fn default() -> Self {
        Self {
            seq_len: 4,
            prefix_len: 1,
            start_std: 0.05,
            step: 0.5,
            step_std: 0.05,
        }
    }
}

/// Unit headings `(±1, ±1)/sqrt(2)`, indexed by mode label.
pub const HEADINGS: [[f64; 2]; 4] = [
    [FRAC_1_SQRT_2, FRAC_1_SQRT_2],
    [-FRAC_1_SQRT_2, FRAC_1_SQRT_2],
    [-FRAC_1_SQRT_2, -FRAC_1_SQRT_2],
    [FRAC_1_SQRT_2, -FRAC_1_SQRT_2],
];

/// Mode label of a displacement: the quadrant it points into.
pub fn quadrant(v: &[f64]) -> usize {
    match (v[0] >= 0.0, v[1] >= 0.0) {
        (true, true) => 0,
        (false, true) => 1,
        (false, false) => 2,
        (true, false) => 3,
    }
}

/// One trajectory and its mode label.
pub fn four_mode_sequence(cfg: &FourModeConfig, rng: &mut VdmRng) -> (Vec<Vec<f64>>, usize) {
    let label = rng.random_range(0..4);
    let heading = HEADINGS[label];
    let mut noise = |s: f64| -> f64 { s * rng.sample::<f64, _>(StandardNormal) };
    let mut x = vec![noise(cfg.start_std), noise(cfg.start_std)];
    let mut seq = vec![x.clone()];
    for _ in 1..cfg.seq_len {
        for j in 0..2 {
            x[j] += heading[j] * cfg.step + noise(cfg.step_std);
        }
        seq.push(x.clone());
    }
    (seq, label)
}

/// `n` trajectories with their mode labels.
pub fn generate_four_mode(
    cfg: &FourModeConfig,
    n: usize,
    rng: &mut VdmRng,
) -> Result<(Dataset, Vec<usize>)> {
    if n == 0 {
        return Err(VdmError::Invalid("need at least one sequence".into()));
    }
    let mut seqs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let (seq, label) = four_mode_sequence(cfg, rng);
        seqs.push(Trajectory::new(seq, cfg.prefix_len)?);
        labels.push(label);
    }
    Ok((Dataset::new(2, seqs)?, labels))
}

/// Train, validation and test splits drawn in that order.
pub fn four_mode_splits(
    cfg: &FourModeConfig,
    n: [usize; 3],
    rng: &mut VdmRng,
) -> Result<[Dataset; 3]> {
    Ok([
        generate_four_mode(cfg, n[0], rng)?.0,
        generate_four_mode(cfg, n[1], rng)?.0,
        generate_four_mode(cfg, n[2], rng)?.0,
    ])
}
