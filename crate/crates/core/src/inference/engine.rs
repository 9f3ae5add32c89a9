//! Batched filter recursion on a [`Tape`].
//!
//! A batch of `B` sequences with `k` branches each is laid out as `(B*k, dim)`
//! matrices, branch `i` of sequence `b` at row `b*k + i`.

use rand::Rng;

use super::draws::Draws;
use crate::diffcore::{log_pdf_rows, split_head, DenseArray, Tape, Var};
use crate::error::{Result, VdmError};
use crate::nets::{BranchLatent, Model, SamplerMode, WeightingMode};
use crate::sampling::abscissa_matrix;
use crate::VdmRng;

/// Collapsed filtering state of every sequence in a batch.
#[derive(Clone, Copy, Debug)]
pub struct BatchState {
    /// `(B, d_z)` mean of the carried Gaussian.
    pub mean: Var,
    /// `(B, d_z)` log-std of the carried Gaussian.
    pub log_std: Var,
    /// `(B, d_h)` expected recurrent state.
    pub h: Var,
}

/// Everything one filter step produces.
#[derive(Clone, Debug)]
pub struct BranchStep {
    pub next: BatchState,
    /// `(B*k, d_h)` recurrent samples.
    pub s: Var,
    pub q_mean: Var,
    pub q_log_std: Var,
    /// Transition prior evaluated at each branch.
    pub p_mean: Var,
    pub p_log_std: Var,
    /// `(B*k, 1)` branch log-likelihoods of the observation.
    pub branch_ll: Var,
    /// Selected branch per sequence.
    pub selected: Vec<usize>,
    /// Row of the selected branch per sequence.
    pub rows: Vec<usize>,
}

/// Row indices repeating each of `b` rows `k` times.
pub fn repeat_index(b: usize, k: usize) -> Vec<usize> {
    (0..b * k).map(|r| r / k).collect()
}

/// Branch index chosen from log-likelihoods.
///
/// Delta mode returns the argmax with the lowest index winning ties.
/// Categorical mode samples proportionally to `exp(ll)`.
pub fn select_branch(lls: &[f64], mode: WeightingMode, rng: &mut VdmRng) -> Result<usize> {
    if lls.is_empty() {
        return Err(VdmError::Weights("no branches".into()));
    }
    if lls.iter().any(|v| v.is_nan()) {
        return Err(VdmError::Weights("NaN branch likelihood".into()));
    }
    let max = lls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(VdmError::Weights("all branch likelihoods are zero".into()));
    }
    match mode {
        WeightingMode::Delta => Ok(lls.iter().position(|&v| v == max).expect("max present")),
        WeightingMode::Categorical => {
            let w: Vec<f64> = lls.iter().map(|&v| (v - max).exp()).collect();
            let total: f64 = w.iter().sum();
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            for (i, wi) in w.iter().enumerate() {
                acc += wi;
                if u < acc {
                    return Ok(i);
                }
            }
            Ok(w.iter().rposition(|&v| v > 0.0).expect("positive weight"))
        }
    }
}

/// Encoder belief for the first observation `x1` of shape `(B, d_x)`.
///
/// Returns the state and the encoder head split into mean and log-std.
pub fn init_state(model: &Model, tape: &mut Tape, x1: Var) -> Result<(BatchState, Var, Var)> {
    let b = tape.value(x1).rows();
    let head = model.encoder_head(tape, x1)?;
    let (mean, log_std) = split_head(tape, head)?;
    let h = tape.constant(DenseArray::zeros(&[b, model.config.d_h]));
    Ok((BatchState { mean, log_std, h }, mean, log_std))
}

/// Latent offsets `xi + eps` (SCA) or `eps` (Monte-Carlo), shape `(B*k, d_z)`.
fn latent_offsets(model: &Model, b: usize, draws: &mut Draws) -> Result<DenseArray> {
    let c = &model.config;
    let mut eps = draws.normal(b * c.k, c.d_z)?;
    if c.sampler_mode == SamplerMode::Sca {
        let xi = abscissa_matrix(c.d_z, c.kappa);
        for r in 0..b * c.k {
            for (e, x) in eps.row_mut(r).iter_mut().zip(xi.row(r % c.k)) {
                *e += x;
            }
        }
    }
    Ok(eps)
}

/// `mean + exp(log_std) * noise` with `noise` constant.
pub fn reparam(tape: &mut Tape, mean: Var, log_std: Var, noise: DenseArray) -> Result<Var> {
    let std = tape.exp(log_std);
    let n = tape.constant(noise);
    let scaled = tape.mul(std, n)?;
    tape.add(mean, scaled)
}

/// Log-likelihood of `x_rep` under each branch: transition prior at `s`,
/// latent at the prior mean (or one prior draw), then the emission.
fn branch_likelihood(
    model: &Model,
    tape: &mut Tape,
    s: Var,
    x_rep: Var,
    draws: &mut Draws,
) -> Result<(Var, Var, Var)> {
    let head = model.transition_head(tape, s)?;
    let (p_mean, p_log_std) = split_head(tape, head)?;
    let z = match model.config.branch_latent {
        BranchLatent::PriorMean => p_mean,
        BranchLatent::Sample => {
            let (rows, d) = tape.value(p_mean).dims();
            let eps = draws.normal(rows, d)?;
            reparam(tape, p_mean, p_log_std, eps)?
        }
    };
    let dec = model.decoder_head(tape, z, s)?;
    let (x_mean, x_log_std) = split_head(tape, dec)?;
    let ll = log_pdf_rows(tape, x_rep, x_mean, x_log_std)?;
    Ok((ll, p_mean, p_log_std))
}

/// One filter step for observation `x` of shape `(B, d_x)`.
pub fn branch_step(
    model: &Model,
    tape: &mut Tape,
    state: &BatchState,
    x: Var,
    draws: &mut Draws,
) -> Result<BranchStep> {
    let k = model.config.k;
    let b = tape.value(x).rows();
    let rep = repeat_index(b, k);

    let offsets = latent_offsets(model, b, draws)?;
    let mean_r = tape.gather_rows(state.mean, &rep)?;
    let log_std_r = tape.gather_rows(state.log_std, &rep)?;
    let z = reparam(tape, mean_r, log_std_r, offsets)?;
    let h_r = tape.gather_rows(state.h, &rep)?;
    let s = model.gru_step(tape, z, h_r)?;

    let x_rep = tape.gather_rows(x, &rep)?;
    let q_head = model.inference_head(tape, s, x_rep)?;
    let (q_mean, q_log_std) = split_head(tape, q_head)?;

    let (branch_ll, p_mean, p_log_std) = branch_likelihood(model, tape, s, x_rep, draws)?;

    let lls = tape.value(branch_ll).data().to_vec();
    let mode = model.config.weighting_mode;
    let selected = draws.indices(|rng| {
        lls.chunks(k)
            .map(|row| select_branch(row, mode, rng))
            .collect()
    })?;
    let rows: Vec<usize> = selected
        .iter()
        .enumerate()
        .map(|(i, &j)| i * k + j)
        .collect();

    let next = BatchState {
        mean: tape.gather_rows(q_mean, &rows)?,
        log_std: tape.gather_rows(q_log_std, &rows)?,
        h: tape.gather_rows(s, &rows)?,
    };
    Ok(BranchStep {
        next,
        s,
        q_mean,
        q_log_std,
        p_mean,
        p_log_std,
        branch_ll,
        selected,
        rows,
    })
}

/// `(B, T, d)` observations sliced at step `t` into a `(B, d)` constant.
pub fn step_rows(tape: &mut Tape, batch: &[&[Vec<f64>]], t: usize) -> Result<Var> {
    let rows: Vec<&[f64]> = batch.iter().map(|seq| seq[t].as_slice()).collect();
    let a = DenseArray::from_rows(&rows)?;
    Ok(tape.constant(a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn delta_selection_examples() {
        let mut rng = VdmRng::seed_from_u64(0);
        let ll: Vec<f64> = [0.2f64, 0.5, 0.3].iter().map(|p| p.ln()).collect();
        assert_eq!(
            select_branch(&ll, WeightingMode::Delta, &mut rng).unwrap(),
            1
        );
        assert_eq!(
            select_branch(&[-3.0], WeightingMode::Delta, &mut rng).unwrap(),
            0
        );
        assert_eq!(
            select_branch(&[-1.0, -1.0, -1.0], WeightingMode::Delta, &mut rng).unwrap(),
            0
        );
    }

    #[test]
    fn invalid_likelihoods_rejected() {
        let mut rng = VdmRng::seed_from_u64(0);
        for mode in [WeightingMode::Delta, WeightingMode::Categorical] {
            assert!(select_branch(&[f64::NAN, 0.0], mode, &mut rng).is_err());
            assert!(select_branch(&[f64::NEG_INFINITY; 3], mode, &mut rng).is_err());
        }
    }

    #[test]
    fn categorical_frequencies_follow_likelihood() {
        let mut rng = VdmRng::seed_from_u64(5);
        let p = [0.2f64, 0.5, 0.3];
        let ll: Vec<f64> = p.iter().map(|v| v.ln() + 40.0).collect();
        let n = 20_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[select_branch(&ll, WeightingMode::Categorical, &mut rng).unwrap()] += 1;
        }
        for (c, p) in counts.iter().zip(p) {
            let f = *c as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((f - p).abs() < 4.0 * se, "{f} vs {p}");
        }
    }
}
