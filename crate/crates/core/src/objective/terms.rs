//! Single-sequence versions of the loss terms.

use super::loss::{
    build_loss, initial_elbo, log_mean_exp_rows, neg_log_complement, neg_log_prob, selected_elbo,
    LossBreakdown,
};
use crate::data::Trajectory;
use crate::diffcore::{DenseArray, Tape};
use crate::error::{Result, VdmError};
use crate::inference::engine::{branch_step, BatchState};
use crate::inference::{BatchBelief, Draws, MixtureBelief};
use crate::nets::{Discriminator, Model};

fn state_of(tape: &mut Tape, belief: &MixtureBelief) -> Result<BatchState> {
    let b = BatchBelief::from_beliefs(&[belief])?;
    Ok(BatchState {
        mean: tape.constant(b.mean),
        log_std: tape.constant(b.log_std),
        h: tape.constant(b.h),
    })
}

fn finite(v: f64, step: usize, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(VdmError::LossNotFinite {
            step,
            msg: what.into(),
        })
    }
}

/// ELBO of the first observation.
pub fn elbo_initial(model: &Model, x: &[f64], draws: &mut Draws) -> Result<f64> {
    let mut tape = Tape::new();
    let xv = tape.constant(DenseArray::row_vector(x.to_vec()));
    let (_, e) = initial_elbo(model, &mut tape, xv, draws)?;
    finite(tape.scalar(e), 0, "elbo")
}

/// ELBO of observation `x` given the belief after the previous step; runs the
/// filter step (branch sampling and weighting) internally.
pub fn elbo_step(model: &Model, prev: &MixtureBelief, x: &[f64], draws: &mut Draws) -> Result<f64> {
    let mut tape = Tape::new();
    let state = state_of(&mut tape, prev)?;
    let xv = tape.constant(DenseArray::row_vector(x.to_vec()));
    let step = branch_step(model, &mut tape, &state, xv, draws)?;
    let e = selected_elbo(model, &mut tape, &step, xv, draws)?;
    finite(tape.scalar(e), 1, "elbo")
}

/// `log((1/k) sum_i p(x | s_i))` over the branches of the next filter step.
pub fn pred_regularizer(
    model: &Model,
    prev: &MixtureBelief,
    x: &[f64],
    draws: &mut Draws,
) -> Result<f64> {
    let mut tape = Tape::new();
    let state = state_of(&mut tape, prev)?;
    let xv = tape.constant(DenseArray::row_vector(x.to_vec()));
    let step = branch_step(model, &mut tape, &state, xv, draws)?;
    let v = log_mean_exp_rows(&mut tape, step.branch_ll, 1, model.config.k)?;
    Ok(tape.scalar(v))
}

/// `log((1/k) sum_i exp(ll_i))` of branch log-likelihoods.
pub fn pred_from_log_likelihoods(lls: &[f64]) -> f64 {
    crate::inference::log_mean_exp(lls)
}

/// Generator and discriminator losses for one real and one generated
/// observation after `prefix`.
pub fn adv_regularizer(
    disc: &Discriminator,
    prefix: &[Vec<f64>],
    x_real: &[f64],
    x_gen: &[f64],
) -> Result<(f64, f64)> {
    let summary = disc.summarize(prefix)?;
    let mut tape = Tape::new();
    let h = tape.constant(DenseArray::row_vector(summary));
    let real = tape.constant(DenseArray::row_vector(x_real.to_vec()));
    let gen = tape.constant(DenseArray::row_vector(x_gen.to_vec()));
    let d_gen = disc.prob(&mut tape, h, gen)?;
    let d_real = disc.prob(&mut tape, h, real)?;
    let g = neg_log_prob(&mut tape, d_gen);
    let r = neg_log_prob(&mut tape, d_real);
    let f = neg_log_complement(&mut tape, d_gen);
    let dl = tape.add(r, f)?;
    Ok((tape.scalar(g), tape.scalar(dl)))
}

/// All loss terms of one trajectory.
pub fn total_loss(
    model: &Model,
    disc: Option<&Discriminator>,
    trajectory: &Trajectory,
    draws: &mut Draws,
) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let seq = [trajectory.observations.as_slice()];
    Ok(build_loss(model, disc, &mut tape, &seq, draws)?.breakdown)
}
