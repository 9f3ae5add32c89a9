use rand::Rng;

use crate::diffcore::{kl_rows, log_pdf_rows, split_head, DenseArray, Tape, Var};
use crate::error::{Result, VdmError};
use crate::inference::engine::{
    branch_step, init_state, reparam, step_rows, BatchState, BranchStep,
};
use crate::inference::Draws;
use crate::nets::{Discriminator, Model};

/// Bounds applied to discriminator outputs before taking logs.
pub const D_CLAMP: f64 = 1e-6;

/// Per-step loss terms, averaged over the sequences of a batch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepTerms {
    pub elbo: f64,
    pub pred: f64,
    pub adv: f64,
    pub disc: f64,
}

/// Loss values of a batch, averaged over sequences and summed over steps.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub elbo: f64,
    pub pred: f64,
    pub adv: f64,
    /// Discriminator loss; zero when the adversarial term is off.
    pub disc: f64,
    /// `-elbo - omega1 * pred + omega2 * adv`.
    pub total: f64,
    pub per_step: Vec<StepTerms>,
}

/// Tape handles of a batch loss.
pub struct LossGraph {
    /// Scalar minimized by the model.
    pub model_loss: Var,
    /// Scalar minimized by the discriminator, when the adversarial term is on.
    pub disc_loss: Option<Var>,
    pub breakdown: LossBreakdown,
}

fn col_mean(tape: &Tape, v: Var) -> f64 {
    let a = tape.value(v);
    a.sum() / a.len() as f64
}

/// `log((1/k) sum_i exp(ll_i))` for each row of a `(B*k, 1)` column, as `(B, 1)`.
pub fn log_mean_exp_rows(tape: &mut Tape, ll: Var, b: usize, k: usize) -> Result<Var> {
    let m = tape.reshape(ll, &[b, k])?;
    let vals = tape.value(m).clone();
    let max: Vec<f64> = (0..b)
        .map(|r| {
            vals.row(r)
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    if max.iter().any(|v| !v.is_finite()) {
        return Err(VdmError::NonFinite("branch log-likelihood".into()));
    }
    let shift = DenseArray::matrix(
        b,
        k,
        max.iter()
            .flat_map(|&v| std::iter::repeat_n(v, k))
            .collect(),
    )?;
    let shift = tape.constant(shift);
    let centered = tape.sub(m, shift)?;
    let e = tape.exp(centered);
    let s = tape.row_sum(e);
    let l = tape.log(s);
    let offset = DenseArray::matrix(b, 1, max.iter().map(|v| v - (k as f64).ln()).collect())?;
    let offset = tape.constant(offset);
    tape.add(l, offset)
}

/// `-log clamp(p)` element-wise.
pub fn neg_log_prob(tape: &mut Tape, p: Var) -> Var {
    let c = tape.clamp(p, D_CLAMP, 1.0 - D_CLAMP);
    let l = tape.log(c);
    tape.neg(l)
}

/// `-log clamp(1 - p)` element-wise.
pub fn neg_log_complement(tape: &mut Tape, p: Var) -> Var {
    let q = tape.neg(p);
    let q = tape.add_scalar(q, 1.0);
    neg_log_prob(tape, q)
}

/// Reconstruction minus KL with one reparameterized latent per row.
fn elbo_rows(
    model: &Model,
    tape: &mut Tape,
    q: (Var, Var),
    p: (Var, Var),
    h_prev: Var,
    x: Var,
    draws: &mut Draws,
) -> Result<Var> {
    let (rows, dz) = tape.value(q.0).dims();
    let z = reparam(tape, q.0, q.1, draws.normal(rows, dz)?)?;
    let dec = model.decoder_head(tape, z, h_prev)?;
    let (xm, xls) = split_head(tape, dec)?;
    let ll = log_pdf_rows(tape, x, xm, xls)?;
    let kl = kl_rows(tape, q.0, q.1, p.0, p.1)?;
    tape.sub(ll, kl)
}

/// Per-sequence ELBO of a filter step: the selected branch's reconstruction
/// minus KL, minus `log k` from the indicator weights `omega = k * 1(i = j)`.
pub fn selected_elbo(
    model: &Model,
    tape: &mut Tape,
    step: &BranchStep,
    x: Var,
    draws: &mut Draws,
) -> Result<Var> {
    let p_mean = tape.gather_rows(step.p_mean, &step.rows)?;
    let p_log_std = tape.gather_rows(step.p_log_std, &step.rows)?;
    let q = (step.next.mean, step.next.log_std);
    let e = elbo_rows(model, tape, q, (p_mean, p_log_std), step.next.h, x, draws)?;
    Ok(tape.add_scalar(e, -weight_entropy(model.config.k)))
}

/// `(1/k) sum_i omega_i log omega_i` for indicator weights scaled to sum to `k`.
pub fn weight_entropy(k: usize) -> f64 {
    (k as f64).ln()
}

/// First-step ELBO: encoder posterior against the transition prior at `h = 0`.
pub fn initial_elbo(
    model: &Model,
    tape: &mut Tape,
    x0: Var,
    draws: &mut Draws,
) -> Result<(BatchState, Var)> {
    let (state, mean, log_std) = init_state(model, tape, x0)?;
    let prior = model.transition_head(tape, state.h)?;
    let p0 = split_head(tape, prior)?;
    let e0 = elbo_rows(model, tape, (mean, log_std), p0, state.h, x0, draws)?;
    Ok((state, e0))
}

/// Builds the training loss of a batch of equally long sequences.
///
/// Draw order per step: the filter's draws, the reconstruction latent, then
/// (adversarial term on) the generating branch, its latent and its
/// observation noise.
pub fn build_loss(
    model: &Model,
    disc: Option<&Discriminator>,
    tape: &mut Tape,
    batch: &[&[Vec<f64>]],
    draws: &mut Draws,
) -> Result<LossGraph> {
    let cfg = &model.config;
    let b = batch.len();
    let len = batch.first().map_or(0, |s| s.len());
    if b == 0 || len < 2 {
        return Err(VdmError::Invalid(
            "loss needs sequences of length >= 2".into(),
        ));
    }
    if batch.iter().any(|s| s.len() != len) {
        return Err(VdmError::Invalid("batch sequences differ in length".into()));
    }
    let use_adv = cfg.omega2 > 0.0;
    let disc = if use_adv {
        Some(disc.ok_or_else(|| VdmError::Config("adversarial term needs a discriminator".into()))?)
    } else {
        None
    };
    let mut per_step = Vec::with_capacity(len);

    // First step: encoder posterior against the transition prior at h = 0.
    let x0 = step_rows(tape, batch, 0)?;
    let (mut state, e0) = initial_elbo(model, tape, x0, draws)?;
    per_step.push(StepTerms {
        elbo: col_mean(tape, e0),
        ..Default::default()
    });
    // Per-sequence model loss and discriminator loss columns.
    let mut acc = tape.neg(e0);
    let mut disc_acc: Option<Var> = None;

    let zero_summary = DenseArray::zeros(&[b, cfg.d_h]);
    let mut summary = tape.constant(zero_summary);

    for t in 1..len {
        let x = step_rows(tape, batch, t)?;
        let x_prev = step_rows(tape, batch, t - 1)?;
        let step = branch_step(model, tape, &state, x, draws)?;

        let e = selected_elbo(model, tape, &step, x, draws)?;
        let mut terms = StepTerms {
            elbo: col_mean(tape, e),
            ..Default::default()
        };
        if !terms.elbo.is_finite() {
            return Err(VdmError::LossNotFinite {
                step: t,
                msg: "elbo".into(),
            });
        }
        let ne = tape.neg(e);
        acc = tape.add(acc, ne)?;

        if cfg.omega1 > 0.0 {
            let pred = log_mean_exp_rows(tape, step.branch_ll, b, cfg.k)?;
            terms.pred = col_mean(tape, pred);
            let w = tape.scale(pred, -cfg.omega1);
            acc = tape.add(acc, w)?;
        }

        if let Some(disc) = disc {
            summary = disc.summary_step(tape, x_prev, summary)?;
            let k = cfg.k;
            let picks =
                draws.indices(|rng| Ok((0..b).map(|_| rng.random_range(0..k)).collect()))?;
            let rows: Vec<usize> = picks.iter().enumerate().map(|(i, &j)| i * k + j).collect();
            let s = tape.gather_rows(step.s, &rows)?;
            let head = model.transition_head(tape, s)?;
            let (pm, pls) = split_head(tape, head)?;
            let z = reparam(tape, pm, pls, draws.normal(b, cfg.d_z)?)?;
            let dec = model.decoder_head(tape, z, s)?;
            let (xm, xls) = split_head(tape, dec)?;
            let x_gen = reparam(tape, xm, xls, draws.normal(b, cfg.d_x)?)?;

            let d_gen = disc.prob(tape, summary, x_gen)?;
            let gen = neg_log_prob(tape, d_gen);
            terms.adv = col_mean(tape, gen);
            let w = tape.scale(gen, cfg.omega2);
            acc = tape.add(acc, w)?;

            let fake = tape.detach(x_gen);
            let d_real = disc.prob(tape, summary, x)?;
            let d_fake = disc.prob(tape, summary, fake)?;
            let lr = neg_log_prob(tape, d_real);
            let lf = neg_log_complement(tape, d_fake);
            let dl = tape.add(lr, lf)?;
            terms.disc = col_mean(tape, dl);
            disc_acc = Some(match disc_acc {
                Some(a) => tape.add(a, dl)?,
                None => dl,
            });
        }
        per_step.push(terms);
        state = step.next;
    }

    let model_loss = tape.mean(acc);
    let disc_loss = disc_acc.map(|d| tape.mean(d));
    let total = tape.scalar(model_loss);
    if !total.is_finite() {
        return Err(VdmError::NonFinite("training loss".into()));
    }
    let sum = |f: fn(&StepTerms) -> f64| per_step.iter().map(f).sum::<f64>();
    let breakdown = LossBreakdown {
        elbo: sum(|s| s.elbo),
        pred: sum(|s| s.pred),
        adv: sum(|s| s.adv),
        disc: sum(|s| s.disc),
        total,
        per_step,
    };
    Ok(LossGraph {
        model_loss,
        disc_loss,
        breakdown,
    })
}
