use super::belief::MixtureBelief;
use super::draws::Draws;
use super::engine::{reparam, repeat_index};
use crate::diffcore::{gaussian_log_pdf, split_head, DenseArray, DiagGaussian, Tape, HALF_LOG_2PI};
use crate::error::{Result, VdmError};
use crate::nets::Model;
use crate::sampling::abscissa_matrix;
use crate::VdmRng;

/// Samples `horizon` observations for every row of a collapsed state.
///
/// `mean`/`log_std` are `(n, d_z)` and `h` is the matching `(n, d_h)` previous
/// recurrent state. Returns one `(n, d_x)` array per future step.
pub fn generate_rows(
    model: &Model,
    mean: &DenseArray,
    log_std: &DenseArray,
    h: &DenseArray,
    horizon: usize,
    draws: &mut Draws,
) -> Result<Vec<DenseArray>> {
    if horizon == 0 {
        return Err(VdmError::Invalid("horizon must be positive".into()));
    }
    let (n, dz) = mean.dims();
    let dx = model.config.d_x;

    let mut tape = Tape::new();
    let m = tape.constant(mean.clone());
    let ls = tape.constant(log_std.clone());
    let z = reparam(&mut tape, m, ls, draws.normal(n, dz)?)?;
    let hv = tape.constant(h.clone());
    let h_next = model.gru_step(&mut tape, z, hv)?;
    let mut h = tape.value(h_next).clone();

    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mut tape = Tape::new();
        let hv = tape.constant(h);
        let prior = model.transition_head(&mut tape, hv)?;
        let (pm, pls) = split_head(&mut tape, prior)?;
        let z = reparam(&mut tape, pm, pls, draws.normal(n, dz)?)?;
        let h_next = model.gru_step(&mut tape, z, hv)?;
        let dec = model.decoder_head(&mut tape, z, hv)?;
        let (xm, xls) = split_head(&mut tape, dec)?;
        let x = reparam(&mut tape, xm, xls, draws.normal(n, dx)?)?;
        out.push(tape.value(x).clone());
        h = tape.value(h_next).clone();
    }
    Ok(out)
}

/// `n` sampled continuations of length `horizon`, each `horizon x d_x`.
pub fn generate_many(
    model: &Model,
    belief: &MixtureBelief,
    horizon: usize,
    n: usize,
    draws: &mut Draws,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let g = &belief.collapsed;
    let mean = DenseArray::from_rows(&vec![g.mean.clone(); n])?;
    let ls: Vec<f64> = g.std.iter().map(|s| s.ln()).collect();
    let log_std = DenseArray::from_rows(&vec![ls; n])?;
    let h = DenseArray::from_rows(&vec![belief.expected_h.clone(); n])?;
    let steps = generate_rows(model, &mean, &log_std, &h, horizon, draws)?;
    Ok((0..n)
        .map(|i| steps.iter().map(|s| s.row(i).to_vec()).collect())
        .collect())
}

/// One sampled continuation.
pub fn generate(
    model: &Model,
    belief: &MixtureBelief,
    horizon: usize,
    rng: &mut VdmRng,
) -> Result<Vec<Vec<f64>>> {
    let mut draws = Draws::fork(rng);
    Ok(generate_many(model, belief, horizon, 1, &mut draws)?.remove(0))
}

/// Latent offsets used for the closed-form one-step predictive: the cubature
/// abscissas, or just the mean for single-sample models.
fn predictive_offsets(model: &Model) -> DenseArray {
    if model.config.k == 1 {
        DenseArray::zeros(&[1, model.config.d_z])
    } else {
        abscissa_matrix(model.config.d_z, model.config.kappa)
    }
}

/// One-step predictive mixtures of a batch: `(B*m, d_x)` means and log-stds
/// plus the component count `m`.
pub fn one_step_rows(
    model: &Model,
    mean: &DenseArray,
    log_std: &DenseArray,
    h: &DenseArray,
) -> Result<(DenseArray, DenseArray, usize)> {
    let offsets = predictive_offsets(model);
    let m = offsets.rows();
    let b = mean.rows();
    let rep = repeat_index(b, m);
    let mut noise = DenseArray::zeros(&[b * m, model.config.d_z]);
    for r in 0..b * m {
        noise.row_mut(r).copy_from_slice(offsets.row(r % m));
    }
    let mut tape = Tape::new();
    let mv = tape.constant(mean.gather_rows(&rep));
    let lv = tape.constant(log_std.gather_rows(&rep));
    let hv = tape.constant(h.gather_rows(&rep));
    let z = reparam(&mut tape, mv, lv, noise)?;
    let s = model.gru_step(&mut tape, z, hv)?;
    let prior = model.transition_head(&mut tape, s)?;
    let (pm, _) = split_head(&mut tape, prior)?;
    let dec = model.decoder_head(&mut tape, pm, s)?;
    let (xm, xls) = split_head(&mut tape, dec)?;
    Ok((tape.value(xm).clone(), tape.value(xls).clone(), m))
}

/// Equal-weight Gaussian mixture over the next observation.
pub fn one_step_predictive(model: &Model, belief: &MixtureBelief) -> Result<Vec<DiagGaussian>> {
    let g = &belief.collapsed;
    let mean = DenseArray::row_vector(g.mean.clone());
    let log_std = DenseArray::row_vector(g.std.iter().map(|s| s.ln()).collect());
    let h = DenseArray::row_vector(belief.expected_h.clone());
    let (xm, xls, m) = one_step_rows(model, &mean, &log_std, &h)?;
    (0..m)
        .map(|i| {
            DiagGaussian::new(
                xm.row(i).to_vec(),
                xls.row(i).iter().map(|v| v.exp()).collect(),
            )
        })
        .collect()
}

/// Log-density of an equal-weight mixture, stabilized by log-sum-exp.
pub fn mixture_log_pdf(components: &[DiagGaussian], x: &[f64]) -> Result<f64> {
    let lps = components
        .iter()
        .map(|c| gaussian_log_pdf(x, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(log_mean_exp(&lps))
}

/// `log((1/n) sum exp(v_i))`.
pub fn log_mean_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let s: f64 = v.iter().map(|x| (x - max).exp()).sum();
    max + s.ln() - (v.len() as f64).ln()
}

/// Row-wise equal-weight mixture log-density from `(B*m, d)` component arrays.
pub fn mixture_rows_log_pdf(
    x: &DenseArray,
    means: &DenseArray,
    log_stds: &DenseArray,
    m: usize,
) -> Vec<f64> {
    (0..x.rows())
        .map(|b| {
            let xr = x.row(b);
            let lps: Vec<f64> = (b * m..(b + 1) * m)
                .map(|r| {
                    xr.iter()
                        .zip(means.row(r))
                        .zip(log_stds.row(r))
                        .map(|((x, mu), ls)| {
                            let u = (x - mu) * (-ls).exp();
                            -HALF_LOG_2PI - ls - 0.5 * u * u
                        })
                        .sum()
                })
                .collect();
            log_mean_exp(&lps)
        })
        .collect()
}

/// Draws from the predictive prior over the latent at each filtered step: an
/// equal-weight mixture of transition priors at the belief's branch states.
pub fn export_predictive_prior(
    model: &Model,
    beliefs: &[MixtureBelief],
    n: usize,
    rng: &mut VdmRng,
) -> Result<Vec<Vec<Vec<f64>>>> {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut out = Vec::with_capacity(beliefs.len());
    for belief in beliefs {
        let priors = belief
            .branch_states
            .iter()
            .map(|s| model.transition_prior(s))
            .collect::<Result<Vec<_>>>()?;
        let draws = (0..n)
            .map(|_| {
                let p = &priors[rng.random_range(0..priors.len())];
                p.mean
                    .iter()
                    .zip(&p.std)
                    .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        out.push(draws);
    }
    Ok(out)
}
