use super::array::DenseArray;
use super::tape::{Tape, Var};
use crate::error::{Result, VdmError};

pub const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_7;

/// Raw network outputs for log-std are clamped to this range before `exp`.
pub const LOG_STD_BOUND: f64 = 10.0;

/// Diagonal Gaussian over a vector.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(VdmError::Shape {
                op: "DiagGaussian",
                left: vec![mean.len()],
                right: vec![std.len()],
            });
        }
        if mean.iter().chain(&std).any(|v| !v.is_finite()) {
            return Err(VdmError::NonFinite("DiagGaussian".into()));
        }
        Ok(Self { mean, std })
    }

    pub fn standard(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            std: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check_std(&self, what: &str) -> Result<()> {
        if self.std.iter().any(|&s| s.is_nan() || s <= 0.0) {
            return Err(VdmError::NonPositiveStd(what.into()));
        }
        Ok(())
    }

    pub fn log_pdf(&self, x: &[f64]) -> Result<f64> {
        gaussian_log_pdf(x, self)
    }
}

/// Log-density of `x` under `g`.
pub fn gaussian_log_pdf(x: &[f64], g: &DiagGaussian) -> Result<f64> {
    g.check_std("gaussian_log_pdf")?;
    if x.len() != g.dim() {
        return Err(VdmError::Shape {
            op: "gaussian_log_pdf",
            left: vec![x.len()],
            right: vec![g.dim()],
        });
    }
    Ok(x.iter()
        .zip(&g.mean)
        .zip(&g.std)
        .map(|((&x, &m), &s)| {
            let u = (x - m) / s;
            -HALF_LOG_2PI - s.ln() - 0.5 * u * u
        })
        .sum())
}

/// Closed-form `KL(q || p)` for diagonal Gaussians.
pub fn gaussian_kl(q: &DiagGaussian, p: &DiagGaussian) -> Result<f64> {
    q.check_std("gaussian_kl")?;
    p.check_std("gaussian_kl")?;
    if q.dim() != p.dim() {
        return Err(VdmError::Shape {
            op: "gaussian_kl",
            left: vec![q.dim()],
            right: vec![p.dim()],
        });
    }
    let mut kl = 0.0;
    for j in 0..q.dim() {
        let (mq, sq, mp, sp) = (q.mean[j], q.std[j], p.mean[j], p.std[j]);
        let dm = mq - mp;
        kl += sp.ln() - sq.ln() + (sq * sq + dm * dm) / (2.0 * sp * sp) - 0.5;
    }
    Ok(kl.max(0.0))
}

/// Row-wise log-density on the tape: inputs are `(n, d)`, output is `(n, 1)`.
/// The std is given as its logarithm.
pub fn log_pdf_rows(tape: &mut Tape, x: Var, mean: Var, log_std: Var) -> Result<Var> {
    let diff = tape.sub(x, mean)?;
    let neg = tape.neg(log_std);
    let inv = tape.exp(neg);
    let u = tape.mul(diff, inv)?;
    let u2 = tape.square(u);
    let half = tape.scale(u2, -0.5);
    let t = tape.sub(half, log_std)?;
    let t = tape.add_scalar(t, -HALF_LOG_2PI);
    Ok(tape.row_sum(t))
}

/// Row-wise `KL(q || p)` on the tape, `(n, d)` inputs to `(n, 1)`.
pub fn kl_rows(
    tape: &mut Tape,
    mean_q: Var,
    log_std_q: Var,
    mean_p: Var,
    log_std_p: Var,
) -> Result<Var> {
    let dls = tape.sub(log_std_p, log_std_q)?;
    let two_q = tape.scale(log_std_q, 2.0);
    let var_q = tape.exp(two_q);
    let dm = tape.sub(mean_q, mean_p)?;
    let dm2 = tape.square(dm);
    let num = tape.add(var_q, dm2)?;
    let neg_two_p = tape.scale(log_std_p, -2.0);
    let inv_var_p = tape.exp(neg_two_p);
    let ratio = tape.mul(num, inv_var_p)?;
    let half = tape.scale(ratio, 0.5);
    let t = tape.add(dls, half)?;
    let t = tape.add_scalar(t, -0.5);
    Ok(tape.row_sum(t))
}

/// Splits a `(n, 2d)` head into mean and clamped log-std halves.
pub fn split_head(tape: &mut Tape, head: Var) -> Result<(Var, Var)> {
    let c = tape.value(head).cols();
    let d = c / 2;
    let mean = tape.slice_cols(head, 0, d)?;
    let raw = tape.slice_cols(head, d, c)?;
    let log_std = tape.clamp(raw, -LOG_STD_BOUND, LOG_STD_BOUND);
    Ok((mean, log_std))
}

/// Converts one row of a `(n, 2d)` head array into a [`DiagGaussian`].
pub fn head_row_to_gaussian(head: &DenseArray, row: usize) -> Result<DiagGaussian> {
    let r = head.row(row);
    let d = r.len() / 2;
    let mean = r[..d].to_vec();
    let std = r[d..]
        .iter()
        .map(|&v| v.clamp(-LOG_STD_BOUND, LOG_STD_BOUND).exp())
        .collect();
    DiagGaussian::new(mean, std)
}
