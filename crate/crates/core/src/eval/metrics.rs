use serde::{Deserialize, Serialize};

use super::forecaster::{batches_by, Forecaster};
use super::nll::{multi_step_nll, ForecastBundle, NllOptions};
use super::wasserstein::wasserstein;
use crate::data::{Dataset, Trajectory};
use crate::error::{Result, VdmError};
use crate::inference::{filter_batch, mixture_rows_log_pdf, one_step_rows, Draws};
use crate::nets::Model;

/// A metric averaged over independent units with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MetricValue {
    pub fn from_samples(v: &[f64]) -> Result<Self> {
        if v.is_empty() {
            return Err(VdmError::Invalid("no samples to average".into()));
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let stderr = if v.len() > 1 {
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Ok(Self {
            value: mean,
            stderr,
            n: v.len(),
        })
    }
}

/// Sample NLL of every continuation from `n` forecasts, averaged over
/// trajectories.
pub fn multi_step_nll_dataset(
    forecaster: &dyn Forecaster,
    dataset: &Dataset,
    n: usize,
    opts: NllOptions,
    draws: &mut Draws,
) -> Result<MetricValue> {
    let trs: Vec<&Trajectory> = dataset.iter().collect();
    let mut values = Vec::with_capacity(trs.len());
    for idx in batches_by(&trs, |t| t.horizon(), usize::MAX) {
        let batch: Vec<&Trajectory> = idx.iter().map(|&i| trs[i]).collect();
        let horizon = batch[0].horizon();
        if horizon == 0 {
            return Err(VdmError::Invalid("trajectory without continuation".into()));
        }
        let forecasts = forecaster.forecast(&batch, horizon, n, draws)?;
        for (t, f) in batch.iter().zip(forecasts) {
            let bundle = ForecastBundle::new(t.continuation().to_vec(), f)?;
            values.push(multi_step_nll(&bundle, opts)?);
        }
    }
    MetricValue::from_samples(&values)
}

/// Negative log-density of each continuation step under the one-step
/// predictive mixture, filtering the true past; averaged per step within a
/// trajectory and then over trajectories.
pub fn one_step_nll(model: &Model, dataset: &Dataset, draws: &mut Draws) -> Result<MetricValue> {
    let trs: Vec<&Trajectory> = dataset.iter().collect();
    let mut values = vec![f64::NAN; trs.len()];
    for idx in batches_by(&trs, |t| (t.len(), t.prefix_len), 256) {
        let batch: Vec<&Trajectory> = idx.iter().map(|&i| trs[i]).collect();
        let (len, prefix) = (batch[0].len(), batch[0].prefix_len);
        if prefix >= len {
            return Err(VdmError::Invalid("trajectory without continuation".into()));
        }
        let past: Vec<&[Vec<f64>]> = batch.iter().map(|t| &t.observations[..len - 1]).collect();
        let beliefs = filter_batch(model, &past, draws)?;
        let mut sums = vec![0.0; batch.len()];
        for t in prefix..len {
            let b = &beliefs[t - 1];
            let (xm, xls, m) = one_step_rows(model, &b.mean, &b.log_std, &b.h)?;
            let x = super::forecaster::rows_of(&batch, t)?;
            for (s, lp) in sums.iter_mut().zip(mixture_rows_log_pdf(&x, &xm, &xls, m)) {
                *s -= lp;
            }
        }
        for (j, &i) in idx.iter().enumerate() {
            values[i] = sums[j] / (len - prefix) as f64;
        }
    }
    MetricValue::from_samples(&values)
}

/// Grouped empirical Wasserstein distance.
///
/// For a group of `n` truths, every truth gets `per_truth` forecasts; set `j`
/// holds the `j`-th forecast of each truth and is compared with the `n` true
/// continuations. The set distances are averaged per group, and the group
/// averages are reported with their standard error.
pub fn w_distance_protocol(
    forecaster: &dyn Forecaster,
    groups: &[Dataset],
    per_truth: usize,
    draws: &mut Draws,
) -> Result<MetricValue> {
    if per_truth == 0 {
        return Err(VdmError::Invalid(
            "need at least one forecast per truth".into(),
        ));
    }
    let mut per_group = Vec::with_capacity(groups.len());
    for (g, group) in groups.iter().enumerate() {
        let trs: Vec<&Trajectory> = group.iter().collect();
        let Some(first) = trs.first() else {
            return Err(VdmError::Invalid(format!("group {g} is empty")));
        };
        let horizon = first.horizon();
        if horizon == 0 || trs.iter().any(|t| t.horizon() != horizon) {
            return Err(VdmError::Invalid(format!(
                "group {g}: continuations must share a positive horizon"
            )));
        }
        let flat = |p: &[Vec<f64>]| p.iter().flatten().copied().collect::<Vec<f64>>();
        let truth: Vec<Vec<f64>> = trs.iter().map(|t| flat(t.continuation())).collect();
        let forecasts = forecaster.forecast(&trs, horizon, per_truth, draws)?;
        let mut total = 0.0;
        for j in 0..per_truth {
            let set: Vec<Vec<f64>> = forecasts.iter().map(|f| flat(&f[j])).collect();
            total += wasserstein(&set, &truth)?;
        }
        per_group.push(total / per_truth as f64);
    }
    MetricValue::from_samples(&per_group)
}
