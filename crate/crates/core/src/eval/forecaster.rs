use crate::data::Trajectory;
use crate::diffcore::DenseArray;
use crate::error::{Result, VdmError};
use crate::inference::engine::repeat_index;
use crate::inference::{filter_batch, generate_rows, Draws};
use crate::nets::Model;

/// `forecasts[i][f][t]`: step `t` of forecast `f` for trajectory `i`.
pub type Forecasts = Vec<Vec<Vec<Vec<f64>>>>;

/// Anything that can produce sampled continuations from trajectory prefixes.
pub trait Forecaster {
    fn forecast(
        &self,
        trajectories: &[&Trajectory],
        horizon: usize,
        n: usize,
        draws: &mut Draws,
    ) -> Result<Forecasts>;
}

/// Groups indices by prefix length so each batch filters equally long prefixes.
pub(crate) fn batches_by<K: Ord + Copy>(
    trajectories: &[&Trajectory],
    key: impl Fn(&Trajectory) -> K,
    max_batch: usize,
) -> Vec<Vec<usize>> {
    let mut keys: Vec<K> = trajectories.iter().map(|t| key(t)).collect();
    keys.sort();
    keys.dedup();
    let mut out = Vec::new();
    for k in keys {
        let idx: Vec<usize> = (0..trajectories.len())
            .filter(|&i| key(trajectories[i]) == k)
            .collect();
        out.extend(idx.chunks(max_batch.max(1)).map(<[usize]>::to_vec));
    }
    out
}

/// Forecasts by filtering the prefix and running the generative model.
pub struct ModelForecaster<'a> {
    pub model: &'a Model,
    /// Upper bound on simultaneously generated rows.
    pub max_rows: usize,
}

impl<'a> ModelForecaster<'a> {
    pub fn new(model: &'a Model) -> Self {
        Self {
            model,
            max_rows: 8192,
        }
    }
}

impl Forecaster for ModelForecaster<'_> {
    fn forecast(
        &self,
        trajectories: &[&Trajectory],
        horizon: usize,
        n: usize,
        draws: &mut Draws,
    ) -> Result<Forecasts> {
        if n == 0 {
            return Err(VdmError::Invalid("need at least one forecast".into()));
        }
        let mut out: Forecasts = vec![Vec::new(); trajectories.len()];
        let per_batch = (self.max_rows / n).max(1);
        for idx in batches_by(trajectories, |t| t.prefix_len, per_batch) {
            let prefixes: Vec<&[Vec<f64>]> =
                idx.iter().map(|&i| trajectories[i].prefix()).collect();
            let beliefs = filter_batch(self.model, &prefixes, draws)?;
            let last = beliefs.last().expect("nonempty prefix");
            let rep = repeat_index(idx.len(), n);
            let steps = generate_rows(
                self.model,
                &last.mean.gather_rows(&rep),
                &last.log_std.gather_rows(&rep),
                &last.h.gather_rows(&rep),
                horizon,
                draws,
            )?;
            for (b, &i) in idx.iter().enumerate() {
                out[i] = (0..n)
                    .map(|f| steps.iter().map(|s| s.row(b * n + f).to_vec()).collect())
                    .collect();
            }
        }
        Ok(out)
    }
}

/// Test double that returns each trajectory's true continuation `n` times.
pub struct ReplayForecaster;

impl Forecaster for ReplayForecaster {
    fn forecast(
        &self,
        trajectories: &[&Trajectory],
        horizon: usize,
        n: usize,
        _draws: &mut Draws,
    ) -> Result<Forecasts> {
        trajectories
            .iter()
            .map(|t| {
                if t.horizon() < horizon {
                    return Err(VdmError::Invalid("replay horizon exceeds data".into()));
                }
                Ok(vec![t.continuation()[..horizon].to_vec(); n])
            })
            .collect()
    }
}

/// Test double that always predicts the same observation.
pub struct ConstantForecaster(pub Vec<f64>);

impl Forecaster for ConstantForecaster {
    fn forecast(
        &self,
        trajectories: &[&Trajectory],
        horizon: usize,
        n: usize,
        _draws: &mut Draws,
    ) -> Result<Forecasts> {
        Ok(vec![
            vec![vec![self.0.clone(); horizon]; n];
            trajectories.len()
        ])
    }
}

pub(crate) fn rows_of(trajectories: &[&Trajectory], t: usize) -> Result<DenseArray> {
    let rows: Vec<&[f64]> = trajectories
        .iter()
        .map(|tr| tr.observations[t].as_slice())
        .collect();
    DenseArray::from_rows(&rows)
}
