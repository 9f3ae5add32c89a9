use serde::{Deserialize, Serialize};

use crate::diffcore::HALF_LOG_2PI;
use crate::error::{Result, VdmError};
use crate::inference::log_mean_exp;

/// How squared forecast errors are reduced inside the sample NLL.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NllReduction {
    /// Mean over horizon steps and dimensions.
    #[default]
    Mean,
    /// Sum over horizon steps and dimensions.
    Sum,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NllOptions {
    pub reduction: NllReduction,
    /// Apply the `(2 pi)^(-1/2)` factor once per coordinate instead of once.
    #[serde(default)]
    pub per_dim_constant: bool,
}

/// One ground-truth continuation and `n` forecasts of it.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastBundle {
    pub ground_truth: Vec<Vec<f64>>,
    pub forecasts: Vec<Vec<Vec<f64>>>,
}

impl ForecastBundle {
    pub fn new(ground_truth: Vec<Vec<f64>>, forecasts: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let b = Self {
            ground_truth,
            forecasts,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.forecasts.is_empty() {
            return Err(VdmError::Invalid(
                "bundle needs at least one forecast".into(),
            ));
        }
        let shape = |p: &[Vec<f64>]| p.iter().map(Vec::len).collect::<Vec<_>>();
        let want = shape(&self.ground_truth);
        for (i, f) in self.forecasts.iter().enumerate() {
            let got = shape(f);
            if got != want {
                return Err(VdmError::Shape {
                    op: "forecast bundle",
                    left: vec![want.len(), want.first().copied().unwrap_or(0)],
                    right: vec![i, got.len(), got.first().copied().unwrap_or(0)],
                });
            }
        }
        Ok(())
    }
}

/// Sample-based negative log-likelihood of the ground truth:
/// `-log((1/n) sum_i (2 pi)^(-1/2) exp(-e_i / 2))` with `e_i` the reduced
/// squared error of forecast `i`.
pub fn multi_step_nll(bundle: &ForecastBundle, opts: NllOptions) -> Result<f64> {
    bundle.validate()?;
    let coords: usize = bundle.ground_truth.iter().map(Vec::len).sum();
    if coords == 0 {
        return Err(VdmError::Invalid("empty continuation".into()));
    }
    let terms: Vec<f64> = bundle
        .forecasts
        .iter()
        .map(|f| {
            let sq: f64 = f
                .iter()
                .flatten()
                .zip(bundle.ground_truth.iter().flatten())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let e = match opts.reduction {
                NllReduction::Mean => sq / coords as f64,
                NllReduction::Sum => sq,
            };
            -0.5 * e
        })
        .collect();
    let constant = if opts.per_dim_constant {
        HALF_LOG_2PI * coords as f64
    } else {
        HALF_LOG_2PI
    };
    Ok(constant - log_mean_exp(&terms))
}
