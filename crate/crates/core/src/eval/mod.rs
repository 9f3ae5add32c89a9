//! Sample NLL, one-step NLL and empirical Wasserstein distance.

mod forecaster;
mod metrics;
mod nll;
mod report;
mod wasserstein;

pub use forecaster::{
    ConstantForecaster, Forecaster, Forecasts, ModelForecaster, ReplayForecaster,
};
pub use metrics::{multi_step_nll_dataset, one_step_nll, w_distance_protocol, MetricValue};
pub use nll::{multi_step_nll, ForecastBundle, NllOptions, NllReduction};
pub use report::{MetricReport, MetricRow};
pub use wasserstein::{hungarian, wasserstein, wasserstein_brute_force};
