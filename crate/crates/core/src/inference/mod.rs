//! The filtering recursion, branch weighting, forecasting and the one-step
//! predictive density.

mod belief;
mod draws;
pub mod engine;
mod forecast;

pub use belief::{
    belief_init, belief_step, belief_step_with, branch_log_likelihoods, compute_weights,
    filter_batch, filter_sequence, init_batch, step_batch, weights_from_log_likelihoods,
    BatchBelief, MixtureBelief,
};
pub use draws::Draws;
pub use forecast::{
    export_predictive_prior, generate, generate_many, generate_rows, log_mean_exp, mixture_log_pdf,
    mixture_rows_log_pdf, one_step_predictive, one_step_rows,
};
