//! Training losses and the training loop.

mod loss;
mod terms;
mod train;

pub use loss::{
    build_loss, log_mean_exp_rows, selected_elbo, weight_entropy, LossBreakdown, LossGraph,
    StepTerms, D_CLAMP,
};
pub use terms::{
    adv_regularizer, elbo_initial, elbo_step, pred_from_log_likelihoods, pred_regularizer,
    total_loss,
};
pub use train::{train, validation_nll, EpochMetrics, TrainConfig, TrainOutcome};
