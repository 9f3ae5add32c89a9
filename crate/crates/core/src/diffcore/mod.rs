//! Dense arrays, reverse-mode differentiation and the Adam optimizer.

mod array;
mod gaussian;
mod params;
mod tape;

pub use array::DenseArray;
pub use gaussian::{
    gaussian_kl, gaussian_log_pdf, head_row_to_gaussian, kl_rows, log_pdf_rows, split_head,
    DiagGaussian, HALF_LOG_2PI, LOG_STD_BOUND,
};
pub use params::{AdamConfig, ParamId, ParameterStore};
pub use tape::{Gradients, Tape, Var};
