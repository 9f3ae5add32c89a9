//! The parameterized networks: encoder, transition, decoder, inference
//! network, latent GRU and the conditional discriminator.

mod config;
mod layers;
mod model;

pub use config::{BranchLatent, ModelConfig, SamplerMode, WeightingMode};
pub use layers::{GruCell, Linear, Mlp};
pub use model::{
    Discriminator, Model, DECODER_HIDDEN, DISCRIMINATOR_HIDDEN, ENCODER_HIDDEN, INFERENCE_HIDDEN,
    TRANSITION_HIDDEN,
};
