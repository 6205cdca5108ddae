//! Dense numerical engine and the four-variant VAE family.

mod checkpoint;
mod config;
mod dense;
mod network;

pub use checkpoint::Checkpoint;
pub use config::{ModelConfig, Variant};
pub use dense::{Dense, Matrix, PROB_FLOOR};
pub(crate) use network::mse;
pub use network::{
    loss, reparameterize, reparameterize_with, standard_normal, Example, Gradients, LatentStats, LossParts, Network,
    LOG_VAR_MAX, LOG_VAR_MIN,
};
