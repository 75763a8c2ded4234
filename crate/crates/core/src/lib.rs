//! Prototype-conditioned variational autoencoder.
//!
//! The encoder maps an image to a Gaussian posterior; a sample `z` is compared
//! against a bank of prototype vectors, and the tempered softmax of those
//! similarities conditions the decoder alongside `z`. Prototypes are updated
//! by an exponential moving average outside the gradient graph.
//!
//! Besides the model this crate carries the data loaders, the training loop,
//! the VAE + KMeans baseline and three downstream evaluation protocols.

pub mod baselines;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod matrix;
pub mod model;
pub mod nn;
pub mod proto;
pub mod sweep;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, ModelState};
pub use config::{resolve_config, TrainConfig};
pub use error::{Error, Result};
pub use eval::{evaluate, knn_accuracy, linear_probe, statistical_accuracy, EvalReport, MemoryBank};
pub use matrix::Matrix;
pub use model::{elbo_loss, kl_divergence, reparameterize, ArchConfig, LossBreakdown, Vae};
pub use proto::{
    assign, sample_hard, temperature, EmaConvention, HardAssign, PrototypeBank, SimilarityMode, TemperatureSchedule,
};
pub use train::{train, train_unconditional, EpochRecord, TrainHistory, TrainHooks, TrainedModel};
