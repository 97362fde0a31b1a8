//! Minimal neural-network engine: dense and LSTM layers with hand-derived
//! gradients, BCE loss, Adam, and an early-stopping training loop.

pub mod adam;
pub mod dense;
pub mod loss;
pub mod lstm;
pub mod matrix;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use dense::{hard_sigmoid, sigmoid, Activation, Dense, DenseGrads};
pub use loss::{bce_loss, bce_single};
pub use lstm::{Lstm, LstmCache, LstmGrads};
pub use matrix::Matrix;
pub use train::{train, EpochStats, GradientModel, TrainConfig, TrainHistory};
