//! Losses, the model variants, the training loop and test-time evaluation.

mod config;
mod eval;
mod loss;
mod model;
mod train;

#[cfg(test)]
mod tests;

pub use config::*;
pub use eval::*;
pub use loss::*;
pub use model::*;
pub use train::*;

use crate::autodiff::AutodiffError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("loss became non-finite at step {step}")]
    Diverged { step: usize },
    #[error("need {need_pos} positive and {need_neg} negative points, sample has {have_pos} and {have_neg}")]
    Points { need_pos: usize, need_neg: usize, have_pos: usize, have_neg: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{0}")]
    Autodiff(#[from] AutodiffError),
    #[error("i/o: {0}")]
    Io(String),
}
