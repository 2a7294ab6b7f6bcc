//! Convolutional pose regression: model, loss, training, evaluation and occlusion
//! saliency.

mod checkpoint;
mod eval;
mod loss;
mod model;
pub mod ops;
mod regressor;
mod saliency;
mod train;

pub use crate::pose::Pose;
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use eval::{angular_error_deg, evaluate, evaluate_samples, write_errors_csv, ErrorRecord, ErrorStats};
pub use loss::{pose_loss, pose_loss_grad, Normalization, RawOutput};
pub use model::{image_to_chw, Architecture, ConvLayer, ConvSpec, DenseLayer, PoseModel, Trace, OUTPUTS};
pub use regressor::{diff_rect, ForwardSession, FullSession, PoseRegressor};
pub use saliency::{saliency_map, SaliencyGrid, SALIENCY_FILL};
pub use train::{train, train_with, EpochRecord, Optimizer, TrainConfig, TrainHistory};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LocNetError {
    #[error("expected a {expected}x{expected} image, got {width}x{height}")]
    Shape { expected: usize, width: usize, height: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("nothing to evaluate: {0}")]
    Empty(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Render(#[from] crate::render::RenderError),
}
