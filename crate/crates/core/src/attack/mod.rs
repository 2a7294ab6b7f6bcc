//! Black-box billboard patch crafting: shift classification, the fairness value
//! function, random perturbations and the accept/escape search loop.
//!
//! Only [`PoseRegressor`](crate::locnet::PoseRegressor) forward passes are used.

mod optimize;
mod perturb;
mod value;

pub use optimize::{
    evaluation_cameras, optimize_on_views, optimize_patch, prepare_views, write_history_csv, AttackConfig,
    AttackResult, EvaluationPoses, InitPatch, IterationRecord, PatchMeta,
};
pub use perturb::{propose_perturbation, PerturbationLimits};
pub use value::{classify_shift, value_function, ShiftDirection, ShiftSample, ValueParams};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("value of an empty sample set")]
    EmptySamples,
    #[error(transparent)]
    Render(#[from] crate::render::RenderError),
    #[error(transparent)]
    Model(#[from] crate::locnet::LocNetError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
