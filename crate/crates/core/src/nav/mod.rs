//! Navigation simulation: regression-smoothed self-position, the drive along the
//! approach leg and the turn decision at the target intersection.

mod decision;
mod drive;
mod estimator;

pub use decision::{turn_decision, ApproachRegion, TurnDecision, TurnOutcome};
pub use drive::{
    drive_frames, drive_on_frames, drive_simulate, read_trace_csv, write_trace_csv, DriveConfig, TraceRecord,
    VehicleConfig,
};
pub use estimator::{estimate_position, EstimatorConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NavError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no predictions to estimate from")]
    EmptyHistory,
    #[error("empty trace")]
    EmptyTrace,
    #[error("render failed at step {step}: {source}")]
    Render {
        step: usize,
        #[source]
        source: crate::render::RenderError,
    },
    #[error("prediction failed at step {step}: {source}")]
    Predict {
        step: usize,
        #[source]
        source: crate::locnet::LocNetError,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
