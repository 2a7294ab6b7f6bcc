//! End-to-end experiment pipeline: city, dataset, training, patch crafting, drives with
//! the baseline patches, and the comparison report.

mod compare;
mod config;
mod manifest;
mod pipeline;
mod report;

pub use compare::{
    baseline_compare, compare_traces, pose_hash, read_comparison, ComparisonRow, ComparisonTable, LabeledPatch, PatchSpec,
    FINAL_STRETCH,
};
pub use config::{CitySection, DatasetSection, ExperimentConfig, ModelSection, RegionScan, RouteSpec};
pub use manifest::{hash_artifact, hash_dir, hash_file, sha256_hex, ArtifactEntry, Manifest, StageEntry, MANIFEST_FILE};
pub use pipeline::{run_pipeline, run_pipeline_with, PipelineRun, StageStatus, STAGES, TIMINGS_FILE};
pub use report::{
    region_scan, render_comparison_svg, render_trace_svg, write_comparison_csv, write_report, RegionCandidate,
    ReportSummary,
};

use std::path::{Path, PathBuf};
use thiserror::Error;

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: BoxError,
    },
    #[error("comparison: {0}")]
    Comparison(String),
    #[error("nothing to report: {0}")]
    Empty(String),
    #[error(transparent)]
    Nav(#[from] crate::nav::NavError),
    #[error(transparent)]
    Render(#[from] crate::render::RenderError),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn stage(stage: &'static str, source: impl Into<BoxError>) -> Self {
        Self::Stage {
            stage,
            source: source.into(),
        }
    }
}
