use super::manifest::sha256_hex;
use super::HarnessError;
use crate::locnet::PoseRegressor;
use crate::nav::{drive_frames, drive_on_frames, read_trace_csv, turn_decision, ApproachRegion, DriveConfig, TraceRecord, TurnOutcome};
use crate::render::Patch;
use crate::world::{CityModel, Route};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Shift statistics are taken over the steps whose true position lies within this many
/// meters of the target intersection.
pub const FINAL_STRETCH: f64 = 100.0;

/// Label of the reference patch every other estimate is compared against.
const REFERENCE: &str = "black";

/// One entry of a patch list such as `adversarial.png,black,white,random:7`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PatchSpec {
    File(PathBuf),
    Black,
    White,
    Random(u64),
}

impl PatchSpec {
    pub fn parse_list(s: &str) -> Result<Vec<Self>, HarnessError> {
        s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(str::parse).collect()
    }

    pub fn label(&self) -> String {
        match self {
            PatchSpec::File(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "patch".into()),
            PatchSpec::Black => "black".into(),
            PatchSpec::White => "white".into(),
            PatchSpec::Random(_) => "random".into(),
        }
    }

    pub fn load(&self) -> Result<LabeledPatch, HarnessError> {
        let patch = match self {
            PatchSpec::File(p) => Patch::load_png(p)?,
            PatchSpec::Black => Patch::black(),
            PatchSpec::White => Patch::white(),
            PatchSpec::Random(seed) => Patch::random(*seed),
        };
        Ok(LabeledPatch {
            label: self.label(),
            patch,
        })
    }
}

impl FromStr for PatchSpec {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "black" => Ok(PatchSpec::Black),
            "white" => Ok(PatchSpec::White),
            _ => {
                if let Some(seed) = s.strip_prefix("random:") {
                    let seed = seed
                        .parse()
                        .map_err(|_| HarnessError::Config(format!("bad random patch seed in {s:?}")))?;
                    Ok(PatchSpec::Random(seed))
                } else if s.ends_with(".png") {
                    Ok(PatchSpec::File(PathBuf::from(s)))
                } else {
                    Err(HarnessError::Config(format!(
                        "unknown patch {s:?}; expected black, white, random:SEED or a .png file"
                    )))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPatch {
    pub label: String,
    pub patch: Patch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    /// Trace CSV of this patch, relative to the output directory.
    pub trace_file: String,
    pub pose_hash: String,
    pub outcome: TurnOutcome,
    /// Mean of estimated minus true along-track position over the final stretch.
    pub mean_shift: f64,
    /// Mean of the black estimate minus this estimate over the final stretch; positive
    /// means this patch pulls the estimate backward.
    pub mean_backward_vs_black: f64,
    /// Largest backward displacement of the estimate relative to the black estimate.
    pub max_backward_shift: f64,
    /// Estimated along-track position minus the black estimate, per step.
    pub relative_to_black: Vec<f64>,
    #[serde(skip)]
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub region: ApproachRegion,
    /// Standard deviation of the black estimate minus the truth over the final stretch.
    pub black_noise: f64,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn row(&self, label: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

/// Load `report/comparison.json` from a pipeline output directory together with the
/// traces its rows refer to.
pub fn read_comparison(dir: &Path) -> Result<ComparisonTable, HarnessError> {
    let path = dir.join("report").join("comparison.json");
    let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
    let mut table: ComparisonTable = serde_json::from_str(&text)?;
    for row in &mut table.rows {
        row.trace = read_trace_csv(&dir.join(&row.trace_file))?;
    }
    Ok(table)
}

/// Hash of the true positions of a trace; equal hashes mean identical drive poses.
pub fn pose_hash(trace: &[TraceRecord]) -> String {
    let mut bytes = Vec::with_capacity(trace.len() * 16);
    for r in trace {
        bytes.extend_from_slice(&r.true_x.to_le_bytes());
        bytes.extend_from_slice(&r.true_y.to_le_bytes());
    }
    sha256_hex(&bytes)
}

fn in_final_stretch(r: &TraceRecord) -> bool {
    r.y_true_rel >= -FINAL_STRETCH - 1e-9
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Compare already driven traces. One of them must be labeled `black`, and all must
/// share the same drive poses.
pub fn compare_traces(traces: Vec<(String, Vec<TraceRecord>)>, region: &ApproachRegion) -> Result<ComparisonTable, HarnessError> {
    let black = traces
        .iter()
        .find(|(l, _)| l == REFERENCE)
        .map(|(_, t)| t.clone())
        .ok_or_else(|| HarnessError::Comparison("no black reference patch".into()))?;
    if black.is_empty() {
        return Err(HarnessError::Empty("black trace has no steps".into()));
    }
    let reference_hash = pose_hash(&black);
    let noise = {
        let d: Vec<f64> = black
            .iter()
            .filter(|r| in_final_stretch(r))
            .map(|r| r.y_est_rel - r.y_true_rel)
            .collect();
        let m = mean(&d);
        (d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / d.len().max(1) as f64).sqrt()
    };

    let mut rows = Vec::with_capacity(traces.len());
    for (label, trace) in traces {
        let hash = pose_hash(&trace);
        if hash != reference_hash {
            return Err(HarnessError::Comparison(format!(
                "patch {label} was driven on different poses than the black reference"
            )));
        }
        let relative: Vec<f64> = trace.iter().zip(&black).map(|(r, b)| r.y_est_rel - b.y_est_rel).collect();
        let final_idx: Vec<usize> = (0..trace.len()).filter(|&i| in_final_stretch(&trace[i])).collect();
        let shifts: Vec<f64> = final_idx.iter().map(|&i| trace[i].y_est_rel - trace[i].y_true_rel).collect();
        let backward: Vec<f64> = final_idx.iter().map(|&i| -relative[i]).collect();
        rows.push(ComparisonRow {
            outcome: turn_decision(&trace, region)?,
            trace_file: format!("traces/{label}.csv"),
            label,
            pose_hash: hash,
            mean_shift: mean(&shifts),
            mean_backward_vs_black: mean(&backward),
            max_backward_shift: relative.iter().map(|r| -r).fold(f64::NEG_INFINITY, f64::max),
            relative_to_black: relative,
            trace,
        });
    }
    Ok(ComparisonTable {
        region: *region,
        black_noise: noise,
        rows,
    })
}

/// Drive the approach once per patch on shared frames and compare the estimates.
pub fn baseline_compare<R: PoseRegressor + ?Sized>(
    model: &R,
    city: &CityModel,
    route: &Route,
    patches: &[LabeledPatch],
    drive: &DriveConfig,
    region: &ApproachRegion,
) -> Result<ComparisonTable, HarnessError> {
    let frames = drive_frames(city, route, drive)?;
    let mut traces = Vec::with_capacity(patches.len());
    for p in patches {
        if traces.iter().any(|(l, _): &(String, _)| *l == p.label) {
            return Err(HarnessError::Comparison(format!("duplicate patch label {}", p.label)));
        }
        let trace = drive_on_frames(&frames, route, model, Some(&p.patch), &drive.estimator)?;
        traces.push((p.label.clone(), trace));
    }
    compare_traces(traces, region)
}
