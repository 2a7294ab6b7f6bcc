use super::regressor::PoseRegressor;
use super::LocNetError;
use crate::geom::wrap_angle;
use crate::pose::Pose;
use crate::render::{Dataset, Sample, Split};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub pred_x: f64,
    pub pred_y: f64,
    pub pred_theta: f64,
    /// Meters.
    pub position_error: f64,
    /// Degrees in `[0, 180]`.
    pub angular_error: f64,
}

impl ErrorRecord {
    pub fn new(truth: &Pose, pred: &Pose) -> Self {
        Self {
            x: truth.x,
            y: truth.y,
            theta: truth.theta,
            pred_x: pred.x,
            pred_y: pred.y,
            pred_theta: pred.theta,
            position_error: (pred.position() - truth.position()).norm(),
            angular_error: angular_error_deg(pred.theta, truth.theta),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean_position: f64,
    pub median_position: f64,
    pub mean_angular: f64,
    pub median_angular: f64,
    pub records: Vec<ErrorRecord>,
}

/// `|wrap(a - b)|` in degrees.
pub fn angular_error_deg(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs().to_degrees().min(180.0)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

impl ErrorStats {
    pub fn from_records(records: Vec<ErrorRecord>) -> Result<Self, LocNetError> {
        if records.is_empty() {
            return Err(LocNetError::Empty("no samples".into()));
        }
        let n = records.len() as f64;
        let mut pos: Vec<f64> = records.iter().map(|r| r.position_error).collect();
        let mut ang: Vec<f64> = records.iter().map(|r| r.angular_error).collect();
        Ok(Self {
            mean_position: pos.iter().sum::<f64>() / n,
            mean_angular: ang.iter().sum::<f64>() / n,
            median_position: median(&mut pos),
            median_angular: median(&mut ang),
            records,
        })
    }
}

pub fn evaluate_samples<'a, R, I>(model: &R, samples: I) -> Result<ErrorStats, LocNetError>
where
    R: PoseRegressor + ?Sized,
    I: IntoIterator<Item = &'a Sample>,
{
    let samples: Vec<&Sample> = samples.into_iter().collect();
    let records = samples
        .par_iter()
        .map(|s| Ok(ErrorRecord::new(&s.pose, &model.predict(&s.image)?)))
        .collect::<Result<Vec<_>, LocNetError>>()?;
    ErrorStats::from_records(records)
}

pub fn evaluate<R: PoseRegressor + ?Sized>(model: &R, dataset: &Dataset, split: Split) -> Result<ErrorStats, LocNetError> {
    if dataset.count(split) == 0 {
        return Err(LocNetError::Empty(format!("{} split is empty", split.as_str())));
    }
    evaluate_samples(model, dataset.split(split))
}

pub fn write_errors_csv(stats: &ErrorStats, path: &Path) -> Result<(), LocNetError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in &stats.records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
