use super::AttackError;
use crate::geom::Vec2;
use crate::pose::Pose;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftDirection {
    Backward,
    Forward,
}

/// Prediction error of one view relative to the driving direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftSample {
    pub true_pose: Pose,
    pub predicted: Vec2,
    /// `(predicted - truth) . axis`; negative means behind the vehicle.
    pub along_track: f64,
    /// Euclidean distance between prediction and truth.
    pub magnitude: f64,
    pub direction: ShiftDirection,
}

pub fn classify_shift(truth: &Pose, predicted: Vec2, axis: Vec2) -> Result<ShiftSample, AttackError> {
    if !((axis.norm() - 1.0).abs() < 1e-9) {
        return Err(AttackError::Config(format!("approach axis {axis:?} is not unit length")));
    }
    let d = predicted - truth.position();
    let along_track = d.dot(axis);
    Ok(ShiftSample {
        true_pose: *truth,
        predicted,
        along_track,
        magnitude: d.norm(),
        direction: if along_track < 0.0 {
            ShiftDirection::Backward
        } else {
            ShiftDirection::Forward
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueParams {
    /// Exponent applied to shift magnitudes, in `(0, 1)`.
    pub alpha: f64,
}

impl Default for ValueParams {
    fn default() -> Self {
        Self { alpha: 0.5 }
    }
}

impl ValueParams {
    pub fn validate(&self) -> Result<(), AttackError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(AttackError::Config(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

/// `V = (n_B + n_F)^-2 (n_B sum_B |d|^alpha - n_F sum_F |d|^alpha)`. Larger values mean
/// more, and more uniformly distributed, backward shift.
pub fn value_function(samples: &[ShiftSample], params: &ValueParams) -> Result<f64, AttackError> {
    params.validate()?;
    if samples.is_empty() {
        return Err(AttackError::EmptySamples);
    }
    let (mut n_b, mut n_f) = (0usize, 0usize);
    let (mut s_b, mut s_f) = (0.0, 0.0);
    for s in samples {
        let m = s.magnitude.powf(params.alpha);
        match s.direction {
            ShiftDirection::Backward => {
                n_b += 1;
                s_b += m;
            }
            ShiftDirection::Forward => {
                n_f += 1;
                s_f += m;
            }
        }
    }
    let n = (n_b + n_f) as f64;
    Ok((n_b as f64 * s_b - n_f as f64 * s_f) / (n * n))
}
