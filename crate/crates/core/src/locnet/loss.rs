use crate::geom::Vec2;
use crate::pose::Pose;
use crate::world::CityModel;
use serde::{Deserialize, Serialize};

/// Raw head output `(x, y, s, c)`: position in normalized map coordinates and an
/// unnormalized `(sin, cos)` direction code.
pub type RawOutput = [f64; 4];

/// Affine map between metric map coordinates and the `[-1, 1]` training range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub center: Vec2,
    pub half_extent: Vec2,
}

impl Normalization {
    pub fn for_city(city: &CityModel) -> Self {
        Self {
            center: city.extent * 0.5,
            half_extent: city.extent * 0.5,
        }
    }

    pub fn encode(&self, pose: &Pose) -> RawOutput {
        [
            (pose.x - self.center.x) / self.half_extent.x,
            (pose.y - self.center.y) / self.half_extent.y,
            pose.theta.sin(),
            pose.theta.cos(),
        ]
    }

    pub fn decode(&self, raw: &RawOutput) -> Pose {
        Pose::new(
            self.center.x + self.half_extent.x * raw[0],
            self.center.y + self.half_extent.y * raw[1],
            raw[2].atan2(raw[3]),
        )
    }
}

/// Squared normalized position error plus `direction_weight` times the squared error of
/// the direction code against `(sin theta, cos theta)`.
pub fn pose_loss(raw: &RawOutput, truth: &Pose, norm: &Normalization, direction_weight: f64) -> f64 {
    let t = norm.encode(truth);
    let pos = (raw[0] - t[0]).powi(2) + (raw[1] - t[1]).powi(2);
    let dir = (raw[2] - t[2]).powi(2) + (raw[3] - t[3]).powi(2);
    pos + direction_weight * dir
}

/// Gradient of [`pose_loss`] with respect to the raw output.
pub fn pose_loss_grad(raw: &RawOutput, truth: &Pose, norm: &Normalization, direction_weight: f64) -> RawOutput {
    let t = norm.encode(truth);
    [
        2.0 * (raw[0] - t[0]),
        2.0 * (raw[1] - t[1]),
        2.0 * direction_weight * (raw[2] - t[2]),
        2.0 * direction_weight * (raw[3] - t[3]),
    ]
}
