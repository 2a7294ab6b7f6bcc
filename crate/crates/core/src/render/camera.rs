use crate::geom::{Vec2, Vec3};
use crate::pose::Pose;
use serde::{Deserialize, Serialize};

pub const DEFAULT_FOV_DEG: f64 = 120.0;
pub const DEFAULT_PITCH_DEG: f64 = 7.0;
pub const IMAGE_SIZE: usize = 224;

/// Pinhole camera. `yaw` is counter-clockwise from +x, `pitch` positive upward. The
/// vertical field of view follows from the aspect ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub position: Vec3,
    pub yaw: f64,
    pub pitch: f64,
    pub horizontal_fov: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraConfig {
    /// Vehicle camera with the default field of view, pitch and image size.
    pub fn vehicle(position: Vec2, height: f64, yaw: f64) -> Self {
        Self {
            position: Vec3::new(position.x, position.y, height),
            yaw,
            pitch: DEFAULT_PITCH_DEG.to_radians(),
            horizontal_fov: DEFAULT_FOV_DEG.to_radians(),
            width: IMAGE_SIZE,
            height: IMAGE_SIZE,
        }
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.position.x, self.position.y, self.yaw)
    }

    pub fn forward(&self) -> Vec3 {
        let (sp, cp) = self.pitch.sin_cos();
        let (sy, cy) = self.yaw.sin_cos();
        Vec3::new(cp * cy, cp * sy, sp)
    }

    pub fn right(&self) -> Vec3 {
        let (sy, cy) = self.yaw.sin_cos();
        Vec3::new(sy, -cy, 0.0)
    }

    pub fn up(&self) -> Vec3 {
        self.right().cross(self.forward())
    }

    /// Unnormalized direction of the primary ray through the center of pixel `(px, py)`.
    pub fn ray_direction(&self, px: usize, py: usize) -> Vec3 {
        let basis = RayBasis::new(self);
        basis.direction(px, py)
    }
}

/// Precomputed per-frame quantities for primary ray generation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RayBasis {
    forward: Vec3,
    right: Vec3,
    up: Vec3,
    tan_x: f64,
    tan_y: f64,
    width: f64,
    height: f64,
}

impl RayBasis {
    pub(crate) fn new(cam: &CameraConfig) -> Self {
        let tan_x = (cam.horizontal_fov / 2.0).tan();
        Self {
            forward: cam.forward(),
            right: cam.right(),
            up: cam.up(),
            tan_x,
            tan_y: tan_x * cam.height as f64 / cam.width as f64,
            width: cam.width as f64,
            height: cam.height as f64,
        }
    }

    #[inline]
    pub(crate) fn direction(&self, px: usize, py: usize) -> Vec3 {
        let sx = (2.0 * (px as f64 + 0.5) / self.width - 1.0) * self.tan_x;
        let sy = (1.0 - 2.0 * (py as f64 + 0.5) / self.height) * self.tan_y;
        self.forward + self.right * sx + self.up * sy
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn basis_is_orthonormal() {
        let cam = CameraConfig::vehicle(Vec2::new(0.0, 0.0), 0.7, 1.1);
        let (f, r, u) = (cam.forward(), cam.right(), cam.up());
        assert_relative_eq!(f.dot(r), 0.0, epsilon = 1e-12);
        assert_relative_eq!(f.dot(u), 0.0, epsilon = 1e-12);
        assert_relative_eq!(u.dot(u), 1.0, epsilon = 1e-12);
        assert!(u.z > 0.0);
    }

    #[test]
    fn edge_pixels_span_the_field_of_view() {
        let mut cam = CameraConfig::vehicle(Vec2::new(0.0, 0.0), 0.7, 0.0);
        cam.pitch = 0.0;
        // pixel 0 is half a pixel inside the 60 degree left edge
        let d = cam.ray_direction(0, 112);
        let half_px = (60f64.to_radians().tan()) / 224.0;
        let expected = (60f64.to_radians().tan() - half_px).atan();
        assert_relative_eq!(d.y.atan2(d.x), expected, epsilon = 1e-12);
    }
}
