use super::estimator::{estimate_position, EstimatorConfig};
use super::NavError;
use crate::geom::Vec2;
use crate::locnet::PoseRegressor;
use crate::render::{CalibratedView, CameraConfig, Patch, Scene};
use crate::world::{CityModel, Route};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Camera mounting and lane position of the simulated vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleConfig {
    /// Meters to the right of the street center line.
    pub lane_offset: f64,
    pub camera_height: f64,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        Self {
            lane_offset: 12.5,
            camera_height: 0.7,
        }
    }
}

impl VehicleConfig {
    /// Camera at along-track coordinate `along` on the approach leg, facing the
    /// approach direction.
    pub fn camera(&self, route: &Route, along: f64) -> CameraConfig {
        CameraConfig::vehicle(
            route.approach_point(along, self.lane_offset),
            self.camera_height,
            route.approach_yaw(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriveConfig {
    /// Length of the approach driven before the target intersection center.
    pub length: f64,
    pub spacing: f64,
    pub vehicle: VehicleConfig,
    pub estimator: EstimatorConfig,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self {
            length: 200.0,
            spacing: 5.0,
            vehicle: VehicleConfig::default(),
            estimator: EstimatorConfig::default(),
        }
    }
}

impl DriveConfig {
    pub fn validate(&self) -> Result<(), NavError> {
        if !(self.spacing > 0.0) || !(self.length >= 0.0) {
            return Err(NavError::Config("drive length and spacing must be positive".into()));
        }
        self.estimator.validate()
    }

    /// Along-track coordinates of the steps: `-length, -length + spacing, ..., 0`.
    pub fn step_alongs(&self) -> Vec<f64> {
        let n = (self.length / self.spacing + 1e-9).floor() as usize;
        (0..=n).map(|j| -self.length + self.spacing * j as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub true_x: f64,
    pub true_y: f64,
    pub pred_x: f64,
    pub pred_y: f64,
    pub est_x: f64,
    pub est_y: f64,
    /// Along-track coordinates relative to the target intersection.
    pub y_true_rel: f64,
    pub y_pred_rel: f64,
    pub y_est_rel: f64,
}

pub fn drive_frames(city: &CityModel, route: &Route, config: &DriveConfig) -> Result<Vec<CalibratedView>, NavError> {
    config.validate()?;
    let scene = Scene::new(city);
    config
        .step_alongs()
        .into_iter()
        .enumerate()
        .map(|(step, along)| {
            CalibratedView::new(&scene, config.vehicle.camera(route, along))
                .map_err(|source| NavError::Render { step, source })
        })
        .collect()
}

/// Drive over prepared frames, compositing `patch` (if any) onto each.
pub fn drive_on_frames<R: PoseRegressor + ?Sized>(
    frames: &[CalibratedView],
    route: &Route,
    model: &R,
    patch: Option<&Patch>,
    estimator: &EstimatorConfig,
) -> Result<Vec<TraceRecord>, NavError> {
    estimator.validate()?;
    let mut predictions: Vec<Vec2> = Vec::with_capacity(frames.len());
    let mut trace = Vec::with_capacity(frames.len());
    for (step, frame) in frames.iter().enumerate() {
        let pred = match patch {
            Some(p) => model.predict(&frame.composite(p)),
            None => model.predict(&frame.base),
        }
        .map_err(|source| NavError::Predict { step, source })?;
        predictions.push(pred.position());
        let est = estimate_position(&predictions, estimator)?;
        let truth = Vec2::new(frame.camera.position.x, frame.camera.position.y);
        trace.push(TraceRecord {
            step,
            true_x: truth.x,
            true_y: truth.y,
            pred_x: pred.x,
            pred_y: pred.y,
            est_x: est.x,
            est_y: est.y,
            y_true_rel: route.along_track(truth),
            y_pred_rel: route.along_track(pred.position()),
            y_est_rel: route.along_track(est),
        });
    }
    Ok(trace)
}

pub fn drive_simulate<R: PoseRegressor + ?Sized>(
    city: &CityModel,
    route: &Route,
    model: &R,
    patch: Option<&Patch>,
    config: &DriveConfig,
) -> Result<Vec<TraceRecord>, NavError> {
    let frames = drive_frames(city, route, config)?;
    drive_on_frames(&frames, route, model, patch, &config.estimator)
}

pub fn write_trace_csv(trace: &[TraceRecord], path: &Path) -> Result<(), NavError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in trace {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRecord>, NavError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<_>, _>>()?)
}
