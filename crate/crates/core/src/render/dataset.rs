use super::camera::{CameraConfig, DEFAULT_FOV_DEG, DEFAULT_PITCH_DEG, IMAGE_SIZE};
use super::image::Image;
use super::scene::Scene;
use super::RenderError;
use crate::geom::Vec2;
use crate::pose::Pose;
use crate::world::{Axis, CityModel};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSampler {
    pub count: usize,
    pub train_ratio: f64,
    /// Uniform yaw jitter around the street direction, degrees.
    pub yaw_jitter_deg: f64,
    pub height_min: f64,
    pub height_max: f64,
    pub pitch_deg: f64,
    pub fov_deg: f64,
    pub image_size: usize,
    /// Keep camera positions this far from the curb.
    pub curb_margin: f64,
    /// A pose is rejected when the point this far ahead lies outside the map.
    pub outward_reject_distance: f64,
}

impl Default for DatasetSampler {
    fn default() -> Self {
        Self {
            count: 1000,
            train_ratio: 0.9,
            yaw_jitter_deg: 10.0,
            height_min: 0.4,
            height_max: 1.0,
            pitch_deg: DEFAULT_PITCH_DEG,
            fov_deg: DEFAULT_FOV_DEG,
            image_size: IMAGE_SIZE,
            curb_margin: 2.0,
            outward_reject_distance: 80.0,
        }
    }
}

impl DatasetSampler {
    pub fn validate(&self) -> Result<(), RenderError> {
        let err = |m: &str| Err(RenderError::Config(m.to_string()));
        if self.count < 10 {
            return err("dataset needs at least 10 samples");
        }
        if !(self.train_ratio > 0.0 && self.train_ratio <= 1.0) {
            return err("train_ratio must be in (0, 1]");
        }
        if !(0.0..45.0).contains(&self.yaw_jitter_deg) {
            return err("yaw jitter must be in [0, 45) degrees");
        }
        if !(self.height_min > 0.0 && self.height_min <= self.height_max) {
            return err("camera height range must be positive and ordered");
        }
        if self.image_size == 0 || !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return err("invalid image size or field of view");
        }
        if self.curb_margin < 0.0 || self.outward_reject_distance < 0.0 {
            return err("margins must be non-negative");
        }
        Ok(())
    }

    pub fn train_count(&self) -> usize {
        (self.count as f64 * self.train_ratio).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub pose: Pose,
    pub split: Split,
    pub image: Image,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }
}

/// Draw camera poses on street carriageways, facing along the street with yaw jitter,
/// and assign train/test by a seeded shuffle.
pub fn sample_cameras(
    city: &CityModel,
    sampler: &DatasetSampler,
    seed: u64,
) -> Result<Vec<(CameraConfig, Split)>, RenderError> {
    sampler.validate()?;
    if city.streets.is_empty() {
        return Err(RenderError::Config("city has no streets".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = city.streets.iter().map(|s| (s.end - s.start) * s.width).collect();
    let total: f64 = weights.iter().sum();
    let bounds = city.bounds();
    let jitter = sampler.yaw_jitter_deg.to_radians();

    let mut cameras = Vec::with_capacity(sampler.count);
    let mut attempts = 0usize;
    while cameras.len() < sampler.count {
        attempts += 1;
        if attempts > sampler.count * 1000 {
            return Err(RenderError::Config("could not place enough street poses".into()));
        }
        let mut pick = rng.gen_range(0.0..total);
        let mut si = 0;
        while si + 1 < weights.len() && pick >= weights[si] {
            pick -= weights[si];
            si += 1;
        }
        let s = &city.streets[si];
        let half = (s.width / 2.0 - sampler.curb_margin).max(0.0);
        let lateral = if half > 0.0 { rng.gen_range(-half..=half) } else { 0.0 };
        let along = rng.gen_range(s.start..s.end);
        let forward = rng.gen_bool(0.5);
        let dyaw = if jitter > 0.0 { rng.gen_range(-jitter..=jitter) } else { 0.0 };
        let height = rng.gen_range(sampler.height_min..=sampler.height_max);

        let (p, base_yaw) = match s.axis {
            Axis::NorthSouth => (
                Vec2::new(s.center + lateral, along),
                if forward { std::f64::consts::FRAC_PI_2 } else { -std::f64::consts::FRAC_PI_2 },
            ),
            Axis::EastWest => (
                Vec2::new(along, s.center + lateral),
                if forward { 0.0 } else { std::f64::consts::PI },
            ),
        };
        let yaw = crate::geom::wrap_angle(base_yaw + dyaw);
        let ahead = p + Vec2::new(yaw.cos(), yaw.sin()) * sampler.outward_reject_distance;
        if !bounds.contains(ahead) {
            continue;
        }
        let mut cam = CameraConfig::vehicle(p, height, yaw);
        cam.pitch = sampler.pitch_deg.to_radians();
        cam.horizontal_fov = sampler.fov_deg.to_radians();
        cam.width = sampler.image_size;
        cam.height = sampler.image_size;
        cameras.push(cam);
    }

    let mut order: Vec<usize> = (0..cameras.len()).collect();
    order.shuffle(&mut rng);
    let mut split = vec![Split::Test; cameras.len()];
    for &i in order.iter().take(sampler.train_count()) {
        split[i] = Split::Train;
    }
    Ok(cameras.into_iter().zip(split).collect())
}

pub fn render_dataset(city: &CityModel, sampler: &DatasetSampler, seed: u64) -> Result<Dataset, RenderError> {
    let cams = sample_cameras(city, sampler, seed)?;
    let scene = Scene::new(city);
    let samples = cams
        .par_iter()
        .map(|(cam, split)| {
            Ok(Sample {
                pose: cam.pose(),
                split: *split,
                image: scene.render_view(cam)?,
            })
        })
        .collect::<Result<Vec<_>, RenderError>>()?;
    Ok(Dataset { samples })
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    image_path: String,
    x: f64,
    y: f64,
    theta_deg: f64,
    split: Split,
}

/// Write PNG images under `dir/images/` plus `dir/manifest.csv`.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<(), RenderError> {
    std::fs::create_dir_all(dir.join("images"))?;
    let mut w = csv::Writer::from_path(dir.join("manifest.csv"))?;
    for (i, s) in dataset.samples.iter().enumerate() {
        let rel = format!("images/{i:06}.png");
        s.image.save_png(&dir.join(&rel))?;
        w.serialize(ManifestRow {
            image_path: rel,
            x: s.pose.x,
            y: s.pose.y,
            theta_deg: s.pose.theta.to_degrees(),
            split: s.split,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, RenderError> {
    let mut r = csv::Reader::from_path(dir.join("manifest.csv"))?;
    let rows = r.deserialize().collect::<Result<Vec<ManifestRow>, _>>()?;
    let samples = rows
        .par_iter()
        .map(|row| {
            Ok(Sample {
                pose: Pose::new(row.x, row.y, row.theta_deg.to_radians()),
                split: row.split,
                image: Image::load_png(&dir.join(&row.image_path))?,
            })
        })
        .collect::<Result<Vec<_>, RenderError>>()?;
    Ok(Dataset { samples })
}
