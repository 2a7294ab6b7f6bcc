//! Software raycaster for the procedural city, billboard conversion tables and
//! dataset generation.

mod camera;
mod conversion;
mod dataset;
mod image;
mod scene;

pub use camera::{CameraConfig, DEFAULT_FOV_DEG, DEFAULT_PITCH_DEG, IMAGE_SIZE};
pub use conversion::{composite_patch, ConversionTable, TableEntry};
pub use dataset::{
    load_dataset, render_dataset, sample_cameras, write_dataset, Dataset, DatasetSampler, Sample, Split,
};
pub use image::{Image, Patch, PixelRect, Rgb};
pub use scene::{sky_color, Scene, BILLBOARD_BACK};

use crate::world::CityModel;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("camera inside solid geometry: {0}")]
    InsideGeometry(String),
    #[error("invalid camera: {0}")]
    Camera(String),
    #[error("calibration mismatch: {0}")]
    Calibration(String),
    #[error("patch must be 16x16 cells, got {0} cells")]
    PatchShape(usize),
    #[error("invalid dataset configuration: {0}")]
    Config(String),
    #[error("dataset manifest: {0}")]
    Manifest(String),
    #[error("image io: {0}")]
    Image(#[from] ::image::ImageError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Render the city with the default black billboard.
pub fn render_view(city: &CityModel, camera: &CameraConfig) -> Result<Image, RenderError> {
    Ok(Scene::new(city).render(camera, None)?.0)
}

/// Render the city with `patch` printed on the billboard.
pub fn render_textured(city: &CityModel, camera: &CameraConfig, patch: &Patch) -> Result<Image, RenderError> {
    Ok(Scene::new(city).render(camera, Some(patch))?.0)
}

impl Scene<'_> {
    pub fn render_view(&self, camera: &CameraConfig) -> Result<Image, RenderError> {
        Ok(self.render(camera, None)?.0)
    }

    pub fn render_textured(&self, camera: &CameraConfig, patch: &Patch) -> Result<Image, RenderError> {
        Ok(self.render(camera, Some(patch))?.0)
    }

    pub fn build_conversion_table(&self, camera: &CameraConfig) -> Result<(Image, ConversionTable), RenderError> {
        let (base, hits) = self.render(camera, None)?;
        let table = ConversionTable {
            base_image_id: base.fingerprint(),
            width: base.width,
            height: base.height,
            entries: hits
                .into_iter()
                .map(|(pixel, cell_x, cell_y)| TableEntry { pixel, cell_x, cell_y })
                .collect(),
        };
        Ok((base, table))
    }
}

/// A camera with its black-billboard base render and conversion table.
#[derive(Debug, Clone)]
pub struct CalibratedView {
    pub camera: CameraConfig,
    pub base: Image,
    pub table: ConversionTable,
}

impl CalibratedView {
    pub fn new(scene: &Scene<'_>, camera: CameraConfig) -> Result<Self, RenderError> {
        let (base, table) = scene.build_conversion_table(&camera)?;
        Ok(Self { camera, base, table })
    }

    /// The view with `patch` on the billboard.
    pub fn composite(&self, patch: &Patch) -> Image {
        let mut img = self.base.clone();
        self.table.paint(&mut img, patch);
        img
    }
}

/// Black-billboard base render plus the pixel-to-cell map of the visible billboard face.
pub fn build_conversion_table(city: &CityModel, camera: &CameraConfig) -> Result<(Image, ConversionTable), RenderError> {
    Scene::new(city).build_conversion_table(camera)
}

#[cfg(test)]
mod tests;
