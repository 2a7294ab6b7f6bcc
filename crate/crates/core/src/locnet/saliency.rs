use super::loss::pose_loss;
use super::regressor::PoseRegressor;
use super::LocNetError;
use crate::render::{Image, PixelRect, Rgb};
use std::path::Path;

/// Fill color used to occlude a block.
pub const SALIENCY_FILL: Rgb = [128, 128, 128];

/// Loss change caused by occluding each `block x block` tile, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyGrid {
    pub block: usize,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl SaliencyGrid {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    /// `(row, col)` of the largest delta.
    pub fn argmax(&self) -> (usize, usize) {
        let i = self
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        (i / self.cols, i % self.cols)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), LocNetError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["row", "col", "delta"])?;
        for r in 0..self.rows {
            for c in 0..self.cols {
                w.write_record([r.to_string(), c.to_string(), self.get(r, c).to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Heatmap at image resolution; black is no change, bright yellow is the largest
    /// absolute delta.
    pub fn to_heatmap(&self) -> Image {
        let peak = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut img = Image::new(self.cols * self.block, self.rows * self.block);
        for r in 0..self.rows {
            for c in 0..self.cols {
                let t = if peak > 0.0 { self.get(r, c).abs() / peak } else { 0.0 };
                let color = heat(t);
                for y in r * self.block..(r + 1) * self.block {
                    for x in c * self.block..(c + 1) * self.block {
                        img.set(x, y, color);
                    }
                }
            }
        }
        img
    }

    pub fn save_png(&self, path: &Path) -> Result<(), LocNetError> {
        Ok(self.to_heatmap().save_png(path)?)
    }
}

fn heat(t: f64) -> Rgb {
    let t = t.clamp(0.0, 1.0);
    let r = (t * 2.0).min(1.0);
    let g = (t * 2.0 - 1.0).max(0.0);
    [(r * 255.0).round() as u8, (g * 255.0).round() as u8, 0]
}

/// Occlusion sensitivity: the loss against the model's own prediction on `image`
/// after painting each block with [`SALIENCY_FILL`], minus the loss without occlusion.
pub fn saliency_map<R: PoseRegressor + ?Sized>(
    model: &R,
    image: &Image,
    block: usize,
    direction_weight: f64,
) -> Result<SaliencyGrid, LocNetError> {
    if block == 0 || image.width % block != 0 || image.height % block != 0 {
        return Err(LocNetError::Config(format!(
            "block size {block} does not divide {}x{}",
            image.width, image.height
        )));
    }
    let norm = model.normalization();
    let mut session = model.session(image)?;
    let base = session.base_output();
    let truth = norm.decode(&base);
    let reference = pose_loss(&base, &truth, &norm, direction_weight);
    let (rows, cols) = (image.height / block, image.width / block);
    let mut values = Vec::with_capacity(rows * cols);
    let mut work = image.clone();
    for r in 0..rows {
        for c in 0..cols {
            let rect = PixelRect {
                x0: c * block,
                y0: r * block,
                x1: (c + 1) * block,
                y1: (r + 1) * block,
            };
            for y in rect.y0..rect.y1 {
                for x in rect.x0..rect.x1 {
                    work.set(x, y, SALIENCY_FILL);
                }
            }
            let out = session.eval(&work, rect)?;
            values.push(pose_loss(&out, &truth, &norm, direction_weight) - reference);
            for y in rect.y0..rect.y1 {
                for x in rect.x0..rect.x1 {
                    work.set(x, y, image.get(x, y));
                }
            }
        }
    }
    Ok(SaliencyGrid {
        block,
        rows,
        cols,
        values,
    })
}
