use super::RenderError;
use crate::world::PATCH_CELLS;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::path::Path;

pub type Rgb = [u8; 3];

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, c: Rgb) -> Self {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            pixels.extend_from_slice(&c);
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Rgb {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: Rgb) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&c);
    }

    /// Content identifier: truncated SHA-256 of dimensions and pixels.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.width as u64).to_le_bytes());
        h.update((self.height as u64).to_le_bytes());
        h.update(&self.pixels);
        hex::encode(&h.finalize()[..16])
    }

    pub fn save_png(&self, path: &Path) -> Result<(), RenderError> {
        image::save_buffer(
            path,
            &self.pixels,
            self.width as u32,
            self.height as u32,
            image::ColorType::Rgb8,
        )?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Self, RenderError> {
        let img = image::open(path)?.to_rgb8();
        Ok(Self {
            width: img.width() as usize,
            height: img.height() as usize,
            pixels: img.into_raw(),
        })
    }

    /// Copy with the `rect` filled by `c`.
    pub fn with_rect_filled(&self, rect: PixelRect, c: Rgb) -> Image {
        let mut out = self.clone();
        for y in rect.y0..rect.y1 {
            for x in rect.x0..rect.x1 {
                out.set(x, y, c);
            }
        }
        out
    }
}

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRect {
    pub fn is_empty(&self) -> bool {
        self.x0 >= self.x1 || self.y0 >= self.y1
    }

    pub fn area(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            (self.x1 - self.x0) * (self.y1 - self.y0)
        }
    }
}

/// 16x16 RGB pattern printed on the billboard. Cell `(cx, cy)` is column `cx`, row `cy`,
/// with `(0, 0)` the top-left corner as seen from the front.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Patch {
    cells: Vec<Rgb>,
}

impl Patch {
    pub const SIZE: usize = PATCH_CELLS;

    pub fn uniform(c: Rgb) -> Self {
        Self {
            cells: vec![c; Self::SIZE * Self::SIZE],
        }
    }

    pub fn black() -> Self {
        Self::uniform([0, 0, 0])
    }

    pub fn white() -> Self {
        Self::uniform([255, 255, 255])
    }

    /// Uniform per-channel random pattern.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            cells: (0..Self::SIZE * Self::SIZE).map(|_| rng.gen::<Rgb>()).collect(),
        }
    }

    pub fn from_cells(cells: Vec<Rgb>) -> Result<Self, RenderError> {
        if cells.len() != Self::SIZE * Self::SIZE {
            return Err(RenderError::PatchShape(cells.len()));
        }
        Ok(Self { cells })
    }

    #[inline]
    pub fn get(&self, cx: usize, cy: usize) -> Rgb {
        self.cells[cy * Self::SIZE + cx]
    }

    #[inline]
    pub fn set(&mut self, cx: usize, cy: usize, c: Rgb) {
        self.cells[cy * Self::SIZE + cx] = c;
    }

    pub fn cells(&self) -> &[Rgb] {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut [Rgb] {
        &mut self.cells
    }

    /// Number of cells whose color differs from `other`.
    pub fn cells_changed(&self, other: &Patch) -> usize {
        self.cells.iter().zip(&other.cells).filter(|(a, b)| a != b).count()
    }

    pub fn to_image(&self) -> Image {
        let mut img = Image::new(Self::SIZE, Self::SIZE);
        for cy in 0..Self::SIZE {
            for cx in 0..Self::SIZE {
                img.set(cx, cy, self.get(cx, cy));
            }
        }
        img
    }

    pub fn from_image(img: &Image) -> Result<Self, RenderError> {
        if img.width != Self::SIZE || img.height != Self::SIZE {
            return Err(RenderError::PatchShape(img.width * img.height));
        }
        let mut p = Self::black();
        for cy in 0..Self::SIZE {
            for cx in 0..Self::SIZE {
                p.set(cx, cy, img.get(cx, cy));
            }
        }
        Ok(p)
    }

    pub fn save_png(&self, path: &Path) -> Result<(), RenderError> {
        self.to_image().save_png(path)
    }

    pub fn load_png(path: &Path) -> Result<Self, RenderError> {
        Self::from_image(&Image::load_png(path)?)
    }
}
