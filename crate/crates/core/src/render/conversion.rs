use super::image::{Image, PixelRect};
use super::{Patch, RenderError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableEntry {
    /// Row-major pixel index.
    pub pixel: u32,
    pub cell_x: u8,
    pub cell_y: u8,
}

/// Per-view map from billboard-covered pixels to patch cells, calibrated against a
/// render with the default black billboard.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConversionTable {
    pub base_image_id: String,
    pub width: usize,
    pub height: usize,
    /// Sorted by pixel index, unique.
    pub entries: Vec<TableEntry>,
}

impl ConversionTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Bounding rectangle of the covered pixels.
    pub fn bounds(&self) -> Option<PixelRect> {
        let first = self.entries.first()?;
        let mut r = PixelRect {
            x0: usize::MAX,
            y0: first.pixel as usize / self.width,
            x1: 0,
            y1: 0,
        };
        for e in &self.entries {
            let (x, y) = (e.pixel as usize % self.width, e.pixel as usize / self.width);
            r.x0 = r.x0.min(x);
            r.x1 = r.x1.max(x + 1);
            r.y1 = r.y1.max(y + 1);
        }
        Some(r)
    }

    /// Write patch colors into `image` without checking calibration. The caller
    /// guarantees `image` started from the calibrated base.
    pub fn paint(&self, image: &mut Image, patch: &Patch) {
        for e in &self.entries {
            let c = patch.get(e.cell_x as usize, e.cell_y as usize);
            let i = e.pixel as usize * 3;
            image.pixels[i..i + 3].copy_from_slice(&c);
        }
    }
}

/// Apply `patch` to a calibrated base render by table lookup.
pub fn composite_patch(base: &Image, table: &ConversionTable, patch: &Patch) -> Result<Image, RenderError> {
    if base.width != table.width || base.height != table.height || base.fingerprint() != table.base_image_id {
        return Err(RenderError::Calibration(format!(
            "table calibrated against {} but base is {}",
            table.base_image_id,
            base.fingerprint()
        )));
    }
    let mut out = base.clone();
    table.paint(&mut out, patch);
    Ok(out)
}
