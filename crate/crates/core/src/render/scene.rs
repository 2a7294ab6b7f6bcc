//! Primary-ray tracing against the city and flat procedural shading.

use super::camera::{CameraConfig, RayBasis};
use super::image::{Image, Rgb};
use super::{Patch, RenderError};
use crate::geom::{Vec2, Vec3};
use crate::world::{Axis, Building, CityModel, GroundKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const GRID_CELL: f64 = 25.0;
const EPS: f64 = 1e-9;

pub const SKY_TOP: Rgb = [70, 118, 196];
pub const SKY_HORIZON: Rgb = [198, 214, 236];
pub const BILLBOARD_BACK: Rgb = [92, 92, 96];

/// Sky color for an image row: fixed vertical gradient, top to bottom.
pub fn sky_color(row: usize, height: usize) -> Rgb {
    let t = if height > 1 {
        row as f64 / (height - 1) as f64
    } else {
        0.0
    };
    std::array::from_fn(|i| lerp_u8(SKY_TOP[i], SKY_HORIZON[i], t))
}

fn lerp_u8(a: u8, b: u8, t: f64) -> u8 {
    (a as f64 + (b as f64 - a as f64) * t).round() as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Face {
    West,
    East,
    South,
    North,
    Roof,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Surface {
    Sky,
    Ground(Vec2),
    Wall { building: usize, face: Face, u: f64, z: f64 },
    Roof { building: usize },
    BillboardFront { cx: u8, cy: u8 },
    BillboardBack,
}

#[derive(Debug, Clone)]
struct FacadeStyle {
    base: [f64; 3],
    window_dark: [f64; 3],
    window_lit: [f64; 3],
    band: [f64; 3],
    column: [f64; 3],
    shop: [f64; 3],
    roof: [f64; 3],
    floor_height: f64,
    bay_width: f64,
    window_w: f64,
    window_h: f64,
    column_every: i64,
    lit_threshold: u64,
}

const PALETTE: [[f64; 3]; 10] = [
    [176.0, 168.0, 156.0],
    [150.0, 78.0, 62.0],
    [204.0, 190.0, 150.0],
    [110.0, 124.0, 140.0],
    [188.0, 120.0, 80.0],
    [92.0, 98.0, 104.0],
    [220.0, 214.0, 200.0],
    [120.0, 140.0, 110.0],
    [168.0, 104.0, 120.0],
    [84.0, 110.0, 160.0],
];

impl FacadeStyle {
    fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pick = PALETTE[rng.gen_range(0..PALETTE.len())];
        let base: [f64; 3] = std::array::from_fn(|i| (pick[i] + rng.gen_range(-22.0..22.0)).clamp(20.0, 240.0));
        let scale = |c: [f64; 3], s: f64| -> [f64; 3] { std::array::from_fn(|i| (c[i] * s).clamp(0.0, 255.0)) };
        let glass_tint = rng.gen_range(0..3);
        let window_dark = match glass_tint {
            0 => [38.0, 48.0, 70.0],
            1 => [60.0, 66.0, 70.0],
            _ => [28.0, 34.0, 40.0],
        };
        Self {
            base,
            window_dark,
            window_lit: [214.0, 206.0, 160.0],
            band: scale(base, rng.gen_range(0.6..0.8)),
            column: scale(base, rng.gen_range(1.08..1.25)),
            shop: scale(base, rng.gen_range(0.45..0.65)),
            roof: [58.0, 56.0, 60.0],
            floor_height: rng.gen_range(3.0..4.4),
            bay_width: rng.gen_range(2.6..5.2),
            window_w: rng.gen_range(0.35..0.7),
            window_h: rng.gen_range(0.35..0.65),
            column_every: rng.gen_range(2..6),
            lit_threshold: rng.gen_range(0..40),
        }
    }

    fn wall(&self, u: f64, z: f64, face_len: f64) -> [f64; 3] {
        if u < 0.8 || u > face_len - 0.8 {
            return self.column;
        }
        let floor = (z / self.floor_height).floor() as i64;
        let fz = z / self.floor_height - floor as f64;
        let bay = (u / self.bay_width).floor() as i64;
        let fu = u / self.bay_width - bay as f64;
        if floor == 0 {
            if fz > 0.1 && fz < 0.78 && fu > 0.08 && fu < 0.92 {
                return self.shop;
            }
            return self.band;
        }
        if fz < 0.09 {
            return self.band;
        }
        if bay.rem_euclid(self.column_every) == 0 && fu < 0.22 {
            return self.column;
        }
        if (fu - 0.5).abs() < self.window_w / 2.0 && (fz - 0.55).abs() < self.window_h / 2.0 {
            let h = hash2(bay, floor) % 100;
            return if h < self.lit_threshold {
                self.window_lit
            } else {
                self.window_dark
            };
        }
        self.base
    }
}

fn hash2(a: i64, b: i64) -> u64 {
    let mut h = (a as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (b as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h ^= h >> 29;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^ (h >> 32)
}

fn jitter(c: [f64; 3], p: Vec2, cell: f64, amp: f64) -> [f64; 3] {
    let h = hash2((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);
    let n = (h % 1000) as f64 / 1000.0 * 2.0 - 1.0;
    std::array::from_fn(|i| c[i] + n * amp)
}

fn to_rgb(c: [f64; 3]) -> Rgb {
    std::array::from_fn(|i| c[i].round().clamp(0.0, 255.0) as u8)
}

fn tint(c: [f64; 3], s: f64) -> [f64; 3] {
    std::array::from_fn(|i| c[i] * s)
}

/// Spatial index and shading tables for one city.
pub struct Scene<'a> {
    city: &'a CityModel,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
    max_height: f64,
    styles: Vec<FacadeStyle>,
}

impl<'a> Scene<'a> {
    pub fn new(city: &'a CityModel) -> Self {
        let nx = ((city.extent.x / GRID_CELL).ceil() as usize).max(1);
        let ny = ((city.extent.y / GRID_CELL).ceil() as usize).max(1);
        let mut cells = vec![Vec::new(); nx * ny];
        for (i, b) in city.buildings.iter().enumerate() {
            let cx0 = ((b.footprint.min.x / GRID_CELL).floor().max(0.0) as usize).min(nx - 1);
            let cx1 = ((b.footprint.max.x / GRID_CELL).floor().max(0.0) as usize).min(nx - 1);
            let cy0 = ((b.footprint.min.y / GRID_CELL).floor().max(0.0) as usize).min(ny - 1);
            let cy1 = ((b.footprint.max.y / GRID_CELL).floor().max(0.0) as usize).min(ny - 1);
            for cy in cy0..=cy1 {
                for cx in cx0..=cx1 {
                    cells[cy * nx + cx].push(i as u32);
                }
            }
        }
        let max_height = city.buildings.iter().map(|b| b.height).fold(0.0, f64::max);
        let styles = city
            .buildings
            .iter()
            .map(|b| FacadeStyle::from_seed(b.texture_seed))
            .collect();
        Self {
            city,
            nx,
            ny,
            cells,
            max_height,
            styles,
        }
    }

    pub fn city(&self) -> &CityModel {
        self.city
    }

    pub fn check_camera(&self, cam: &CameraConfig) -> Result<(), RenderError> {
        let p = cam.position;
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) || p.z <= 0.0 {
            return Err(RenderError::InsideGeometry(format!("camera at {p:?} is not above ground")));
        }
        for (i, b) in self.city.buildings.iter().enumerate() {
            if b.footprint.contains(p.xy()) && p.z <= b.height {
                return Err(RenderError::InsideGeometry(format!("camera inside building {i}")));
            }
        }
        if cam.width == 0 || cam.height == 0 {
            return Err(RenderError::Camera("empty image size".into()));
        }
        if !(cam.horizontal_fov > 0.0 && cam.horizontal_fov < std::f64::consts::PI) {
            return Err(RenderError::Camera("field of view must be in (0, pi)".into()));
        }
        Ok(())
    }

    /// Nearest surface along `o + t d`, `t > 0`.
    pub(crate) fn trace(&self, o: Vec3, d: Vec3) -> Surface {
        let mut best = f64::INFINITY;
        let mut surface = Surface::Sky;

        if d.z < 0.0 {
            best = -o.z / d.z;
            surface = Surface::Ground(Vec2::new(o.x + d.x * best, o.y + d.y * best));
        }

        if let Some((t, s)) = self.trace_billboard(o, d) {
            if t < best {
                best = t;
                surface = s;
            }
        }

        if let Some((t, s)) = self.trace_buildings(o, d, best) {
            if t < best {
                surface = s;
            }
        }
        surface
    }

    fn trace_billboard(&self, o: Vec3, d: Vec3) -> Option<(f64, Surface)> {
        let bb = &self.city.billboard;
        let n = bb.normal;
        let denom = d.x * n.x + d.y * n.y;
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = ((bb.center.x - o.x) * n.x + (bb.center.y - o.y) * n.y) / denom;
        if t <= EPS {
            return None;
        }
        let p = o + d * t;
        let r = bb.face_right();
        let lateral = (p.x - bb.center.x) * r.x + (p.y - bb.center.y) * r.y;
        let dz = p.z - bb.center.z;
        if lateral.abs() > bb.width / 2.0 || dz.abs() > bb.height / 2.0 {
            return None;
        }
        if denom >= 0.0 {
            return Some((t, Surface::BillboardBack));
        }
        let cells = bb.cells as f64;
        let u = lateral / bb.width + 0.5;
        let v = 0.5 - dz / bb.height;
        let cx = ((u * cells).floor() as i64).clamp(0, bb.cells as i64 - 1) as u8;
        let cy = ((v * cells).floor() as i64).clamp(0, bb.cells as i64 - 1) as u8;
        Some((t, Surface::BillboardFront { cx, cy }))
    }

    fn trace_buildings(&self, o: Vec3, d: Vec3, limit: f64) -> Option<(f64, Surface)> {
        let (w, h) = (self.city.extent.x, self.city.extent.y);
        // clip the ray's ground projection to the grid
        let mut t0 = 0.0f64;
        let mut t1 = limit;
        for (oc, dc, hi) in [(o.x, d.x, w), (o.y, d.y, h)] {
            if dc.abs() < 1e-15 {
                if oc < 0.0 || oc > hi {
                    return None;
                }
            } else {
                let a = (0.0 - oc) / dc;
                let b = (hi - oc) / dc;
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
        }
        if d.z > 0.0 {
            t1 = t1.min((self.max_height - o.z) / d.z);
        }
        if !(t0 <= t1) {
            return None;
        }

        let start = Vec2::new(o.x + d.x * t0, o.y + d.y * t0);
        let mut ix = ((start.x / GRID_CELL).floor().max(0.0) as usize).min(self.nx - 1) as i64;
        let mut iy = ((start.y / GRID_CELL).floor().max(0.0) as usize).min(self.ny - 1) as i64;
        let (step_x, delta_x, mut next_x) = dda_axis(o.x, d.x, ix);
        let (step_y, delta_y, mut next_y) = dda_axis(o.y, d.y, iy);

        let inv = Vec3::new(1.0 / d.x, 1.0 / d.y, 1.0 / d.z);
        let mut best = f64::INFINITY;
        let mut hit = None;
        loop {
            for &bi in &self.cells[iy as usize * self.nx + ix as usize] {
                let b = &self.city.buildings[bi as usize];
                if let Some((t, face)) = box_hit(o, inv, b) {
                    if t > EPS && t < best {
                        best = t;
                        hit = Some((bi as usize, face));
                    }
                }
            }
            let exit = next_x.min(next_y);
            if best <= exit || exit > t1 {
                break;
            }
            if next_x < next_y {
                ix += step_x;
                next_x += delta_x;
            } else {
                iy += step_y;
                next_y += delta_y;
            }
            if ix < 0 || iy < 0 || ix >= self.nx as i64 || iy >= self.ny as i64 {
                break;
            }
        }
        let (bi, face) = hit?;
        if best >= limit {
            return None;
        }
        let p = o + d * best;
        let b = &self.city.buildings[bi];
        let s = match face {
            Face::Roof => Surface::Roof { building: bi },
            Face::West | Face::East => Surface::Wall {
                building: bi,
                face,
                u: p.y - b.footprint.min.y,
                z: p.z,
            },
            Face::South | Face::North => Surface::Wall {
                building: bi,
                face,
                u: p.x - b.footprint.min.x,
                z: p.z,
            },
        };
        Some((best, s))
    }

    pub(crate) fn shade(&self, s: Surface, row: usize, height: usize, patch: Option<&Patch>) -> Rgb {
        match s {
            Surface::Sky => sky_color(row, height),
            Surface::Ground(p) => to_rgb(self.ground_color(p)),
            Surface::Wall { building, face, u, z } => {
                let b = &self.city.buildings[building];
                let len = match face {
                    Face::West | Face::East => b.footprint.height(),
                    _ => b.footprint.width(),
                };
                let shade = match face {
                    Face::South => 1.0,
                    Face::East => 0.92,
                    Face::North => 0.82,
                    Face::West => 0.74,
                    Face::Roof => 1.0,
                };
                let mut c = self.styles[building].wall(u, z, len);
                if z > b.height - 0.6 {
                    c = self.styles[building].band;
                }
                to_rgb(tint(c, shade))
            }
            Surface::Roof { building } => to_rgb(self.styles[building].roof),
            Surface::BillboardFront { cx, cy } => match patch {
                Some(p) => p.get(cx as usize, cy as usize),
                None => [0, 0, 0],
            },
            Surface::BillboardBack => BILLBOARD_BACK,
        }
    }

    fn ground_color(&self, p: Vec2) -> [f64; 3] {
        let city = self.city;
        match city.ground_at(p) {
            GroundKind::Street { index } => {
                let s = &city.streets[index];
                let lat = s.lateral(p);
                let along = s.along(p);
                let half = s.width / 2.0;
                let white = [226.0, 226.0, 220.0];
                if lat.abs() < 0.2 && along.rem_euclid(12.0) < 6.0 {
                    return [232.0, 196.0, 60.0];
                }
                if ((lat.abs() - s.width / 4.0).abs() < 0.12) && along.rem_euclid(9.0) < 3.0 {
                    return white;
                }
                if lat.abs() > half - 0.8 && lat.abs() < half - 0.5 {
                    return white;
                }
                jitter([70.0, 70.0, 74.0], p, 1.0, 5.0)
            }
            GroundKind::Junction => {
                // zebra crossings at each entry
                for s in &city.streets {
                    let lat = s.lateral(p);
                    let half = s.width / 2.0;
                    if lat.abs() > half - 4.0 && lat.abs() < half - 1.0 {
                        let across = match s.axis {
                            Axis::NorthSouth => p.y,
                            Axis::EastWest => p.x,
                        };
                        if across.rem_euclid(2.0) < 1.0 {
                            return [214.0, 214.0, 208.0];
                        }
                    }
                }
                jitter([66.0, 66.0, 70.0], p, 1.0, 5.0)
            }
            GroundKind::Sidewalk => {
                let curb = city.streets.iter().any(|s| {
                    let e = s.lateral(p).abs() - s.width / 2.0;
                    (0.0..0.4).contains(&e)
                });
                if curb {
                    return [204.0, 204.0, 198.0];
                }
                if p.x.rem_euclid(2.0) < 0.08 || p.y.rem_euclid(2.0) < 0.08 {
                    return [128.0, 126.0, 120.0];
                }
                jitter([162.0, 158.0, 150.0], p, 2.0, 4.0)
            }
            GroundKind::Lot => jitter([74.0, 112.0, 60.0], p, 4.0, 10.0),
            GroundKind::Outside => jitter([126.0, 112.0, 86.0], p, 8.0, 8.0),
        }
    }

    /// Render a frame. Billboard-front hits are reported per pixel as
    /// `(pixel_index, cx, cy)` in row-major order.
    pub(crate) fn render(
        &self,
        cam: &CameraConfig,
        patch: Option<&Patch>,
    ) -> Result<(Image, Vec<(u32, u8, u8)>), RenderError> {
        self.check_camera(cam)?;
        let basis = RayBasis::new(cam);
        let (w, h) = (cam.width, cam.height);
        let o = cam.position;
        let rows: Vec<(Vec<u8>, Vec<(u32, u8, u8)>)> = (0..h)
            .into_par_iter()
            .map(|py| {
                let mut px_row = Vec::with_capacity(w * 3);
                let mut hits = Vec::new();
                for px in 0..w {
                    let s = self.trace(o, basis.direction(px, py));
                    if let Surface::BillboardFront { cx, cy } = s {
                        hits.push(((py * w + px) as u32, cx, cy));
                    }
                    px_row.extend_from_slice(&self.shade(s, py, h, patch));
                }
                (px_row, hits)
            })
            .collect();
        let mut img = Image::new(w, h);
        let mut table = Vec::new();
        for (py, (row, hits)) in rows.into_iter().enumerate() {
            img.pixels[py * w * 3..(py + 1) * w * 3].copy_from_slice(&row);
            table.extend(hits);
        }
        Ok((img, table))
    }
}

fn dda_axis(o: f64, d: f64, i: i64) -> (i64, f64, f64) {
    if d > 0.0 {
        (1, GRID_CELL / d, ((i + 1) as f64 * GRID_CELL - o) / d)
    } else if d < 0.0 {
        (-1, -GRID_CELL / d, (i as f64 * GRID_CELL - o) / d)
    } else {
        (0, f64::INFINITY, f64::INFINITY)
    }
}

fn box_hit(o: Vec3, inv: Vec3, b: &Building) -> Option<(f64, Face)> {
    let (x0, x1) = ((b.footprint.min.x - o.x) * inv.x, (b.footprint.max.x - o.x) * inv.x);
    let (y0, y1) = ((b.footprint.min.y - o.y) * inv.y, (b.footprint.max.y - o.y) * inv.y);
    let (z0, z1) = ((0.0 - o.z) * inv.z, (b.height - o.z) * inv.z);
    let (txn, txf, fx) = if x0 < x1 { (x0, x1, Face::West) } else { (x1, x0, Face::East) };
    let (tyn, tyf, fy) = if y0 < y1 { (y0, y1, Face::South) } else { (y1, y0, Face::North) };
    let (tzn, tzf) = if z0 < z1 { (z0, z1) } else { (z1, z0) };
    let near = txn.max(tyn).max(tzn);
    let far = txf.min(tyf).min(tzf);
    if !(near <= far) || far <= 0.0 {
        return None;
    }
    let face = if near == txn {
        fx
    } else if near == tyn {
        fy
    } else {
        Face::Roof
    };
    Some((near, face))
}
