use super::WorldError;
use crate::geom::{Rect, Vec2, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Resolution of the billboard patch grid along each side.
pub const PATCH_CELLS: usize = 16;

const MIN_BLOCK: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IntersectionId {
    /// Index of the north-south street (west to east).
    pub ns: usize,
    /// Index of the east-west street (south to north).
    pub ew: usize,
}

impl IntersectionId {
    pub const fn new(ns: usize, ew: usize) -> Self {
        Self { ns, ew }
    }
}

impl std::fmt::Display for IntersectionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{}", self.ns, self.ew)
    }
}

impl std::str::FromStr for IntersectionId {
    type Err = WorldError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || WorldError::Route(format!("cannot parse intersection id `{s}` (expected NS,EW)"));
        let (a, b) = s.split_once(',').ok_or_else(bad)?;
        Ok(Self {
            ns: a.trim().parse().map_err(|_| bad())?,
            ew: b.trim().parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    NorthSouth,
    EastWest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Heading {
    North,
    South,
    East,
    West,
}

impl Heading {
    pub fn vector(self) -> Vec2 {
        match self {
            Heading::North => Vec2::new(0.0, 1.0),
            Heading::South => Vec2::new(0.0, -1.0),
            Heading::East => Vec2::new(1.0, 0.0),
            Heading::West => Vec2::new(-1.0, 0.0),
        }
    }

    pub fn axis(self) -> Axis {
        match self {
            Heading::North | Heading::South => Axis::NorthSouth,
            Heading::East | Heading::West => Axis::EastWest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Street {
    pub axis: Axis,
    pub index: usize,
    /// x of a north-south street, y of an east-west street.
    pub center: f64,
    pub width: f64,
    /// Span along the street direction.
    pub start: f64,
    pub end: f64,
}

impl Street {
    /// The drivable surface (curb to curb).
    pub fn carriageway(&self) -> Rect {
        let h = self.width / 2.0;
        match self.axis {
            Axis::NorthSouth => Rect::new(
                Vec2::new(self.center - h, self.start),
                Vec2::new(self.center + h, self.end),
            ),
            Axis::EastWest => Rect::new(
                Vec2::new(self.start, self.center - h),
                Vec2::new(self.end, self.center + h),
            ),
        }
    }

    /// Curb-to-property-line strips on both sides of the street.
    pub fn sidewalk_strips(&self, sidewalk: f64) -> [Rect; 2] {
        let h = self.width / 2.0;
        match self.axis {
            Axis::NorthSouth => [
                Rect::new(
                    Vec2::new(self.center - h - sidewalk, self.start),
                    Vec2::new(self.center - h, self.end),
                ),
                Rect::new(
                    Vec2::new(self.center + h, self.start),
                    Vec2::new(self.center + h + sidewalk, self.end),
                ),
            ],
            Axis::EastWest => [
                Rect::new(
                    Vec2::new(self.start, self.center - h - sidewalk),
                    Vec2::new(self.end, self.center - h),
                ),
                Rect::new(
                    Vec2::new(self.start, self.center + h),
                    Vec2::new(self.end, self.center + h + sidewalk),
                ),
            ],
        }
    }

    /// Signed offset of `p` from the street centerline, across the street.
    pub fn lateral(&self, p: Vec2) -> f64 {
        match self.axis {
            Axis::NorthSouth => p.x - self.center,
            Axis::EastWest => p.y - self.center,
        }
    }

    pub fn along(&self, p: Vec2) -> f64 {
        match self.axis {
            Axis::NorthSouth => p.y,
            Axis::EastWest => p.x,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub footprint: Rect,
    pub height: f64,
    pub texture_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intersection {
    pub id: IntersectionId,
    pub position: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Billboard {
    pub center: Vec3,
    pub width: f64,
    pub height: f64,
    /// Horizontal unit normal of the printed face.
    pub normal: Vec2,
    pub cells: usize,
}

impl Billboard {
    /// Unit vector pointing to the right of a viewer standing in front of the face.
    pub fn face_right(&self) -> Vec2 {
        Vec2::new(-self.normal.y, self.normal.x)
    }

    /// World position of a point on the face given normalized face coordinates,
    /// `u` left to right and `v` top to bottom, both in `[0, 1]`.
    pub fn face_point(&self, u: f64, v: f64) -> Vec3 {
        let r = self.face_right();
        let off = (u - 0.5) * self.width;
        Vec3::new(
            self.center.x + r.x * off,
            self.center.y + r.y * off,
            self.center.z + (0.5 - v) * self.height,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BillboardConfig {
    pub intersection: IntersectionId,
    /// Driving direction of the approach the billboard faces.
    pub approach: Heading,
    pub width: f64,
    pub height: f64,
    /// Height of the lower edge above the ground.
    pub clearance: f64,
    /// Distance of the billboard center before the crossing street's curb line.
    pub offset_before_stop_line: f64,
}

impl Default for BillboardConfig {
    fn default() -> Self {
        Self {
            intersection: IntersectionId::new(1, 2),
            approach: Heading::North,
            width: 6.0,
            height: 3.0,
            clearance: 1.0,
            offset_before_stop_line: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CityConfig {
    pub extent: Vec2,
    pub ns_streets: usize,
    pub ew_streets: usize,
    pub street_width: f64,
    pub sidewalk_width: f64,
    /// Street centerlines are displaced uniformly by up to this much.
    pub street_jitter: f64,
    /// Gap between the sidewalk and the nearest building.
    pub setback: f64,
    /// Target lot edge length used to subdivide blocks.
    pub lot_size: f64,
    pub lot_gap: f64,
    pub min_height: f64,
    pub max_height: f64,
    pub empty_lot_probability: f64,
    pub billboard: BillboardConfig,
}

impl Default for CityConfig {
    fn default() -> Self {
        Self {
            extent: Vec2::new(600.0, 600.0),
            ns_streets: 4,
            ew_streets: 4,
            street_width: 50.0,
            sidewalk_width: 5.0,
            street_jitter: 8.0,
            setback: 2.0,
            lot_size: 30.0,
            lot_gap: 3.0,
            min_height: 8.0,
            max_height: 55.0,
            empty_lot_probability: 0.1,
            billboard: BillboardConfig::default(),
        }
    }
}

impl CityConfig {
    fn street_spacing(&self) -> (f64, f64) {
        (
            self.extent.x / self.ns_streets as f64,
            self.extent.y / self.ew_streets as f64,
        )
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let err = |m: String| Err(WorldError::Config(m));
        if self.ns_streets < 2 || self.ew_streets < 2 {
            return err(format!(
                "need at least 2 streets per direction, got {} NS x {} EW",
                self.ns_streets, self.ew_streets
            ));
        }
        let positive = [
            ("extent.x", self.extent.x),
            ("extent.y", self.extent.y),
            ("street_width", self.street_width),
            ("lot_size", self.lot_size),
            ("min_height", self.min_height),
            ("billboard.width", self.billboard.width),
            ("billboard.height", self.billboard.height),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return err(format!("{name} must be positive, got {v}"));
            }
        }
        let nonneg = [
            ("sidewalk_width", self.sidewalk_width),
            ("street_jitter", self.street_jitter),
            ("setback", self.setback),
            ("lot_gap", self.lot_gap),
            ("billboard.clearance", self.billboard.clearance),
            ("billboard.offset_before_stop_line", self.billboard.offset_before_stop_line),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return err(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.max_height < self.min_height {
            return err("max_height below min_height".into());
        }
        if !(0.0..1.0).contains(&self.empty_lot_probability) {
            return err("empty_lot_probability must be in [0, 1)".into());
        }
        let (sx, sy) = self.street_spacing();
        let corridor = self.street_width + 2.0 * (self.sidewalk_width + self.setback + self.street_jitter);
        if sx.min(sy) - corridor < MIN_BLOCK {
            return err(format!(
                "extent too small: street spacing {:.1} m leaves less than {MIN_BLOCK} m per block",
                sx.min(sy)
            ));
        }
        if sx.min(sy) / 2.0 - corridor / 2.0 < MIN_BLOCK / 2.0 {
            return err("extent too small for the outer blocks".into());
        }
        let b = &self.billboard;
        if b.intersection.ns >= self.ns_streets || b.intersection.ew >= self.ew_streets {
            return err(format!("billboard intersection {} outside the grid", b.intersection));
        }
        if (b.width + self.sidewalk_width) / 2.0 >= self.sidewalk_width + self.setback {
            return err("billboard too wide for sidewalk plus setback".into());
        }
        let along = self.street_width / 2.0 + b.offset_before_stop_line;
        let spacing = match b.approach.axis() {
            Axis::NorthSouth => sy,
            Axis::EastWest => sx,
        };
        if along + self.street_width / 2.0 + 2.0 * self.street_jitter >= spacing {
            return err("billboard offset reaches the previous intersection".into());
        }
        Ok(())
    }
}

/// Surface classification of a ground point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroundKind {
    /// Carriageway of one street; `index` into `CityModel::streets`.
    Street { index: usize },
    /// Overlap of two carriageways.
    Junction,
    Sidewalk,
    Lot,
    Outside,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityModel {
    pub seed: u64,
    pub extent: Vec2,
    pub sidewalk_width: f64,
    pub streets: Vec<Street>,
    pub buildings: Vec<Building>,
    pub intersections: Vec<Intersection>,
    pub billboard: Billboard,
    pub billboard_config: BillboardConfig,
}

impl CityModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("city serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, WorldError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(Vec2::new(0.0, 0.0), self.extent)
    }

    pub fn intersection(&self, id: IntersectionId) -> Option<&Intersection> {
        self.intersections.iter().find(|i| i.id == id)
    }

    pub fn ns_street(&self, index: usize) -> Option<&Street> {
        self.streets
            .iter()
            .find(|s| s.axis == Axis::NorthSouth && s.index == index)
    }

    pub fn ew_street(&self, index: usize) -> Option<&Street> {
        self.streets
            .iter()
            .find(|s| s.axis == Axis::EastWest && s.index == index)
    }

    pub fn ground_at(&self, p: Vec2) -> GroundKind {
        if !self.bounds().contains(p) {
            return GroundKind::Outside;
        }
        let mut hit = None;
        for (i, s) in self.streets.iter().enumerate() {
            if s.carriageway().contains(p) {
                if hit.is_some() {
                    return GroundKind::Junction;
                }
                hit = Some(i);
            }
        }
        if let Some(index) = hit {
            return GroundKind::Street { index };
        }
        let on_sidewalk = self
            .streets
            .iter()
            .any(|s| s.sidewalk_strips(self.sidewalk_width).iter().any(|r| r.contains(p)));
        if on_sidewalk {
            GroundKind::Sidewalk
        } else {
            GroundKind::Lot
        }
    }

    pub fn on_street(&self, p: Vec2) -> bool {
        matches!(self.ground_at(p), GroundKind::Street { .. } | GroundKind::Junction)
    }

    /// Brute-force check of the structural invariants. Returns a description of the
    /// first violation found.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (bi, b) in self.buildings.iter().enumerate() {
            for s in &self.streets {
                if b.footprint.overlaps(&s.carriageway()) {
                    return Err(format!("building {bi} overlaps street {:?} {}", s.axis, s.index));
                }
                for sw in s.sidewalk_strips(self.sidewalk_width) {
                    if b.footprint.overlaps(&sw) {
                        return Err(format!("building {bi} overlaps a sidewalk"));
                    }
                }
            }
        }
        for i in &self.intersections {
            let n = self
                .streets
                .iter()
                .filter(|s| s.carriageway().contains(i.position))
                .count();
            if n != 2 {
                return Err(format!("intersection {} lies on {n} streets", i.id));
            }
        }
        let bb = &self.billboard;
        if (bb.normal.norm() - 1.0).abs() > 1e-12 {
            return Err("billboard normal not unit length".into());
        }
        if self.ground_at(bb.center.xy()) != GroundKind::Sidewalk {
            return Err("billboard is not on a sidewalk".into());
        }
        Ok(())
    }
}

pub fn generate_city(seed: u64, config: &CityConfig) -> Result<CityModel, WorldError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (sx, sy) = config.street_spacing();
    let jitter = |rng: &mut ChaCha8Rng| {
        if config.street_jitter > 0.0 {
            rng.gen_range(-config.street_jitter..=config.street_jitter)
        } else {
            0.0
        }
    };

    let ns_centers: Vec<f64> = (0..config.ns_streets)
        .map(|i| sx * (i as f64 + 0.5) + jitter(&mut rng))
        .collect();
    let ew_centers: Vec<f64> = (0..config.ew_streets)
        .map(|j| sy * (j as f64 + 0.5) + jitter(&mut rng))
        .collect();

    let mut streets = Vec::with_capacity(ns_centers.len() + ew_centers.len());
    for (index, &center) in ns_centers.iter().enumerate() {
        streets.push(Street {
            axis: Axis::NorthSouth,
            index,
            center,
            width: config.street_width,
            start: 0.0,
            end: config.extent.y,
        });
    }
    for (index, &center) in ew_centers.iter().enumerate() {
        streets.push(Street {
            axis: Axis::EastWest,
            index,
            center,
            width: config.street_width,
            start: 0.0,
            end: config.extent.x,
        });
    }

    let mut intersections = Vec::new();
    for (ew, &y) in ew_centers.iter().enumerate() {
        for (ns, &x) in ns_centers.iter().enumerate() {
            intersections.push(Intersection {
                id: IntersectionId::new(ns, ew),
                position: Vec2::new(x, y),
            });
        }
    }

    let margin = config.street_width / 2.0 + config.sidewalk_width + config.setback;
    let xs = block_intervals(&ns_centers, margin, config.extent.x);
    let ys = block_intervals(&ew_centers, margin, config.extent.y);

    let mut buildings = Vec::new();
    for &(y0, y1) in &ys {
        for &(x0, x1) in &xs {
            subdivide_block(
                Rect::new(Vec2::new(x0, y0), Vec2::new(x1, y1)),
                config,
                &mut rng,
                &mut buildings,
            );
        }
    }

    let billboard = place_billboard(config, &ns_centers, &ew_centers);

    Ok(CityModel {
        seed,
        extent: config.extent,
        sidewalk_width: config.sidewalk_width,
        streets,
        buildings,
        intersections,
        billboard,
        billboard_config: config.billboard.clone(),
    })
}

fn block_intervals(centers: &[f64], margin: f64, extent: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(centers.len() + 1);
    let mut lo = 0.0;
    for &c in centers {
        out.push((lo, c - margin));
        lo = c + margin;
    }
    out.push((lo, extent));
    out
}

fn subdivide_block(block: Rect, config: &CityConfig, rng: &mut ChaCha8Rng, out: &mut Vec<Building>) {
    let nx = ((block.width() / config.lot_size).round() as usize).max(1);
    let ny = ((block.height() / config.lot_size).round() as usize).max(1);
    let gap_x = if nx > 1 { config.lot_gap } else { 0.0 };
    let gap_y = if ny > 1 { config.lot_gap } else { 0.0 };
    let lw = (block.width() - gap_x * (nx - 1) as f64) / nx as f64;
    let lh = (block.height() - gap_y * (ny - 1) as f64) / ny as f64;
    for j in 0..ny {
        for i in 0..nx {
            let empty = rng.gen_bool(config.empty_lot_probability);
            let inset: [f64; 4] = std::array::from_fn(|_| rng.gen_range(0.0..0.12));
            let height = rng.gen_range(config.min_height..=config.max_height);
            let texture_seed: u64 = rng.gen();
            if empty || lw <= 1.0 || lh <= 1.0 {
                continue;
            }
            let x0 = block.min.x + i as f64 * (lw + gap_x);
            let y0 = block.min.y + j as f64 * (lh + gap_y);
            // Only interior lot edges get an inset so street fronts stay aligned.
            let left = if i > 0 { inset[0] * lw } else { 0.0 };
            let right = if i + 1 < nx { inset[1] * lw } else { 0.0 };
            let bottom = if j > 0 { inset[2] * lh } else { 0.0 };
            let top = if j + 1 < ny { inset[3] * lh } else { 0.0 };
            out.push(Building {
                footprint: Rect::new(
                    Vec2::new(x0 + left, y0 + bottom),
                    Vec2::new(x0 + lw - right, y0 + lh - top),
                ),
                height,
                texture_seed,
            });
        }
    }
}

fn place_billboard(config: &CityConfig, ns: &[f64], ew: &[f64]) -> Billboard {
    let b = &config.billboard;
    let node = Vec2::new(ns[b.intersection.ns], ew[b.intersection.ew]);
    let axis = b.approach.vector();
    let along = -(config.street_width / 2.0 + b.offset_before_stop_line);
    let lateral = config.street_width / 2.0 + config.sidewalk_width / 2.0;
    let c = node + axis * along + axis.right() * lateral;
    Billboard {
        center: Vec3::new(c.x, c.y, b.clearance + b.height / 2.0),
        width: b.width,
        height: b.height,
        normal: -axis,
        cells: PATCH_CELLS,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let a = generate_city(42, &CityConfig::default()).unwrap();
        let b = generate_city(42, &CityConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
        let c = generate_city(43, &CityConfig::default()).unwrap();
        assert_ne!(a.to_json(), c.to_json());
    }

    #[test]
    fn three_by_three_grid_has_nine_intersections() {
        let cfg = CityConfig {
            ns_streets: 3,
            ew_streets: 3,
            billboard: BillboardConfig {
                intersection: IntersectionId::new(0, 1),
                ..Default::default()
            },
            ..Default::default()
        };
        let city = generate_city(42, &cfg).unwrap();
        assert_eq!(city.intersections.len(), 9);
        assert_eq!(city.streets.len(), 6);
    }

    #[test]
    fn rejects_degenerate_configs() {
        let zero = CityConfig {
            ns_streets: 0,
            ..Default::default()
        };
        assert!(matches!(generate_city(1, &zero), Err(WorldError::Config(_))));
        let width = CityConfig {
            street_width: 0.0,
            ..Default::default()
        };
        assert!(matches!(generate_city(1, &width), Err(WorldError::Config(_))));
        let small = CityConfig {
            extent: Vec2::new(150.0, 150.0),
            ..Default::default()
        };
        assert!(matches!(generate_city(1, &small), Err(WorldError::Config(_))));
        let neg = CityConfig {
            extent: Vec2::new(-600.0, 600.0),
            ..Default::default()
        };
        assert!(generate_city(1, &neg).is_err());
    }

    #[test]
    fn no_building_touches_street_or_sidewalk() {
        let city = generate_city(7, &CityConfig::default()).unwrap();
        assert!(!city.buildings.is_empty());
        // exhaustive pairwise footprint test, written against raw coordinates
        for b in &city.buildings {
            for s in &city.streets {
                let half = s.width / 2.0 + city.sidewalk_width;
                let (lo, hi) = match s.axis {
                    Axis::NorthSouth => (b.footprint.min.x, b.footprint.max.x),
                    Axis::EastWest => (b.footprint.min.y, b.footprint.max.y),
                };
                let disjoint = hi <= s.center - half || lo >= s.center + half;
                assert!(disjoint, "building {:?} crosses street {:?}", b.footprint, s);
            }
        }
        city.check_invariants().unwrap();
    }

    #[test]
    fn billboard_sits_before_the_intersection_facing_traffic() {
        let city = generate_city(3, &CityConfig::default()).unwrap();
        let node = city.intersection(IntersectionId::new(1, 2)).unwrap().position;
        let bb = &city.billboard;
        assert_eq!(bb.normal, Vec2::new(0.0, -1.0));
        let along = (bb.center.xy() - node).dot(Vec2::new(0.0, 1.0));
        assert!((along - -40.0).abs() < 1e-9);
        assert_eq!(city.ground_at(bb.center.xy()), GroundKind::Sidewalk);
        assert_eq!(bb.cells, 16);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let city = generate_city(11, &CityConfig::default()).unwrap();
        let back = CityModel::from_json(&city.to_json()).unwrap();
        assert_eq!(city, back);
        assert_eq!(back.to_json(), city.to_json());
    }

    #[test]
    fn intersection_id_parses() {
        let id: IntersectionId = "2, 3".parse().unwrap();
        assert_eq!(id, IntersectionId::new(2, 3));
        assert!("2".parse::<IntersectionId>().is_err());
    }
}
