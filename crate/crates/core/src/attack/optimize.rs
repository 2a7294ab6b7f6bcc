use super::perturb::{propose_perturbation, PerturbationLimits};
use super::value::{classify_shift, value_function, ShiftSample, ValueParams};
use super::AttackError;
use crate::geom::Vec2;
use crate::locnet::{ForwardSession, PoseRegressor, RawOutput};
use crate::nav::VehicleConfig;
use crate::render::{CalibratedView, CameraConfig, Image, Patch, PixelRect, Scene};
use crate::world::{CityModel, Route};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Crafting poses: `count` cameras spread uniformly over the last `length` meters before
/// the target intersection, at `(i + offset) * length / count - length`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationPoses {
    pub count: usize,
    pub length: f64,
    /// Fraction of the spacing; 0.5 keeps crafting poses between the drive steps.
    pub offset: f64,
}

impl Default for EvaluationPoses {
    fn default() -> Self {
        Self {
            count: 40,
            length: 200.0,
            offset: 0.5,
        }
    }
}

impl EvaluationPoses {
    pub fn alongs(&self) -> Vec<f64> {
        let spacing = self.length / self.count as f64;
        (0..self.count)
            .map(|i| -self.length + spacing * (i as f64 + self.offset))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum InitPatch {
    Black,
    Random { seed: u64 },
}

impl InitPatch {
    pub fn patch(&self) -> Patch {
        match *self {
            InitPatch::Black => Patch::black(),
            InitPatch::Random { seed } => Patch::random(seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    pub evaluation: EvaluationPoses,
    pub vehicle: VehicleConfig,
    /// Number of proposals.
    pub budget: usize,
    pub limits: PerturbationLimits,
    /// Consecutive rejections after which the rejected proposal is adopted anyway;
    /// `None` never escapes.
    pub escape_threshold: Option<usize>,
    pub value: ValueParams,
    pub init: InitPatch,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            evaluation: EvaluationPoses::default(),
            vehicle: VehicleConfig::default(),
            budget: 20_000,
            limits: PerturbationLimits::default(),
            escape_threshold: Some(50),
            value: ValueParams::default(),
            init: InitPatch::Black,
            seed: 11,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), AttackError> {
        self.limits.validate()?;
        self.value.validate()?;
        if self.escape_threshold == Some(0) {
            return Err(AttackError::Config("escape threshold must be positive".into()));
        }
        let e = &self.evaluation;
        if e.count == 0 || !(e.length > 0.0) || !(0.0..1.0).contains(&e.offset) {
            return Err(AttackError::Config("invalid evaluation pose layout".into()));
        }
        if e.alongs().iter().any(|&a| a >= 0.0) {
            return Err(AttackError::Config("evaluation poses must precede the intersection".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Value of the proposal.
    pub value: f64,
    pub accepted: bool,
    /// Adopted despite not improving.
    pub escape: bool,
    pub current_value: f64,
    pub best_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    /// Best patch seen, the initial one included.
    pub patch: Patch,
    pub best_value: f64,
    pub initial_value: f64,
    /// False when no proposal ever beat the initial patch.
    pub improved: bool,
    pub history: Vec<IterationRecord>,
    /// Per-view forward passes spent.
    pub evaluations: usize,
}

/// Patch artifact metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchMeta {
    pub alpha: f64,
    pub seed: u64,
    pub budget: usize,
    pub evaluations: usize,
    pub initial_value: f64,
    pub final_value: f64,
    pub improved: bool,
}

impl PatchMeta {
    pub fn new(config: &AttackConfig, result: &AttackResult) -> Self {
        Self {
            alpha: config.value.alpha,
            seed: config.seed,
            budget: config.budget,
            evaluations: result.evaluations,
            initial_value: result.initial_value,
            final_value: result.best_value,
            improved: result.improved,
        }
    }
}

pub fn evaluation_cameras(route: &Route, config: &AttackConfig) -> Vec<CameraConfig> {
    config
        .evaluation
        .alongs()
        .into_iter()
        .map(|a| config.vehicle.camera(route, a))
        .collect()
}

pub fn prepare_views(city: &CityModel, cameras: &[CameraConfig]) -> Result<Vec<CalibratedView>, AttackError> {
    let scene = Scene::new(city);
    cameras
        .iter()
        .map(|c| Ok(CalibratedView::new(&scene, c.clone())?))
        .collect()
}

/// Per-view search state: the composite with the current patch and a session on it.
struct ViewState<'a> {
    truth: crate::pose::Pose,
    width: usize,
    image: Image,
    /// Pixel indices per patch cell, row-major cells.
    cell_pixels: Vec<Vec<u32>>,
    session: Option<Box<dyn ForwardSession + 'a>>,
    current: RawOutput,
    proposal: RawOutput,
    touched: bool,
}

impl ViewState<'_> {
    fn paint_cells(&mut self, cells: &[usize], patch: &Patch) -> PixelRect {
        let mut r = PixelRect {
            x0: usize::MAX,
            y0: usize::MAX,
            x1: 0,
            y1: 0,
        };
        for &c in cells {
            let color = patch.cells()[c];
            for &p in &self.cell_pixels[c] {
                let p = p as usize;
                self.image.pixels[p * 3..p * 3 + 3].copy_from_slice(&color);
                let (x, y) = (p % self.width, p / self.width);
                r.x0 = r.x0.min(x);
                r.y0 = r.y0.min(y);
                r.x1 = r.x1.max(x + 1);
                r.y1 = r.y1.max(y + 1);
            }
        }
        r
    }
}

/// Hill-climb the patch on prepared views. The model is only queried forward.
pub fn optimize_on_views<R: PoseRegressor + ?Sized>(
    model: &R,
    views: &[CalibratedView],
    axis: Vec2,
    config: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    config.validate()?;
    if views.is_empty() {
        return Err(AttackError::EmptySamples);
    }
    let norm = model.normalization();
    let initial = config.init.patch();
    let mut states: Vec<ViewState<'_>> = views
        .par_iter()
        .map(|v| {
            let image = v.composite(&initial);
            let mut cell_pixels = vec![Vec::new(); Patch::SIZE * Patch::SIZE];
            for e in &v.table.entries {
                cell_pixels[e.cell_y as usize * Patch::SIZE + e.cell_x as usize].push(e.pixel);
            }
            // views without a visible billboard never change
            let (session, current) = if v.table.is_empty() {
                (None, model.forward_raw(&image)?)
            } else {
                let s = model.session(&image)?;
                let out = s.base_output();
                (Some(s), out)
            };
            Ok(ViewState {
                truth: v.camera.pose(),
                width: image.width,
                image,
                cell_pixels,
                session,
                current,
                proposal: current,
                touched: false,
            })
        })
        .collect::<Result<_, AttackError>>()?;
    let mut evaluations = states.len();

    let value_of = |outs: &mut dyn Iterator<Item = (&crate::pose::Pose, &RawOutput)>| -> Result<f64, AttackError> {
        let samples = outs
            .map(|(truth, raw)| classify_shift(truth, norm.decode(raw).position(), axis))
            .collect::<Result<Vec<ShiftSample>, _>>()?;
        value_function(&samples, &config.value)
    };

    let initial_value = value_of(&mut states.iter().map(|s| (&s.truth, &s.current)))?;
    let mut current_patch = initial.clone();
    let mut current_value = initial_value;
    let mut best_patch = initial;
    let mut best_value = initial_value;
    let mut rejections = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut history = Vec::with_capacity(config.budget);

    for iteration in 0..config.budget {
        let proposal = propose_perturbation(&current_patch, &mut rng, &config.limits);
        let changed: Vec<usize> = (0..Patch::SIZE * Patch::SIZE)
            .filter(|&c| proposal.cells()[c] != current_patch.cells()[c])
            .collect();
        let spent: usize = states
            .par_iter_mut()
            .map(|s| {
                let dirty = s.paint_cells(&changed, &proposal);
                s.touched = !dirty.is_empty();
                match (&mut s.session, s.touched) {
                    (Some(session), true) => {
                        s.proposal = session.eval(&s.image, dirty)?;
                        Ok(1)
                    }
                    _ => {
                        s.proposal = s.current;
                        Ok(0)
                    }
                }
            })
            .collect::<Result<Vec<usize>, AttackError>>()?
            .into_iter()
            .sum();
        evaluations += spent;
        let value = value_of(&mut states.iter().map(|s| (&s.truth, &s.proposal)))?;

        let accepted = value > current_value;
        if !accepted {
            rejections += 1;
        }
        let escape = !accepted && config.escape_threshold.is_some_and(|t| rejections >= t);
        if accepted || escape {
            for s in &mut states {
                if s.touched {
                    if let Some(session) = &mut s.session {
                        session.accept();
                    }
                }
                s.current = s.proposal;
            }
            current_patch = proposal;
            current_value = value;
            rejections = 0;
            if value > best_value {
                best_value = value;
                best_patch = current_patch.clone();
            }
        } else {
            states.par_iter_mut().for_each(|s| {
                if s.touched {
                    s.paint_cells(&changed, &current_patch);
                }
            });
        }
        history.push(IterationRecord {
            iteration,
            value,
            accepted,
            escape,
            current_value,
            best_value,
        });
    }

    Ok(AttackResult {
        improved: best_value > initial_value,
        patch: best_patch,
        best_value,
        initial_value,
        history,
        evaluations,
    })
}

/// Craft a patch for the approach to the route's target intersection.
pub fn optimize_patch<R: PoseRegressor + ?Sized>(
    model: &R,
    city: &CityModel,
    route: &Route,
    config: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    config.validate()?;
    let views = prepare_views(city, &evaluation_cameras(route, config))?;
    optimize_on_views(model, &views, route.approach_axis, config)
}

pub fn write_history_csv(history: &[IterationRecord], path: &Path) -> Result<(), AttackError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in history {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::locnet::{LocNetError, Normalization};
    use crate::pose::Pose;
    use crate::render::{ConversionTable, TableEntry};

    const AXIS: Vec2 = Vec2 { x: 0.0, y: 1.0 };
    const ORIGIN: usize = 32;

    fn norm() -> Normalization {
        Normalization {
            center: Vec2::new(300.0, 300.0),
            half_extent: Vec2::new(300.0, 300.0),
        }
    }

    fn truth(i: usize) -> Pose {
        Pose::new(100.0, 100.0 + 5.0 * i as f64, std::f64::consts::FRAC_PI_2)
    }

    /// Views whose billboard is a 64x64 pixel square, 4x4 pixels per cell. Pixel (0, 0)
    /// stores the view index for the stub.
    fn synthetic_views(n: usize) -> Vec<CalibratedView> {
        (0..n)
            .map(|i| {
                let mut base = Image::filled(224, 224, [90, 90, 90]);
                base.set(0, 0, [i as u8, 0, 0]);
                let mut entries = Vec::new();
                for y in ORIGIN..ORIGIN + 64 {
                    for x in ORIGIN..ORIGIN + 64 {
                        base.set(x, y, [0, 0, 0]);
                        entries.push(TableEntry {
                            pixel: (y * 224 + x) as u32,
                            cell_x: ((x - ORIGIN) / 4) as u8,
                            cell_y: ((y - ORIGIN) / 4) as u8,
                        });
                    }
                }
                let table = ConversionTable {
                    base_image_id: base.fingerprint(),
                    width: 224,
                    height: 224,
                    entries,
                };
                let p = truth(i);
                let camera = CameraConfig::vehicle(p.position(), 0.7, p.theta);
                CalibratedView { camera, base, table }
            })
            .collect()
    }

    /// Predicts the true position moved back along the axis by mean billboard
    /// redness / 255 * 10 m.
    struct Redness;

    impl PoseRegressor for Redness {
        fn normalization(&self) -> Normalization {
            norm()
        }
        fn forward_raw(&self, image: &Image) -> Result<RawOutput, LocNetError> {
            let t = truth(image.get(0, 0)[0] as usize);
            let mut red = 0.0;
            for y in ORIGIN..ORIGIN + 64 {
                for x in ORIGIN..ORIGIN + 64 {
                    red += image.get(x, y)[0] as f64;
                }
            }
            let shift = red / (64.0 * 64.0) / 255.0 * 10.0;
            let pred = Pose::new(t.x, t.y - shift, t.theta);
            Ok(norm().encode(&pred))
        }
    }

    fn mean_red(p: &Patch) -> f64 {
        p.cells().iter().map(|c| c[0] as f64).sum::<f64>() / 256.0
    }

    #[test]
    fn redness_stub_is_driven_red() {
        let views = synthetic_views(6);
        let cfg = AttackConfig {
            budget: 500,
            ..Default::default()
        };
        let r = optimize_on_views(&Redness, &views, AXIS, &cfg).unwrap();
        assert_eq!(r.initial_value, 0.0);
        assert!(r.improved && r.best_value > r.initial_value);
        assert!(mean_red(&r.patch) > 0.0);
        assert_eq!(r.history.len(), 500);
        assert!(r.evaluations > 6);
        // the best value really is the value of the returned patch
        let samples: Vec<ShiftSample> = views
            .iter()
            .map(|v| {
                let p = Redness.predict(&v.composite(&r.patch)).unwrap();
                classify_shift(&v.camera.pose(), p.position(), AXIS).unwrap()
            })
            .collect();
        let v = value_function(&samples, &cfg.value).unwrap();
        assert!((v - r.best_value).abs() < 1e-9);
    }

    #[test]
    fn without_escape_accepted_values_strictly_increase() {
        let views = synthetic_views(4);
        let cfg = AttackConfig {
            budget: 300,
            escape_threshold: None,
            ..Default::default()
        };
        let r = optimize_on_views(&Redness, &views, AXIS, &cfg).unwrap();
        let accepted: Vec<f64> = r.history.iter().filter(|h| h.accepted).map(|h| h.value).collect();
        assert!(accepted.len() > 1);
        assert!(accepted.windows(2).all(|w| w[1] > w[0]));
        assert!(r.history.iter().all(|h| !h.escape));
    }

    #[test]
    fn escapes_recorded_and_best_never_below_initial() {
        let views = synthetic_views(3);
        let cfg = AttackConfig {
            budget: 400,
            escape_threshold: Some(3),
            init: InitPatch::Random { seed: 5 },
            ..Default::default()
        };
        let r = optimize_on_views(&Redness, &views, AXIS, &cfg).unwrap();
        assert!(r.history.iter().any(|h| h.escape));
        assert!(r.best_value >= r.initial_value);
        assert!(r.history.iter().all(|h| h.best_value >= r.initial_value));
    }

    #[test]
    fn zero_budget_returns_initial_patch() {
        let views = synthetic_views(2);
        let cfg = AttackConfig {
            budget: 0,
            ..Default::default()
        };
        let r = optimize_on_views(&Redness, &views, AXIS, &cfg).unwrap();
        assert_eq!(r.patch, Patch::black());
        assert!(!r.improved);
        assert!(r.history.is_empty());
    }

    #[test]
    fn deterministic_given_seed() {
        let views = synthetic_views(3);
        let cfg = AttackConfig {
            budget: 100,
            ..Default::default()
        };
        let a = optimize_on_views(&Redness, &views, AXIS, &cfg).unwrap();
        let b = optimize_on_views(&Redness, &views, AXIS, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_configs_rejected() {
        let views = synthetic_views(1);
        let mut cfg = AttackConfig::default();
        cfg.evaluation.offset = 1.0;
        assert!(optimize_on_views(&Redness, &views, AXIS, &cfg).is_err());
        let cfg = AttackConfig {
            escape_threshold: Some(0),
            ..Default::default()
        };
        assert!(optimize_on_views(&Redness, &views, AXIS, &cfg).is_err());
        let cfg = AttackConfig {
            limits: PerturbationLimits { max_cells: 0, max_delta: 4 },
            ..Default::default()
        };
        assert!(optimize_on_views(&Redness, &views, AXIS, &cfg).is_err());
        assert!(optimize_on_views(&Redness, &[], AXIS, &AttackConfig::default()).is_err());
    }

    #[test]
    fn default_evaluation_layout() {
        let a = EvaluationPoses::default().alongs();
        assert_eq!(a.len(), 40);
        assert_eq!(a[0], -197.5);
        assert_eq!(a[39], -2.5);
    }
}
