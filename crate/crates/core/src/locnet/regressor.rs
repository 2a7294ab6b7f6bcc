use super::loss::{Normalization, RawOutput};
use super::model::PoseModel;
use super::ops::Scalar;
use super::LocNetError;
use crate::pose::Pose;
use crate::render::{Image, PixelRect};

/// Black-box pose predictor: images in, raw head outputs out.
pub trait PoseRegressor: Sync {
    fn normalization(&self) -> Normalization;

    fn input_size(&self) -> usize {
        224
    }

    fn forward_raw(&self, image: &Image) -> Result<RawOutput, LocNetError>;

    fn predict(&self, image: &Image) -> Result<Pose, LocNetError> {
        Ok(self.normalization().decode(&self.forward_raw(image)?))
    }

    /// Start a session for evaluating many small edits of `base`.
    fn session<'a>(&'a self, base: &Image) -> Result<Box<dyn ForwardSession + 'a>, LocNetError> {
        Ok(Box::new(FullSession::new(self, base)?))
    }
}

/// Repeated forward passes on images that differ from a base image only inside a
/// known rectangle. Outputs equal a plain forward pass on the edited image.
pub trait ForwardSession: Send {
    fn base_output(&self) -> RawOutput;

    /// Forward pass on `image`, which must equal the current base outside `dirty`.
    fn eval(&mut self, image: &Image, dirty: PixelRect) -> Result<RawOutput, LocNetError>;

    /// Make the image of the last [`eval`](Self::eval) the new base.
    fn accept(&mut self);
}

/// Session that recomputes the whole network every time.
pub struct FullSession<'a, R: ?Sized> {
    model: &'a R,
    base: RawOutput,
    last: Option<RawOutput>,
}

impl<'a, R: PoseRegressor + ?Sized> FullSession<'a, R> {
    pub fn new(model: &'a R, base: &Image) -> Result<Self, LocNetError> {
        Ok(Self {
            model,
            base: model.forward_raw(base)?,
            last: None,
        })
    }
}

impl<R: PoseRegressor + ?Sized> ForwardSession for FullSession<'_, R> {
    fn base_output(&self) -> RawOutput {
        self.base
    }

    fn eval(&mut self, image: &Image, _dirty: PixelRect) -> Result<RawOutput, LocNetError> {
        let out = self.model.forward_raw(image)?;
        self.last = Some(out);
        Ok(out)
    }

    fn accept(&mut self) {
        if let Some(out) = self.last.take() {
            self.base = out;
        }
    }
}

impl<T: Scalar> PoseRegressor for PoseModel<T> {
    fn normalization(&self) -> Normalization {
        self.norm
    }

    fn input_size(&self) -> usize {
        self.arch.input_size
    }

    fn forward_raw(&self, image: &Image) -> Result<RawOutput, LocNetError> {
        self.forward_image(image)
    }

    fn session<'a>(&'a self, base: &Image) -> Result<Box<dyn ForwardSession + 'a>, LocNetError> {
        Ok(Box::new(LocalSession::new(self, base)?))
    }
}

/// Output rectangle `(y0, y1, x0, x1)` per layer, half-open.
type Region = (usize, usize, usize, usize);

/// Incremental session: caches every convolution activation of the base image and
/// recomputes only the outputs whose receptive field touches the edited pixels.
struct LocalSession<'a, T: Scalar> {
    model: &'a PoseModel<T>,
    size: usize,
    base_input: Vec<T>,
    base_acts: Vec<Vec<T>>,
    work_input: Vec<T>,
    work_acts: Vec<Vec<T>>,
    base_out: RawOutput,
    /// Input rect plus per-layer regions touched by the last eval.
    pending: Option<(Region, Vec<Region>)>,
    col: Vec<T>,
    tmp: Vec<T>,
}

impl<'a, T: Scalar> LocalSession<'a, T> {
    fn new(model: &'a PoseModel<T>, base: &Image) -> Result<Self, LocNetError> {
        let input = model.input_tensor(base)?;
        let acts = model.conv_activations(&input);
        let base_out = model.head_from_last(acts.last().expect("validated"));
        Ok(Self {
            model,
            size: model.arch.input_size,
            work_input: input.clone(),
            work_acts: acts.clone(),
            base_input: input,
            base_acts: acts,
            base_out,
            pending: None,
            col: Vec::new(),
            tmp: Vec::new(),
        })
    }

    fn copy_region(src: &[T], dst: &mut [T], channels: usize, h: usize, w: usize, r: Region) {
        let (y0, y1, x0, x1) = r;
        for c in 0..channels {
            for y in y0..y1 {
                let i = c * h * w + y * w;
                dst[i + x0..i + x1].copy_from_slice(&src[i + x0..i + x1]);
            }
        }
    }

    /// Undo the edits of an eval that was not accepted.
    fn restore(&mut self) {
        let Some((input_r, regions)) = self.pending.take() else {
            return;
        };
        let s = self.size;
        Self::copy_region(&self.base_input, &mut self.work_input, 3, s, s, input_r);
        for (l, r) in regions.into_iter().enumerate() {
            let layer = &self.model.convs[l];
            let (h, w) = (layer.geom.out_h(), layer.geom.out_w());
            Self::copy_region(&self.base_acts[l], &mut self.work_acts[l], layer.out_c, h, w, r);
        }
    }
}

impl<T: Scalar> ForwardSession for LocalSession<'_, T> {
    fn base_output(&self) -> RawOutput {
        self.base_out
    }

    fn eval(&mut self, image: &Image, dirty: PixelRect) -> Result<RawOutput, LocNetError> {
        let s = self.size;
        if image.width != s || image.height != s || image.pixels.len() != s * s * 3 {
            return Err(LocNetError::Shape {
                expected: s,
                width: image.width,
                height: image.height,
            });
        }
        self.restore();
        let d = PixelRect {
            x0: dirty.x0.min(s),
            y0: dirty.y0.min(s),
            x1: dirty.x1.min(s),
            y1: dirty.y1.min(s),
        };
        if d.is_empty() {
            self.pending = Some(((0, 0, 0, 0), vec![(0, 0, 0, 0); self.model.convs.len()]));
            return Ok(self.base_out);
        }
        let plane = s * s;
        let scale = 1.0 / 255.0;
        for y in d.y0..d.y1 {
            for x in d.x0..d.x1 {
                let p = y * s + x;
                for c in 0..3 {
                    self.work_input[c * plane + p] = T::from_f64(image.pixels[p * 3 + c] as f64 * scale - 0.5);
                }
            }
        }
        let input_r = (d.y0, d.y1, d.x0, d.x1);
        let mut regions = Vec::with_capacity(self.model.convs.len());
        let mut r = input_r;
        for l in 0..self.model.convs.len() {
            let g = self.model.convs[l].geom;
            let (y0, y1) = g.affected(r.0, r.1, g.out_h());
            let (x0, x1) = g.affected(r.2, r.3, g.out_w());
            let (prev, rest) = self.work_acts.split_at_mut(l);
            let input: &[T] = if l == 0 { &self.work_input } else { &prev[l - 1] };
            if y0 < y1 && x0 < x1 {
                self.model
                    .conv_rect(l, input, y0, y1, x0, x1, &mut self.col, &mut self.tmp, &mut rest[0]);
            }
            r = (y0, y1, x0, x1);
            regions.push(r);
        }
        let out = self.model.head_from_last(self.work_acts.last().expect("validated"));
        self.pending = Some((input_r, regions));
        Ok(out)
    }

    fn accept(&mut self) {
        let Some((input_r, regions)) = self.pending.take() else {
            return;
        };
        let s = self.size;
        Self::copy_region(&self.work_input, &mut self.base_input, 3, s, s, input_r);
        for (l, r) in regions.iter().enumerate() {
            let layer = &self.model.convs[l];
            let (h, w) = (layer.geom.out_h(), layer.geom.out_w());
            Self::copy_region(&self.work_acts[l], &mut self.base_acts[l], layer.out_c, h, w, *r);
        }
        self.base_out = self.model.head_from_last(self.base_acts.last().expect("validated"));
    }
}

/// Bounding rectangle of the pixels where `a` and `b` differ.
pub fn diff_rect(a: &Image, b: &Image) -> PixelRect {
    let mut r = PixelRect {
        x0: usize::MAX,
        y0: usize::MAX,
        x1: 0,
        y1: 0,
    };
    for (i, (pa, pb)) in a.pixels.chunks_exact(3).zip(b.pixels.chunks_exact(3)).enumerate() {
        if pa != pb {
            let (x, y) = (i % a.width, i / a.width);
            r.x0 = r.x0.min(x);
            r.y0 = r.y0.min(y);
            r.x1 = r.x1.max(x + 1);
            r.y1 = r.y1.max(y + 1);
        }
    }
    if r.x0 == usize::MAX {
        PixelRect {
            x0: 0,
            y0: 0,
            x1: 0,
            y1: 0,
        }
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;
    use crate::locnet::model::Architecture;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_model() -> PoseModel<f32> {
        let norm = Normalization {
            center: Vec2::new(300.0, 300.0),
            half_extent: Vec2::new(300.0, 300.0),
        };
        PoseModel::new(Architecture::default(), norm, 5).unwrap()
    }

    fn noise_image(seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = Image::new(224, 224);
        for p in &mut img.pixels {
            *p = rng.gen();
        }
        img
    }

    fn edit(img: &Image, r: PixelRect, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = img.clone();
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                out.set(x, y, [rng.gen(), rng.gen(), rng.gen()]);
            }
        }
        out
    }

    fn close(a: &RawOutput, b: &RawOutput) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-5 * (1.0 + y.abs()))
    }

    #[test]
    fn incremental_session_matches_full_forward() {
        let model = small_model();
        let base = noise_image(1);
        let mut session = model.session(&base).unwrap();
        assert!(close(&session.base_output(), &model.forward_raw(&base).unwrap()));

        let rects = [
            PixelRect { x0: 100, y0: 60, x1: 130, y1: 80 },
            PixelRect { x0: 0, y0: 0, x1: 7, y1: 5 },
            PixelRect { x0: 210, y0: 200, x1: 224, y1: 224 },
            PixelRect { x0: 50, y0: 120, x1: 51, y1: 121 },
        ];
        let mut current = base.clone();
        for (i, r) in rects.iter().enumerate() {
            let edited = edit(&current, *r, i as u64 + 10);
            let inc = session.eval(&edited, *r).unwrap();
            let full = model.forward_raw(&edited).unwrap();
            assert!(close(&inc, &full), "rect {i}: {inc:?} vs {full:?}");
            if i % 2 == 0 {
                session.accept();
                current = edited;
                assert!(close(&session.base_output(), &full));
            }
        }
        // a rejected edit leaves no trace
        let r = PixelRect { x0: 20, y0: 20, x1: 40, y1: 40 };
        let probe = edit(&current, r, 99);
        let inc = session.eval(&probe, r).unwrap();
        assert!(close(&inc, &model.forward_raw(&probe).unwrap()));
    }

    #[test]
    fn empty_dirty_rect_returns_base() {
        let model = small_model();
        let base = noise_image(2);
        let mut session = model.session(&base).unwrap();
        let out = session
            .eval(&base, PixelRect { x0: 0, y0: 0, x1: 0, y1: 0 })
            .unwrap();
        assert_eq!(out, session.base_output());
    }

    #[test]
    fn diff_rect_bounds_changes() {
        let a = noise_image(3);
        let r = PixelRect { x0: 30, y0: 40, x1: 35, y1: 42 };
        let b = edit(&a, r, 4);
        assert_eq!(diff_rect(&a, &b), r);
        assert!(diff_rect(&a, &a).is_empty());
    }
}
