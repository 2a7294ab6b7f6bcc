use super::loss::{Normalization, RawOutput};
use super::ops::{col2im, gemm, im2col, im2col_rect, ConvGeom, MatRef, Scalar};
use super::LocNetError;
use crate::render::Image;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// One ReLU convolution; padding is `kernel / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvSpec {
    pub const fn new(filters: usize, kernel: usize, stride: usize) -> Self {
        Self {
            filters,
            kernel,
            stride,
        }
    }
}

/// Convolution stack, average pooling over a `pool_grid x pool_grid` grid of the last
/// feature map, ReLU dense layers, linear 4-output head. A grid of 1 is global average
/// pooling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_size: usize,
    pub convs: Vec<ConvSpec>,
    #[serde(default = "one")]
    pub pool_grid: usize,
    pub hidden: Vec<usize>,
}

fn one() -> usize {
    1
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            input_size: 224,
            convs: vec![
                ConvSpec::new(64, 5, 2),
                ConvSpec::new(64, 3, 2),
                ConvSpec::new(128, 3, 2),
                ConvSpec::new(128, 3, 2),
                ConvSpec::new(256, 3, 2),
            ],
            pool_grid: 3,
            hidden: vec![256],
        }
    }
}

pub const OUTPUTS: usize = 4;
const INPUT_CHANNELS: usize = 3;

impl Architecture {
    pub fn validate(&self) -> Result<(), LocNetError> {
        if self.convs.is_empty() {
            return Err(LocNetError::Config("architecture needs at least one convolution".into()));
        }
        let mut size = self.input_size;
        for (i, c) in self.convs.iter().enumerate() {
            if c.filters == 0 || c.kernel == 0 || c.stride == 0 || c.kernel % 2 == 0 {
                return Err(LocNetError::Config(format!("convolution {i} has invalid shape {c:?}")));
            }
            let g = ConvGeom {
                in_c: 1,
                in_h: size,
                in_w: size,
                k: c.kernel,
                stride: c.stride,
                pad: c.kernel / 2,
            };
            if size + 2 * g.pad < c.kernel {
                return Err(LocNetError::Config(format!("input too small for convolution {i}")));
            }
            size = g.out_h();
        }
        if self.hidden.contains(&0) {
            return Err(LocNetError::Config("dense layers need at least one unit".into()));
        }
        if self.pool_grid == 0 || self.pool_grid > size {
            return Err(LocNetError::Config(format!(
                "pool grid {} does not fit the {size}x{size} feature map",
                self.pool_grid
            )));
        }
        Ok(())
    }

    fn conv_geoms(&self) -> Vec<ConvGeom> {
        let mut c = INPUT_CHANNELS;
        let mut s = self.input_size;
        self.convs
            .iter()
            .map(|spec| {
                let g = ConvGeom {
                    in_c: c,
                    in_h: s,
                    in_w: s,
                    k: spec.kernel,
                    stride: spec.stride,
                    pad: spec.kernel / 2,
                };
                c = spec.filters;
                s = g.out_h();
                g
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub geom: ConvGeom,
    pub out_c: usize,
    /// `out_c x (in_c * k * k)`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn out_area(&self) -> usize {
        self.geom.out_h() * self.geom.out_w()
    }

    fn forward_cols(&self, col: &[T], out: &mut [T]) {
        let k = self.geom.col_rows();
        let p = col.len() / k;
        gemm(MatRef::new(&self.weight, self.out_c, k), MatRef::new(col, k, p), out, false);
        for c in 0..self.out_c {
            let b = self.bias[c];
            for v in &mut out[c * p..(c + 1) * p] {
                let z = *v + b;
                *v = if z > T::ZERO { z } else { T::ZERO };
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs x inputs`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub relu: bool,
}

impl<T: Scalar> DenseLayer<T> {
    fn forward(&self, x: &[T]) -> Vec<T> {
        (0..self.outputs)
            .map(|o| {
                let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
                let mut z = self.bias[o];
                for (w, v) in row.iter().zip(x) {
                    z += *w * *v;
                }
                if self.relu && !(z > T::ZERO) {
                    T::ZERO
                } else {
                    z
                }
            })
            .collect()
    }
}

/// Convolutional pose regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseModel<T: Scalar = f32> {
    pub arch: Architecture,
    pub norm: Normalization,
    pub seed: u64,
    pub convs: Vec<ConvLayer<T>>,
    pub dense: Vec<DenseLayer<T>>,
}

/// Per-sample activations kept for the backward pass.
pub struct Trace<T> {
    cols: Vec<Vec<T>>,
    conv_out: Vec<Vec<T>>,
    dense_in: Vec<Vec<T>>,
    dense_out: Vec<Vec<T>>,
}

impl<T: Scalar> Trace<T> {
    /// Which ReLU units fired: every convolution output, then the hidden dense outputs.
    /// Finite differences are only meaningful while this pattern stays fixed.
    pub fn active_units(&self) -> Vec<bool> {
        let hidden = &self.dense_out[..self.dense_out.len().saturating_sub(1)];
        self.conv_out
            .iter()
            .chain(hidden)
            .flatten()
            .map(|v| *v > T::ZERO)
            .collect()
    }
}

impl<T: Scalar> PoseModel<T> {
    /// He-initialized model; biases start at zero.
    pub fn new(arch: Architecture, norm: Normalization, seed: u64) -> Result<Self, LocNetError> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut convs = Vec::new();
        for (g, spec) in arch.conv_geoms().into_iter().zip(&arch.convs) {
            let fan_in = g.col_rows();
            let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
            convs.push(ConvLayer {
                geom: g,
                out_c: spec.filters,
                weight: (0..spec.filters * fan_in)
                    .map(|_| T::from_f64(dist.sample(&mut rng)))
                    .collect(),
                bias: vec![T::ZERO; spec.filters],
            });
        }
        let mut dense = Vec::new();
        let mut width = arch.convs.last().map(|c| c.filters).unwrap_or(INPUT_CHANNELS) * arch.pool_grid * arch.pool_grid;
        let layers: Vec<(usize, bool)> = arch
            .hidden
            .iter()
            .map(|&h| (h, true))
            .chain(std::iter::once((OUTPUTS, false)))
            .collect();
        for (outputs, relu) in layers {
            let gain = if relu { 2.0 } else { 1.0 };
            let dist = Normal::new(0.0, (gain / width as f64).sqrt()).expect("finite std");
            dense.push(DenseLayer {
                inputs: width,
                outputs,
                weight: (0..outputs * width).map(|_| T::from_f64(dist.sample(&mut rng))).collect(),
                bias: vec![T::ZERO; outputs],
                relu,
            });
            width = outputs;
        }
        Ok(Self {
            arch,
            norm,
            seed,
            convs,
            dense,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Parameter tensors in canonical order: each conv's weight then bias, then each
    /// dense layer's weight then bias.
    pub fn params(&self) -> Vec<&[T]> {
        let mut v: Vec<&[T]> = Vec::new();
        for c in &self.convs {
            v.push(&c.weight);
            v.push(&c.bias);
        }
        for d in &self.dense {
            v.push(&d.weight);
            v.push(&d.bias);
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut v: Vec<&mut [T]> = Vec::new();
        for c in &mut self.convs {
            v.push(&mut c.weight);
            v.push(&mut c.bias);
        }
        for d in &mut self.dense {
            v.push(&mut d.weight);
            v.push(&mut d.bias);
        }
        v
    }

    /// Shapes of the parameter tensors, same order as [`params`](Self::params).
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut v = Vec::new();
        for c in &self.convs {
            v.push(vec![c.out_c, c.geom.in_c, c.geom.k, c.geom.k]);
            v.push(vec![c.out_c]);
        }
        for d in &self.dense {
            v.push(vec![d.outputs, d.inputs]);
            v.push(vec![d.outputs]);
        }
        v
    }

    pub fn zero_grads(&self) -> Vec<Vec<T>> {
        self.params().iter().map(|p| vec![T::ZERO; p.len()]).collect()
    }

    pub fn cast<U: Scalar>(&self) -> PoseModel<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::from_f64(x.to_f64())).collect::<Vec<U>>();
        PoseModel {
            arch: self.arch.clone(),
            norm: self.norm,
            seed: self.seed,
            convs: self
                .convs
                .iter()
                .map(|c| ConvLayer {
                    geom: c.geom,
                    out_c: c.out_c,
                    weight: conv(&c.weight),
                    bias: conv(&c.bias),
                })
                .collect(),
            dense: self
                .dense
                .iter()
                .map(|d| DenseLayer {
                    inputs: d.inputs,
                    outputs: d.outputs,
                    weight: conv(&d.weight),
                    bias: conv(&d.bias),
                    relu: d.relu,
                })
                .collect(),
        }
    }

    /// CHW tensor with channels scaled to `[0, 1]`.
    pub fn input_tensor(&self, image: &Image) -> Result<Vec<T>, LocNetError> {
        let s = self.arch.input_size;
        if image.width != s || image.height != s || image.pixels.len() != s * s * 3 {
            return Err(LocNetError::Shape {
                expected: s,
                width: image.width,
                height: image.height,
            });
        }
        Ok(image_to_chw(image))
    }

    fn head(&self, pooled: Vec<T>) -> RawOutput {
        let mut x = pooled;
        for d in &self.dense {
            x = d.forward(&x);
        }
        std::array::from_fn(|i| x[i].to_f64())
    }

    /// Pooling cells `(y0, y1, x0, x1)` of the last feature map, row-major. Cells span
    /// `floor(i * n / g)..ceil((i + 1) * n / g)` and overlap when `g` does not divide `n`.
    fn pool_cells(&self) -> Vec<(usize, usize, usize, usize)> {
        let layer = self.convs.last().expect("validated");
        let g = self.arch.pool_grid;
        let span = |i: usize, n: usize| (i * n / g, ((i + 1) * n).div_ceil(g));
        let (h, w) = (layer.geom.out_h(), layer.geom.out_w());
        let mut cells = Vec::with_capacity(g * g);
        for i in 0..g {
            let (y0, y1) = span(i, h);
            for j in 0..g {
                let (x0, x1) = span(j, w);
                cells.push((y0, y1, x0, x1));
            }
        }
        cells
    }

    /// Channel-major pooled features: index `c * cells + cell`.
    pub(crate) fn pool(&self, last: &[T]) -> Vec<T> {
        let layer = self.convs.last().expect("validated");
        let (area, w) = (layer.out_area(), layer.geom.out_w());
        let cells = self.pool_cells();
        let mut out = Vec::with_capacity(layer.out_c * cells.len());
        for c in 0..layer.out_c {
            let plane = &last[c * area..(c + 1) * area];
            for &(y0, y1, x0, x1) in &cells {
                let mut s = T::ZERO;
                for y in y0..y1 {
                    for v in &plane[y * w + x0..y * w + x1] {
                        s += *v;
                    }
                }
                out.push(s * T::from_f64(1.0 / ((y1 - y0) * (x1 - x0)) as f64));
            }
        }
        out
    }

    pub(crate) fn head_from_last(&self, last: &[T]) -> RawOutput {
        self.head(self.pool(last))
    }

    /// Convolution outputs of every layer for `x`.
    pub(crate) fn conv_activations(&self, x: &[T]) -> Vec<Vec<T>> {
        let mut acts: Vec<Vec<T>> = Vec::with_capacity(self.convs.len());
        let mut col = Vec::new();
        for (i, layer) in self.convs.iter().enumerate() {
            let input: &[T] = if i == 0 { x } else { &acts[i - 1] };
            col.resize(layer.geom.col_rows() * layer.out_area(), T::ZERO);
            im2col(input, &layer.geom, &mut col);
            let mut out = vec![T::ZERO; layer.out_c * layer.out_area()];
            layer.forward_cols(&col, &mut out);
            acts.push(out);
        }
        acts
    }

    pub fn forward_tensor(&self, x: &[T]) -> RawOutput {
        let acts = self.conv_activations(x);
        self.head_from_last(acts.last().expect("validated"))
    }

    pub fn forward_image(&self, image: &Image) -> Result<RawOutput, LocNetError> {
        Ok(self.forward_tensor(&self.input_tensor(image)?))
    }

    /// Recompute outputs of conv layer `l` inside `[oy0, oy1) x [ox0, ox1)` from the
    /// full input activation, writing them into `out` (full layer output).
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn conv_rect(
        &self,
        l: usize,
        input: &[T],
        oy0: usize,
        oy1: usize,
        ox0: usize,
        ox1: usize,
        col: &mut Vec<T>,
        tmp: &mut Vec<T>,
        out: &mut [T],
    ) {
        let layer = &self.convs[l];
        let area = (oy1 - oy0) * (ox1 - ox0);
        col.resize(layer.geom.col_rows() * area, T::ZERO);
        tmp.resize(layer.out_c * area, T::ZERO);
        im2col_rect(input, &layer.geom, oy0, oy1, ox0, ox1, col);
        layer.forward_cols(col, tmp);
        let ow = layer.geom.out_w();
        let plane = layer.out_area();
        let rw = ox1 - ox0;
        for c in 0..layer.out_c {
            for (r, oy) in (oy0..oy1).enumerate() {
                let src = &tmp[c * area + r * rw..c * area + (r + 1) * rw];
                out[c * plane + oy * ow + ox0..c * plane + oy * ow + ox1].copy_from_slice(src);
            }
        }
    }

    pub fn forward_train(&self, x: &[T]) -> (RawOutput, Trace<T>) {
        let mut cols = Vec::with_capacity(self.convs.len());
        let mut conv_out: Vec<Vec<T>> = Vec::with_capacity(self.convs.len());
        for (i, layer) in self.convs.iter().enumerate() {
            let input: &[T] = if i == 0 { x } else { &conv_out[i - 1] };
            let mut col = vec![T::ZERO; layer.geom.col_rows() * layer.out_area()];
            im2col(input, &layer.geom, &mut col);
            let mut out = vec![T::ZERO; layer.out_c * layer.out_area()];
            layer.forward_cols(&col, &mut out);
            cols.push(col);
            conv_out.push(out);
        }
        let mut h = self.pool(conv_out.last().expect("validated"));
        let mut dense_in = Vec::with_capacity(self.dense.len());
        let mut dense_out = Vec::with_capacity(self.dense.len());
        for d in &self.dense {
            let y = d.forward(&h);
            dense_in.push(std::mem::replace(&mut h, y.clone()));
            dense_out.push(y);
        }
        let raw = std::array::from_fn(|i| h[i].to_f64());
        (
            raw,
            Trace {
                cols,
                conv_out,
                dense_in,
                dense_out,
            },
        )
    }

    /// Accumulate parameter gradients for one sample given `d loss / d raw`.
    pub fn backward(&self, trace: &Trace<T>, d_raw: &RawOutput, grads: &mut [Vec<T>]) {
        let nconv = self.convs.len();
        let mut d: Vec<T> = d_raw.iter().map(|&v| T::from_f64(v)).collect();
        for (li, layer) in self.dense.iter().enumerate().rev() {
            let x = &trace.dense_in[li];
            let y = &trace.dense_out[li];
            if layer.relu {
                for (g, out) in d.iter_mut().zip(y) {
                    if !(*out > T::ZERO) {
                        *g = T::ZERO;
                    }
                }
            }
            let gi = 2 * nconv + 2 * li;
            {
                let gw = &mut grads[gi];
                for o in 0..layer.outputs {
                    let go = d[o];
                    if go == T::ZERO {
                        continue;
                    }
                    for (w, xv) in gw[o * layer.inputs..(o + 1) * layer.inputs].iter_mut().zip(x) {
                        *w += go * *xv;
                    }
                }
            }
            for (b, g) in grads[gi + 1].iter_mut().zip(&d) {
                *b += *g;
            }
            let mut dx = vec![T::ZERO; layer.inputs];
            for o in 0..layer.outputs {
                let go = d[o];
                if go == T::ZERO {
                    continue;
                }
                for (v, w) in dx.iter_mut().zip(&layer.weight[o * layer.inputs..(o + 1) * layer.inputs]) {
                    *v += go * *w;
                }
            }
            d = dx;
        }

        let last = &self.convs[nconv - 1];
        let (area, w) = (last.out_area(), last.geom.out_w());
        let cells = self.pool_cells();
        let mut d_out = vec![T::ZERO; last.out_c * area];
        for c in 0..last.out_c {
            let plane = &mut d_out[c * area..(c + 1) * area];
            for (k, &(y0, y1, x0, x1)) in cells.iter().enumerate() {
                let g = d[c * cells.len() + k] * T::from_f64(1.0 / ((y1 - y0) * (x1 - x0)) as f64);
                for y in y0..y1 {
                    for v in &mut plane[y * w + x0..y * w + x1] {
                        *v += g;
                    }
                }
            }
        }

        for li in (0..nconv).rev() {
            let layer = &self.convs[li];
            let p = layer.out_area();
            let k = layer.geom.col_rows();
            for (g, out) in d_out.iter_mut().zip(&trace.conv_out[li]) {
                if !(*out > T::ZERO) {
                    *g = T::ZERO;
                }
            }
            gemm(
                MatRef::new(&d_out, layer.out_c, p),
                MatRef::new(&trace.cols[li], k, p).t(),
                &mut grads[2 * li],
                true,
            );
            for c in 0..layer.out_c {
                let mut s = T::ZERO;
                for v in &d_out[c * p..(c + 1) * p] {
                    s += *v;
                }
                grads[2 * li + 1][c] += s;
            }
            if li == 0 {
                break;
            }
            let mut d_col = vec![T::ZERO; k * p];
            gemm(
                MatRef::new(&layer.weight, layer.out_c, k).t(),
                MatRef::new(&d_out, layer.out_c, p),
                &mut d_col,
                false,
            );
            let g = &layer.geom;
            let mut d_in = vec![T::ZERO; g.in_c * g.in_h * g.in_w];
            col2im(&d_col, g, &mut d_in);
            d_out = d_in;
        }
    }
}

pub fn image_to_chw<T: Scalar>(image: &Image) -> Vec<T> {
    let plane = image.width * image.height;
    let mut out = vec![T::ZERO; 3 * plane];
    let scale = 1.0 / 255.0;
    for (i, px) in image.pixels.chunks_exact(3).enumerate() {
        for c in 0..3 {
            out[c * plane + i] = T::from_f64(px[c] as f64 * scale - 0.5);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;
    use crate::locnet::loss::{pose_loss, pose_loss_grad};
    use crate::pose::Pose;
    use rand::seq::index::sample;
    use rand::Rng;

    fn norm() -> Normalization {
        Normalization {
            center: Vec2::new(300.0, 300.0),
            half_extent: Vec2::new(300.0, 300.0),
        }
    }

    fn small_arch() -> Architecture {
        Architecture {
            input_size: 20,
            convs: vec![ConvSpec::new(4, 5, 2), ConvSpec::new(5, 3, 2), ConvSpec::new(6, 3, 1)],
            // 5x5 map in overlapping 3x3 cells
            pool_grid: 2,
            hidden: vec![7],
        }
    }

    #[test]
    fn default_stack_shape() {
        let m = PoseModel::<f32>::new(Architecture::default(), norm(), 0).unwrap();
        let first = &m.convs[0];
        assert_eq!((first.out_c, first.geom.k, first.geom.stride), (64, 5, 2));
        assert_eq!(m.convs.last().unwrap().geom.out_h(), 7);
        let expected = (64 * 3 * 25 + 64)
            + (64 * 64 * 9 + 64)
            + (128 * 64 * 9 + 128)
            + (128 * 128 * 9 + 128)
            + (256 * 128 * 9 + 256)
            + (256 * 9 * 256 + 256)
            + (4 * 256 + 4);
        assert_eq!(m.parameter_count(), expected);
    }

    #[test]
    fn invalid_architectures_rejected() {
        let mut a = small_arch();
        a.convs[1].kernel = 2;
        assert!(PoseModel::<f32>::new(a, norm(), 0).is_err());
        let mut a = small_arch();
        a.convs.clear();
        assert!(PoseModel::<f32>::new(a, norm(), 0).is_err());
        let mut a = small_arch();
        a.hidden = vec![0];
        assert!(PoseModel::<f32>::new(a, norm(), 0).is_err());
        for g in [0, 6] {
            let mut a = small_arch();
            a.pool_grid = g;
            assert!(PoseModel::<f32>::new(a, norm(), 0).is_err());
        }
    }

    #[test]
    fn grid_pooling_averages_each_cell() {
        let m = PoseModel::<f64>::new(small_arch(), norm(), 0).unwrap();
        let last: Vec<f64> = (0..6 * 25).map(|i| i as f64).collect();
        let pooled = m.pool(&last);
        assert_eq!(pooled.len(), 6 * 4);
        // channel 1, bottom-right cell: rows 2..5, cols 2..5
        let direct: f64 = (2..5).flat_map(|y| (2..5).map(move |x| 25.0 + (y * 5 + x) as f64)).sum::<f64>() / 9.0;
        assert_eq!(pooled[4 + 3], direct);
    }

    #[test]
    fn zeroed_head_predicts_map_center() {
        let mut m = PoseModel::<f32>::new(Architecture::default(), norm(), 3).unwrap();
        let head = m.dense.last_mut().unwrap();
        head.weight.fill(0.0);
        head.bias.fill(0.0);
        let img = Image::filled(224, 224, [90, 140, 200]);
        let raw = m.forward_image(&img).unwrap();
        let p = m.norm.decode(&raw);
        assert_eq!((p.x, p.y), (300.0, 300.0));
        assert!((-std::f64::consts::PI..std::f64::consts::PI).contains(&p.theta));
    }

    #[test]
    fn wrong_image_size_is_shape_error() {
        let m = PoseModel::<f32>::new(Architecture::default(), norm(), 3).unwrap();
        let err = m.forward_image(&Image::new(100, 224)).unwrap_err();
        assert!(matches!(err, LocNetError::Shape { .. }));
    }

    #[test]
    fn forward_is_deterministic() {
        let m = PoseModel::<f32>::new(small_arch(), norm(), 9).unwrap();
        let mut img = Image::new(20, 20);
        for (i, p) in img.pixels.iter_mut().enumerate() {
            *p = (i * 7 % 256) as u8;
        }
        assert_eq!(m.forward_image(&img).unwrap(), m.forward_image(&img).unwrap());
        let m2 = PoseModel::<f32>::new(small_arch(), norm(), 9).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn train_forward_matches_inference_forward() {
        let m = PoseModel::<f64>::new(small_arch(), norm(), 4).unwrap();
        let x: Vec<f64> = (0..3 * 400).map(|i| ((i * 13) % 17) as f64 / 17.0).collect();
        assert_eq!(m.forward_train(&x).0, m.forward_tensor(&x));
    }

    fn relu_mask(m: &PoseModel<f64>, x: &[f64]) -> Vec<bool> {
        m.forward_train(x).1.active_units()
    }

    /// Central differences on parameters with step 1e-3 against the analytic gradient.
    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut m = PoseModel::<f64>::new(small_arch(), norm(), 21).unwrap();
        for p in m.params_mut() {
            for v in p.iter_mut() {
                *v += rng.gen_range(-0.05..0.05);
            }
        }
        let x: Vec<f64> = (0..3 * 400).map(|_| rng.gen::<f64>()).collect();
        let truth = Pose::new(120.0, 410.0, 2.2);
        let lambda = 10.0;
        let loss_of = |m: &PoseModel<f64>| pose_loss(&m.forward_tensor(&x), &truth, &m.norm, lambda);

        let (raw, trace) = m.forward_train(&x);
        let mut grads = m.zero_grads();
        m.backward(&trace, &pose_loss_grad(&raw, &truth, &m.norm, lambda), &mut grads);

        let h = 1e-3;
        let tensors = m.params().len();
        let mut checked = 0;
        let mut skipped = 0;
        for t in 0..tensors {
            let len = m.params()[t].len();
            let picks = sample(&mut rng, len, len.min(40));
            for i in picks {
                let orig = m.params()[t][i];
                m.params_mut()[t][i] = orig + h;
                let up = loss_of(&m);
                let up_mask = relu_mask(&m, &x);
                m.params_mut()[t][i] = orig - h;
                let dn = loss_of(&m);
                let dn_mask = relu_mask(&m, &x);
                m.params_mut()[t][i] = orig;
                if up_mask != dn_mask {
                    // a ReLU switched inside the stencil, where the difference quotient
                    // does not estimate the derivative
                    skipped += 1;
                    continue;
                }
                let fd = (up - dn) / (2.0 * h);
                let an = grads[t][i];
                let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-4);
                assert!(err < 1e-3, "tensor {t} index {i}: analytic {an} numeric {fd}");
                checked += 1;
            }
        }
        assert!(checked >= 200, "checked {checked}, skipped {skipped}");
        assert!(skipped * 10 < checked, "checked {checked}, skipped {skipped}");
    }
}
