//! x-vector embedding network: five spliced frame-level layers, mean + SD
//! statistics pooling, two segment-level layers and a softmax head.
//!
//! The x-vector is the pre-activation output of the first segment-level
//! layer. Training is plain (optionally momentum) SGD on mean cross-entropy.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::{FeatureMatrix, FeatureMeta};
use crate::linalg::Matrix;
use crate::scalar::Real;
use crate::seed;

/// Floor added to the pooled variance before the square root.
pub const POOL_EPSILON: f64 = 1e-10;
pub const DEFAULT_LR: f64 = 0.01;

pub const LAYER_NAMES: [&str; 8] = ["tdnn1", "tdnn2", "tdnn3", "tdnn4", "tdnn5", "segment6", "segment7", "output"];
const N_FRAME_LAYERS: usize = 5;

/// How spliced contexts reach past the ends of a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Indices wrap around the segment. Keeps pooled statistics exactly
    /// invariant when the whole segment is repeated.
    Wrap,
    /// Edge frames are repeated.
    Replicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdnnConfig {
    /// Feature dimension K.
    pub input_dim: usize,
    /// Softmax classes N.
    pub n_classes: usize,
    pub contexts: Vec<Vec<i32>>,
    pub frame_widths: Vec<usize>,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub padding: Padding,
}

impl TdnnConfig {
    /// The standard x-vector topology.
    pub fn xvector(input_dim: usize, n_classes: usize) -> Self {
        Self {
            input_dim,
            n_classes,
            contexts: vec![vec![-2, -1, 0, 1, 2], vec![-2, 0, 2], vec![-3, 0, 3], vec![0], vec![0]],
            frame_widths: vec![512, 512, 512, 512, 1500],
            embed_dim: 512,
            hidden_dim: 512,
            padding: Padding::Wrap,
        }
    }

    /// Same topology with narrower layers.
    pub fn with_widths(mut self, frame_widths: [usize; 5], embed_dim: usize, hidden_dim: usize) -> Self {
        self.frame_widths = frame_widths.to_vec();
        self.embed_dim = embed_dim;
        self.hidden_dim = hidden_dim;
        self
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.contexts.len() != N_FRAME_LAYERS || self.frame_widths.len() != N_FRAME_LAYERS {
            return Err(Error::Config(format!("expected {N_FRAME_LAYERS} frame-level layers")));
        }
        if self.contexts.iter().any(Vec::is_empty) {
            return Err(Error::Config("empty splice context".into()));
        }
        let dims = [self.input_dim, self.n_classes, self.embed_dim, self.hidden_dim];
        if dims.iter().chain(&self.frame_widths).any(|d| *d == 0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    /// Frames of input that influence one pooled frame.
    pub fn receptive_field(&self) -> usize {
        let span: i32 = self.contexts.iter().map(|c| c.iter().max().unwrap_or(&0) - c.iter().min().unwrap_or(&0)).sum();
        span as usize + 1
    }

    /// Shortest segment accepted by the forward pass.
    pub fn min_frames(&self) -> usize {
        self.receptive_field()
    }

    /// `(name, out, in)` for every affine layer.
    pub fn layer_shapes(&self) -> Vec<(&'static str, usize, usize)> {
        let mut shapes = Vec::with_capacity(LAYER_NAMES.len());
        let mut prev = self.input_dim;
        for l in 0..N_FRAME_LAYERS {
            shapes.push((LAYER_NAMES[l], self.frame_widths[l], self.contexts[l].len() * prev));
            prev = self.frame_widths[l];
        }
        shapes.push((LAYER_NAMES[5], self.embed_dim, 2 * prev));
        shapes.push((LAYER_NAMES[6], self.hidden_dim, self.embed_dim));
        shapes.push((LAYER_NAMES[7], self.n_classes, self.hidden_dim));
        shapes
    }

    pub fn n_params(&self) -> usize {
        self.layer_shapes().iter().map(|(_, o, i)| o * (i + 1)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine<T: Real> {
    /// `out x in`
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Affine<T> {
    fn zeros(out: usize, inp: usize) -> Self {
        Self { weight: Matrix::zeros(out, inp), bias: vec![T::zero(); out] }
    }

    fn apply(&self, x: &[T]) -> Vec<T> {
        let mut y = self.bias.clone();
        for (o, yo) in y.iter_mut().enumerate() {
            *yo += self.weight.row(o).iter().zip(x).map(|(w, v)| *w * *v).sum::<T>();
        }
        y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TdnnWeights<T: Real> {
    config: TdnnConfig,
    layers: Vec<Affine<T>>,
}

impl<T: Real> TdnnWeights<T> {
    pub fn zeros(config: TdnnConfig) -> Result<Self> {
        config.validate()?;
        let layers = config.layer_shapes().iter().map(|(_, o, i)| Affine::zeros(*o, *i)).collect();
        Ok(Self { config, layers })
    }

    /// Validates layer shapes against `config` and finiteness.
    pub fn from_layers(config: TdnnConfig, layers: Vec<Affine<T>>) -> Result<Self> {
        config.validate()?;
        let shapes = config.layer_shapes();
        if layers.len() != shapes.len() {
            return Err(Error::Shape(format!("{} layers, expected {}", layers.len(), shapes.len())));
        }
        for (layer, (name, o, i)) in layers.iter().zip(&shapes) {
            if layer.weight.rows() != *o || layer.weight.cols() != *i || layer.bias.len() != *o {
                return Err(Error::Shape(format!(
                    "{name}: weight {}x{} bias {}, expected {o}x{i} bias {o}",
                    layer.weight.rows(),
                    layer.weight.cols(),
                    layer.bias.len()
                )));
            }
            if !layer.weight.is_finite() || layer.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::Shape(format!("{name}: non-finite parameters")));
            }
        }
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &TdnnConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Affine<T>] {
        &self.layers
    }

    pub fn layer(&self, name: &str) -> Option<&Affine<T>> {
        LAYER_NAMES.iter().position(|n| *n == name).map(|i| &self.layers[i])
    }

    /// `(name, flat values)` for every weight and bias tensor.
    pub fn tensors(&self) -> Vec<(String, &[T])> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for (name, l) in LAYER_NAMES.iter().zip(&self.layers) {
            out.push((format!("{name}.weight"), l.weight.as_slice()));
            out.push((format!("{name}.bias"), &l.bias[..]));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [T])> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for (name, l) in LAYER_NAMES.iter().zip(self.layers.iter_mut()) {
            out.push((format!("{name}.weight"), l.weight.as_mut_slice()));
            out.push((format!("{name}.bias"), &mut l.bias[..]));
        }
        out
    }

    pub fn cast<U: Real>(&self) -> TdnnWeights<U> {
        TdnnWeights {
            config: self.config.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Affine { weight: l.weight.cast(), bias: l.bias.iter().map(|b| U::of(b.as_f64())).collect() })
                .collect(),
        }
    }

    fn axpy(&mut self, alpha: T, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.as_mut_slice().iter_mut().zip(b.weight.as_slice()).for_each(|(x, y)| *x += alpha * *y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += alpha * *y);
        }
    }

    fn scale_in_place(&mut self, s: T) {
        for l in &mut self.layers {
            l.weight.as_mut_slice().iter_mut().for_each(|x| *x *= s);
            l.bias.iter_mut().for_each(|x| *x *= s);
        }
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_weights<T: Real>(cfg: &TdnnConfig, seed: u64) -> Result<TdnnWeights<T>> {
    let mut w = TdnnWeights::zeros(cfg.clone())?;
    for (i, l) in w.layers.iter_mut().enumerate() {
        let mut rng = seed::rng(seed::derive(seed, i as u64));
        let limit = glorot_limit(l.weight.rows(), l.weight.cols());
        for v in l.weight.as_mut_slice() {
            *v = T::of(rng.random_range(-limit..limit));
        }
    }
    Ok(w)
}

pub fn glorot_limit(fan_out: usize, fan_in: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

#[inline]
fn source_index(t: usize, offset: i32, len: usize, padding: Padding) -> usize {
    let s = t as i64 + offset as i64;
    match padding {
        Padding::Wrap => s.rem_euclid(len as i64) as usize,
        Padding::Replicate => s.clamp(0, len as i64 - 1) as usize,
    }
}

fn splice<T: Real>(x: &[T], len: usize, width: usize, ctx: &[i32], padding: Padding) -> Vec<T> {
    let mut out = Vec::with_capacity(len * width * ctx.len());
    for t in 0..len {
        for &o in ctx {
            let s = source_index(t, o, len, padding);
            out.extend_from_slice(&x[s * width..(s + 1) * width]);
        }
    }
    out
}

struct FrameCache<T> {
    spliced: Vec<T>,
    /// Post-ReLU output, `len x out`.
    act: Vec<T>,
}

struct Cache<T> {
    len: usize,
    frames: Vec<FrameCache<T>>,
    mean: Vec<T>,
    sd: Vec<T>,
    pooled: Vec<T>,
    z6: Vec<T>,
    a6: Vec<T>,
    a7: Vec<T>,
    logits: Vec<T>,
}

fn relu<T: Real>(v: &mut [T]) {
    v.iter_mut().for_each(|x| *x = x.max(T::zero()));
}

fn check_input<T: Real>(w: &TdnnWeights<T>, fm: &FeatureMatrix<T>) -> Result<()> {
    let cfg = &w.config;
    if fm.dim() != cfg.input_dim {
        return Err(Error::DimensionMismatch { expected: cfg.input_dim, got: fm.dim() });
    }
    if fm.n_frames() < cfg.min_frames() {
        return Err(Error::TooShort(format!("{} frames, network needs {}", fm.n_frames(), cfg.min_frames())));
    }
    Ok(())
}

fn forward_cached<T: Real>(w: &TdnnWeights<T>, fm: &FeatureMatrix<T>) -> Result<Cache<T>> {
    check_input(w, fm)?;
    let cfg = &w.config;
    let len = fm.n_frames();
    let mut x: Vec<T> = fm.frames().as_slice().to_vec();
    let mut width = cfg.input_dim;
    let mut frames = Vec::with_capacity(N_FRAME_LAYERS);
    for l in 0..N_FRAME_LAYERS {
        let layer = &w.layers[l];
        let spliced = splice(&x, len, width, &cfg.contexts[l], cfg.padding);
        let (out, inp) = (layer.weight.rows(), layer.weight.cols());
        let mut act = Vec::with_capacity(len * out);
        for _ in 0..len {
            act.extend_from_slice(&layer.bias);
        }
        // act += S · Wᵀ
        T::gemm(len, inp, out, T::one(), &spliced, inp as isize, 1, layer.weight.as_slice(), 1, inp as isize, T::one(), &mut act, out as isize, 1);
        relu(&mut act);
        x = act.clone();
        width = out;
        frames.push(FrameCache { spliced, act });
    }

    let n = T::of(len as f64);
    let mut mean = vec![T::zero(); width];
    for t in 0..len {
        mean.iter_mut().zip(&x[t * width..(t + 1) * width]).for_each(|(m, v)| *m += *v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![T::zero(); width];
    for t in 0..len {
        for ((v, h), m) in var.iter_mut().zip(&x[t * width..(t + 1) * width]).zip(&mean) {
            let d = *h - *m;
            *v += d * d;
        }
    }
    let eps = T::of(POOL_EPSILON);
    let sd: Vec<T> = var.iter().map(|v| (*v / n + eps).sqrt()).collect();
    let pooled: Vec<T> = mean.iter().chain(&sd).copied().collect();

    let z6 = w.layers[5].apply(&pooled);
    let mut a6 = z6.clone();
    relu(&mut a6);
    let mut a7 = w.layers[6].apply(&a6);
    relu(&mut a7);
    let logits = w.layers[7].apply(&a7);
    Ok(Cache { len, frames, mean, sd, pooled, z6, a6, a7, logits })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward<T> {
    /// Pre-activation output of the first segment-level layer.
    pub xvector: Vec<T>,
    pub logits: Vec<T>,
}

pub fn tdnn_forward<T: Real>(w: &TdnnWeights<T>, fm: &FeatureMatrix<T>) -> Result<Forward<T>> {
    let c = forward_cached(w, fm)?;
    Ok(Forward { xvector: c.z6, logits: c.logits })
}

/// A segment embedding, held in `f64` for the back-ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XVector {
    pub values: Vec<f64>,
    pub segment: Option<usize>,
    pub subject_id: String,
}

/// Averages the x-vectors of `fragments` (pieces of one long utterance).
pub fn extract_xvector<T: Real>(w: &TdnnWeights<T>, fragments: &[FeatureMatrix<T>]) -> Result<XVector> {
    let first = fragments.first().ok_or(Error::Empty("segment list"))?;
    let mut acc = vec![0.0f64; w.config.embed_dim];
    for seg in fragments {
        let f = tdnn_forward(w, seg)?;
        acc.iter_mut().zip(&f.xvector).for_each(|(a, v)| *a += v.as_f64());
    }
    let k = fragments.len() as f64;
    acc.iter_mut().for_each(|a| *a /= k);
    Ok(XVector { values: acc, segment: first.meta.segment, subject_id: first.meta.utterance_id.clone() })
}

/// One x-vector per segment, except that segments sharing a
/// `fragment_group` are averaged into one.
pub fn extract_xvectors<T: Real>(w: &TdnnWeights<T>, segments: &[FeatureMatrix<T>]) -> Result<Vec<XVector>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < segments.len() {
        let mut j = i + 1;
        if let Some(g) = segments[i].meta.fragment_group {
            while j < segments.len() && segments[j].meta.fragment_group == Some(g) && segments[j].meta.utterance_id == segments[i].meta.utterance_id {
                j += 1;
            }
        }
        out.push(extract_xvector(w, &segments[i..j])?);
        i = j;
    }
    Ok(out)
}

fn log_softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let lse = crate::math::log_sum_exp(logits);
    logits.iter().map(|l| *l - lse).collect()
}

/// Accumulates `scale * dLoss/dθ` for one labelled segment into `grad`.
fn backward<T: Real>(w: &TdnnWeights<T>, c: &Cache<T>, label: usize, scale: T, grad: &mut TdnnWeights<T>) {
    let cfg = &w.config;
    let logp = log_softmax(&c.logits);
    let mut d: Vec<T> = logp.iter().map(|l| l.exp() * scale).collect();
    d[label] -= scale;

    // Segment-level layers, top down.
    for (li, input) in [(7usize, &c.a7), (6, &c.a6), (5, &c.pooled)] {
        let g = &mut grad.layers[li];
        add_outer(&mut g.weight, &d, input);
        g.bias.iter_mut().zip(&d).for_each(|(b, v)| *b += *v);
        let wl = &w.layers[li].weight;
        let mut dx = vec![T::zero(); wl.cols()];
        for (o, dv) in d.iter().enumerate() {
            if *dv != T::zero() {
                dx.iter_mut().zip(wl.row(o)).for_each(|(x, wv)| *x += *dv * *wv);
            }
        }
        // Gate by the ReLU that produced `input` (pooled stats have none).
        if li > 5 {
            dx.iter_mut().zip(input.iter()).for_each(|(g, a)| if *a <= T::zero() { *g = T::zero() });
        }
        d = dx;
    }

    // Statistics pooling.
    let len = c.len;
    let width = cfg.frame_widths[N_FRAME_LAYERS - 1];
    let n = T::of(len as f64);
    let (dmean, dsd) = d.split_at(width);
    let h5 = &c.frames[N_FRAME_LAYERS - 1].act;
    let mut dh = vec![T::zero(); len * width];
    for t in 0..len {
        for k in 0..width {
            dh[t * width + k] = dmean[k] / n + dsd[k] * (h5[t * width + k] - c.mean[k]) / (n * c.sd[k]);
        }
    }

    for l in (0..N_FRAME_LAYERS).rev() {
        let fc = &c.frames[l];
        let layer = &w.layers[l];
        let (out, inp) = (layer.weight.rows(), layer.weight.cols());
        // Through the ReLU.
        for (g, a) in dh.iter_mut().zip(&fc.act) {
            if *a <= T::zero() {
                *g = T::zero();
            }
        }
        let g = &mut grad.layers[l];
        // dW += dZᵀ · S
        T::gemm(out, len, inp, T::one(), &dh, 1, out as isize, &fc.spliced, inp as isize, 1, T::one(), g.weight.as_mut_slice(), inp as isize, 1);
        for t in 0..len {
            g.bias.iter_mut().zip(&dh[t * out..(t + 1) * out]).for_each(|(b, v)| *b += *v);
        }
        if l == 0 {
            break;
        }
        // dS = dZ · W, then un-splice.
        let mut ds = vec![T::zero(); len * inp];
        T::gemm(len, out, inp, T::one(), &dh, out as isize, 1, layer.weight.as_slice(), inp as isize, 1, T::zero(), &mut ds, inp as isize, 1);
        let prev = cfg.frame_widths[l - 1];
        let ctx = &cfg.contexts[l];
        let mut dprev = vec![T::zero(); len * prev];
        for t in 0..len {
            for (ci, &o) in ctx.iter().enumerate() {
                let s = source_index(t, o, len, cfg.padding);
                let src = &ds[t * inp + ci * prev..t * inp + (ci + 1) * prev];
                dprev[s * prev..(s + 1) * prev].iter_mut().zip(src).for_each(|(a, b)| *a += *b);
            }
        }
        dh = dprev;
    }
}

/// `m += d ⊗ x`
fn add_outer<T: Real>(m: &mut Matrix<T>, d: &[T], x: &[T]) {
    for (o, dv) in d.iter().enumerate() {
        if *dv != T::zero() {
            m.row_mut(o).iter_mut().zip(x).for_each(|(w, v)| *w += *dv * *v);
        }
    }
}

fn check_batch<T: Real>(w: &TdnnWeights<T>, batch: &[(FeatureMatrix<T>, usize)]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch"));
    }
    if let Some((_, y)) = batch.iter().find(|(_, y)| *y >= w.config.n_classes) {
        return Err(Error::Config(format!("label {y} out of range for {} classes", w.config.n_classes)));
    }
    Ok(())
}

/// Mean cross-entropy over the batch.
pub fn batch_loss<T: Real>(w: &TdnnWeights<T>, batch: &[(FeatureMatrix<T>, usize)]) -> Result<f64> {
    check_batch(w, batch)?;
    let mut total = 0.0;
    for (fm, y) in batch {
        let f = tdnn_forward(w, fm)?;
        total -= log_softmax(&f.logits)[*y].as_f64();
    }
    Ok(total / batch.len() as f64)
}

/// Mean cross-entropy and its gradient. Items are accumulated in batch order.
pub fn loss_and_grad<T: Real>(w: &TdnnWeights<T>, batch: &[(FeatureMatrix<T>, usize)]) -> Result<(f64, TdnnWeights<T>)> {
    check_batch(w, batch)?;
    let mut grad = TdnnWeights::zeros(w.config.clone())?;
    let scale = T::one() / T::of(batch.len() as f64);
    let mut total = 0.0;
    for (fm, y) in batch {
        let c = forward_cached(w, fm)?;
        total -= log_softmax(&c.logits)[*y].as_f64();
        backward(w, &c, *y, scale, &mut grad);
    }
    let loss = total / batch.len() as f64;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("training loss is {loss}")));
    }
    Ok((loss, grad))
}

/// Gradient descent with optional heavy-ball momentum.
#[derive(Debug, Clone)]
pub struct Sgd<T: Real> {
    pub lr: f64,
    pub momentum: f64,
    velocity: Option<TdnnWeights<T>>,
}

impl<T: Real> Sgd<T> {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Self { lr, momentum, velocity: None }
    }

    /// Updates `w` in place and returns the pre-update loss.
    pub fn step(&mut self, w: &mut TdnnWeights<T>, batch: &[(FeatureMatrix<T>, usize)]) -> Result<f64> {
        let (loss, grad) = loss_and_grad(w, batch)?;
        if self.momentum > 0.0 {
            let v = match self.velocity.as_mut() {
                Some(v) => {
                    v.scale_in_place(T::of(self.momentum));
                    v.axpy(T::one(), &grad);
                    v
                }
                None => self.velocity.insert(grad),
            };
            w.axpy(T::of(-self.lr), v);
        } else {
            w.axpy(T::of(-self.lr), &grad);
        }
        Ok(loss)
    }
}

/// One plain SGD step; returns the updated weights and the pre-update loss.
pub fn train_step<T: Real>(w: &TdnnWeights<T>, batch: &[(FeatureMatrix<T>, usize)], lr: f64) -> Result<(TdnnWeights<T>, f64)> {
    let mut next = w.clone();
    let loss = Sgd::new(lr, 0.0).step(&mut next, batch)?;
    Ok((next, loss))
}

/// Arg-max class of the softmax head.
pub fn predict<T: Real>(w: &TdnnWeights<T>, fm: &FeatureMatrix<T>) -> Result<usize> {
    let f = tdnn_forward(w, fm)?;
    Ok(f.logits.iter().enumerate().fold(0, |best, (i, v)| if *v > f.logits[best] { i } else { best }))
}

/// Convenience wrapper used by tests and the demo: a segment with metadata.
pub fn segment_from_rows<T: Real>(rows: &[Vec<T>], utterance_id: &str) -> Result<FeatureMatrix<T>> {
    let mut fm = FeatureMatrix::from_rows(rows, 10.0)?;
    fm.meta = FeatureMeta { utterance_id: utterance_id.to_owned(), ..FeatureMeta::default() };
    Ok(fm)
}
