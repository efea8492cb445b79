//! `TinySegNet`: a five-convolution encoder-decoder with a skip connection
//! and a two-channel softmax head, differentiated by hand.
//!
//! ```text
//! x ─conv3(C→8)─relu─conv3(8→8)─relu─┬──────────────────────┐
//!                                     maxpool2─conv3(8→16)─relu─up2─concat(24)
//!                                                                  │
//!                         softmax ← conv1(8→2) ← relu ← conv3(24→8)┘
//! ```
//!
//! Parameters live in one flat vector, layer by layer, each layer as its
//! `[c_out, c_in·k·k]` weight matrix followed by `c_out` biases. Convolutions
//! are zero-padded, so the output has the input's spatial shape; height and
//! width must be even for the pooling stage.

mod adam;
mod checkpoint;
mod conv;

pub use adam::{lr_on_plateau, AdamState, PlateauSchedule};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{Geometry, ProbMap, ScalarGrid};
use crate::{Error, Result};
use conv::{adjoint_tap_major, conv3x3, conv3x3_weight_grad, lane_sum, pad, tap_major};

const WIDTH: usize = 8;
const DEEP: usize = 16;
const CLASSES: usize = 2;

#[derive(Debug, Clone, Copy)]
struct Layer {
    c_in: usize,
    c_out: usize,
    k: usize,
    offset: usize,
}

impl Layer {
    fn fan_in(&self) -> usize {
        self.c_in * self.k * self.k
    }

    fn n_weights(&self) -> usize {
        self.c_out * self.fan_in()
    }

    fn len(&self) -> usize {
        self.n_weights() + self.c_out
    }

    fn weights<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.offset..self.offset + self.n_weights()]
    }

    fn bias<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.offset + self.n_weights()..self.offset + self.len()]
    }

    fn split_mut<'a>(&self, p: &'a mut [f64]) -> (&'a mut [f64], &'a mut [f64]) {
        p[self.offset..self.offset + self.len()].split_at_mut(self.n_weights())
    }
}

fn topology(in_channels: usize) -> [Layer; 5] {
    let dims = [
        (in_channels, WIDTH, 3),
        (WIDTH, WIDTH, 3),
        (WIDTH, DEEP, 3),
        (WIDTH + DEEP, WIDTH, 3),
        (WIDTH, CLASSES, 1),
    ];
    let mut offset = 0;
    dims.map(|(c_in, c_out, k)| {
        let layer = Layer { c_in, c_out, k, offset };
        offset += layer.len();
        layer
    })
}

/// A multi-channel 2D input image, channels stacked as `[c, y, x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    geometry: Geometry,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    /// Stack same-geometry 2D grids as channels.
    pub fn from_channels(channels: &[ScalarGrid]) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::Shape("an image needs at least one channel".into()))?;
        let geometry = first.geometry().clone();
        if geometry.ndim() != 2 {
            return Err(Error::Shape(format!(
                "model inputs are 2D, got {}D",
                geometry.ndim()
            )));
        }
        let mut data = Vec::with_capacity(geometry.len() * channels.len());
        for c in channels {
            geometry.require_same(c.geometry(), "image channel")?;
            data.extend_from_slice(c.values());
        }
        Ok(Self { geometry, channels: channels.len(), data })
    }

    pub fn single(channel: &ScalarGrid) -> Result<Self> {
        Self::from_channels(std::slice::from_ref(channel))
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn channels(&self) -> usize {
        self.channels
    }
}

/// Softmax output: per-pixel background and foreground probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub background: ProbMap,
    pub foreground: ProbMap,
}

/// Activations kept by [`TinySegNet::forward`] for the matching backward.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    geometry: Geometry,
    pad1: Vec<f64>,
    a1: Vec<f64>,
    pad2: Vec<f64>,
    a2: Vec<f64>,
    pool_from: Vec<usize>,
    pad3: Vec<f64>,
    a3: Vec<f64>,
    pad4: Vec<f64>,
    a4: Vec<f64>,
    fg: Vec<f64>,
    bg: Vec<f64>,
}

impl ForwardCache {
    /// ReLU on/off states and max-pool winners. Two parameter vectors with
    /// the same pattern lie in the same smooth piece of the network, which
    /// is what a finite-difference check needs.
    pub fn activation_pattern(&self) -> Vec<u64> {
        let relu = [&self.a1, &self.a2, &self.a3, &self.a4]
            .into_iter()
            .flat_map(|a| a.iter().map(|&v| u64::from(v > 0.0)));
        relu.chain(self.pool_from.iter().map(|&i| i as u64)).collect()
    }
}

/// Flat parameter gradient, laid out like [`TinySegNet::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<f64>);

impl Gradients {
    pub fn zeros(n: usize) -> Self {
        Gradients(vec![0.0; n])
    }

    pub fn scale(&mut self, k: f64) {
        self.0.iter_mut().for_each(|g| *g *= k);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinySegNet {
    in_channels: usize,
    params: Vec<f64>,
    generation: u64,
}

impl TinySegNet {
    /// He-uniform weights (bound `sqrt(6 / fan_in)`), zero biases.
    pub fn new(in_channels: usize, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(in_channels)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in topology(in_channels) {
            let bound = (6.0 / layer.fan_in() as f64).sqrt();
            let (w, _) = layer.split_mut(&mut net.params);
            for v in w {
                *v = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(in_channels: usize) -> Result<Self> {
        if in_channels == 0 {
            return Err(Error::Shape("the net needs at least one input channel".into()));
        }
        Ok(Self {
            in_channels,
            params: vec![0.0; Self::param_count(in_channels)],
            generation: 0,
        })
    }

    pub fn from_params(in_channels: usize, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(in_channels)?;
        if params.len() != net.params.len() {
            return Err(Error::Shape(format!(
                "{} parameters given, topology has {}",
                params.len(),
                net.params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn param_count(in_channels: usize) -> usize {
        topology(in_channels).iter().map(Layer::len).sum()
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameters. Any cache taken before this call becomes stale.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.generation += 1;
        &mut self.params
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn adam_step(&mut self, state: &mut AdamState, grads: &Gradients) -> Result<()> {
        state.step(self.params_mut(), &grads.0)
    }

    pub fn forward(&self, image: &Image) -> Result<(Prediction, ForwardCache)> {
        let geometry = image.geometry.clone();
        if image.channels != self.in_channels {
            return Err(Error::Shape(format!(
                "net expects {} input channels, image has {}",
                self.in_channels, image.channels
            )));
        }
        let (h, w) = (geometry.shape()[0], geometry.shape()[1]);
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Shape(format!("spatial dims {h}×{w} must be even")));
        }
        let [l1, l2, l3, l4, l5] = topology(self.in_channels);
        let p = &self.params;
        let hw = h * w;

        let pad1 = pad(&image.data, l1.c_in, h, w);
        let a1 = conv3(&l1, p, &pad1, h, w);

        let pad2 = pad(&a1, l2.c_in, h, w);
        let a2 = conv3(&l2, p, &pad2, h, w);

        let (pooled, pool_from) = maxpool(&a2, WIDTH, h, w);
        let pad3 = pad(&pooled, l3.c_in, h / 2, w / 2);
        let a3 = conv3(&l3, p, &pad3, h / 2, w / 2);

        let mut cat = Vec::with_capacity(l4.c_in * hw);
        cat.extend_from_slice(&a2);
        cat.extend(upsample(&a3, DEEP, h / 2, w / 2));
        let pad4 = pad(&cat, l4.c_in, h, w);
        drop(cat);
        let a4 = conv3(&l4, p, &pad4, h, w);

        let logits = conv1(&l5, p, &a4, hw);
        let (l0, l1v) = logits.split_at(hw);
        let fg: Vec<f64> = l0.iter().zip(l1v).map(|(&a, &b)| sigmoid(b - a)).collect();
        let bg: Vec<f64> = l0.iter().zip(l1v).map(|(&a, &b)| sigmoid(a - b)).collect();

        let prediction = Prediction {
            background: ProbMap::new(geometry.clone(), bg.clone())?,
            foreground: ProbMap::new(geometry.clone(), fg.clone())?,
        };
        let cache = ForwardCache {
            generation: self.generation,
            geometry,
            pad1,
            a1,
            pad2,
            a2,
            pool_from,
            pad3,
            a3,
            pad4,
            a4,
            fg,
            bg,
        };
        Ok((prediction, cache))
    }

    /// Foreground probabilities without keeping a cache.
    pub fn predict(&self, image: &Image) -> Result<ProbMap> {
        Ok(self.forward(image)?.0.foreground)
    }

    pub fn forward_batch(&self, batch: &[Image]) -> Result<(Vec<Prediction>, Vec<ForwardCache>)> {
        batch.iter().map(|im| self.forward(im)).collect::<Result<Vec<_>>>().map(|v| v.into_iter().unzip())
    }

    /// Parameter gradient of a loss whose gradient with respect to the
    /// foreground probabilities is `grad_fg`.
    pub fn backward(&self, cache: &ForwardCache, grad_fg: &ScalarGrid) -> Result<Gradients> {
        let mut grads = Gradients::zeros(self.params.len());
        self.backward_into(cache, grad_fg, &mut grads)?;
        Ok(grads)
    }

    /// Like [`backward`](Self::backward) but adds into `grads`, so a batch
    /// accumulates in item order.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        grad_fg: &ScalarGrid,
        grads: &mut Gradients,
    ) -> Result<()> {
        if cache.generation != self.generation {
            return Err(Error::StaleCache { cached: cache.generation, current: self.generation });
        }
        cache.geometry.require_same(grad_fg.geometry(), "upstream gradient")?;
        if grads.0.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "gradient buffer has {} entries, net has {}",
                grads.0.len(),
                self.params.len()
            )));
        }
        let [l1, l2, l3, l4, l5] = topology(self.in_channels);
        let p = &self.params;
        let g = &mut grads.0;
        let (h, w) = (cache.geometry.shape()[0], cache.geometry.shape()[1]);
        let hw = h * w;

        // Softmax over two logits: d fg / d l1 = fg·bg, d fg / d l0 = -fg·bg.
        let mut d_logits = vec![0.0; CLASSES * hw];
        for (i, &up) in grad_fg.values().iter().enumerate() {
            let t = up * cache.fg[i] * cache.bg[i];
            d_logits[i] = -t;
            d_logits[hw + i] = t;
        }

        let mut d_a4 = conv1_backward(&l5, p, g, &d_logits, &cache.a4, hw);
        relu_backward(&mut d_a4, &cache.a4);

        let d_cat = conv3_backward(&l4, p, g, &d_a4, &cache.pad4, h, w, true);
        let (d_a2_skip, d_up) = d_cat.split_at(WIDTH * hw);

        let mut d_a3 = upsample_backward(d_up, DEEP, h / 2, w / 2);
        relu_backward(&mut d_a3, &cache.a3);
        let d_pooled = conv3_backward(&l3, p, g, &d_a3, &cache.pad3, h / 2, w / 2, true);

        let mut d_a2 = d_a2_skip.to_vec();
        for (&from, &d) in cache.pool_from.iter().zip(&d_pooled) {
            d_a2[from] += d;
        }
        relu_backward(&mut d_a2, &cache.a2);
        let mut d_a1 = conv3_backward(&l2, p, g, &d_a2, &cache.pad2, h, w, true);

        relu_backward(&mut d_a1, &cache.a1);
        conv3_backward(&l1, p, g, &d_a1, &cache.pad1, h, w, false);
        Ok(())
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Rectified zero-padded 3×3 convolution of an already padded input.
fn conv3(layer: &Layer, p: &[f64], padded: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; layer.c_out * h * w];
    let taps = tap_major(layer.weights(p), layer.c_out, layer.fan_in());
    conv3x3(padded, layer.c_in, h, w, &taps, layer.bias(p), &mut out);
    out.iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// Accumulates the layer's parameter gradient and, when asked, returns the
/// gradient with respect to its (unpadded) input.
#[allow(clippy::too_many_arguments)]
fn conv3_backward(
    layer: &Layer,
    p: &[f64],
    g: &mut [f64],
    d_out: &[f64],
    padded: &[f64],
    h: usize,
    w: usize,
    input_grad: bool,
) -> Vec<f64> {
    let (gw, gb) = layer.split_mut(g);
    conv3x3_weight_grad(padded, layer.c_in, h, w, d_out, gw, gb);
    if !input_grad {
        return Vec::new();
    }
    let taps = adjoint_tap_major(layer.weights(p), layer.c_out, layer.c_in);
    let mut d_in = vec![0.0; layer.c_in * h * w];
    let zero = vec![0.0; layer.c_in];
    conv3x3(&pad(d_out, layer.c_out, h, w), layer.c_out, h, w, &taps, &zero, &mut d_in);
    d_in
}

/// 1×1 convolution (no rectification).
fn conv1(layer: &Layer, p: &[f64], input: &[f64], n: usize) -> Vec<f64> {
    let (wts, bias) = (layer.weights(p), layer.bias(p));
    let mut out = vec![0.0; layer.c_out * n];
    for (o, row) in out.chunks_mut(n).enumerate() {
        row.fill(bias[o]);
        for (c, x) in input.chunks(n).enumerate() {
            let k = wts[o * layer.c_in + c];
            row.iter_mut().zip(x).for_each(|(r, &x)| *r += k * x);
        }
    }
    out
}

fn conv1_backward(
    layer: &Layer,
    p: &[f64],
    g: &mut [f64],
    d_out: &[f64],
    input: &[f64],
    n: usize,
) -> Vec<f64> {
    let wts = layer.weights(p);
    let (gw, gb) = layer.split_mut(g);
    let mut d_in = vec![0.0; layer.c_in * n];
    for (o, d) in d_out.chunks(n).enumerate() {
        for (c, (x, di)) in input.chunks(n).zip(d_in.chunks_mut(n)).enumerate() {
            let prod: Vec<f64> = x.iter().zip(d).map(|(a, b)| a * b).collect();
            gw[o * layer.c_in + c] += lane_sum(&prod);
            let k = wts[o * layer.c_in + c];
            di.iter_mut().zip(d).for_each(|(v, &dv)| *v += k * dv);
        }
        gb[o] += lane_sum(d);
    }
    d_in
}

fn relu_backward(d: &mut [f64], activation: &[f64]) {
    for (d, &a) in d.iter_mut().zip(activation) {
        if a <= 0.0 {
            *d = 0.0;
        }
    }
}

/// 2×2 max-pool; also returns, per output, the flat input index that won
/// (first maximum in row-major window order).
fn maxpool(a: &[f64], c: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>) {
    let (h2, w2) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * h2 * w2);
    let mut from = Vec::with_capacity(c * h2 * w2);
    for ch in 0..c {
        for y in 0..h2 {
            for x in 0..w2 {
                let base = ch * h * w + 2 * y * w + 2 * x;
                let mut best = base;
                for idx in [base + 1, base + w, base + w + 1] {
                    if a[idx] > a[best] {
                        best = idx;
                    }
                }
                out.push(a[best]);
                from.push(best);
            }
        }
    }
    (out, from)
}

fn upsample(a: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = vec![0.0; c * h2 * w2];
    for ch in 0..c {
        for y in 0..h2 {
            for x in 0..w2 {
                out[(ch * h2 + y) * w2 + x] = a[(ch * h + y / 2) * w + x / 2];
            }
        }
    }
    out
}

fn upsample_backward(d: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..h2 {
            for x in 0..w2 {
                out[(ch * h + y / 2) * w + x / 2] += d[(ch * h2 + y) * w2 + x];
            }
        }
    }
    out
}
