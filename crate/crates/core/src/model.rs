//! Reference pixel classifier and its training protocol.
//!
//! The classifier sees a `(2r+1)`×`(2r+1)` window of standardized band
//! values around each pixel (clamp-to-edge at raster borders) and runs it
//! through a small fully connected network with rectifier hidden layers and a
//! softmax output. Output plane `p` is the probability of class `p + 1`;
//! class 0 (unlabeled) is never predicted.
//!
//! Training minimizes masked, weighted cross-entropy
//! `Σ w_y · −ln p_y / Σ w_y` over labeled pixels only, with plain SGD over
//! sampled and augmented patches.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::{weights_from_counts, Augmentation, ClassWeights, PatchSampler, WeightStrategy};
use crate::math::{exp, ln, sqrt};
use crate::raster::{BandRaster, Extent, Grid, MaskRaster};
use crate::rng;
use crate::{Error, Result};

/// Architecture of the reference classifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    /// Window radius `r`; features cover `(2r+1)²` pixels.
    pub radius: usize,
    pub hidden: Vec<usize>,
    /// Number of output classes `K` (scheme size minus the unlabeled entry).
    pub classes: usize,
    pub bands: usize,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(classes: usize, bands: usize) -> Self {
        ModelSpec {
            radius: 2,
            hidden: vec![64],
            classes,
            bands,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config(format!("model needs K >= 2 classes, got {}", self.classes)));
        }
        if self.classes > 255 {
            return Err(Error::Config("model supports at most 255 classes".into()));
        }
        if self.bands == 0 {
            return Err(Error::Config("model needs at least one band".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn window(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn feature_len(&self) -> usize {
        self.bands * self.window() * self.window()
    }

    /// `(inputs, outputs)` of every affine layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.feature_len()];
        dims.extend(self.hidden.iter().copied());
        dims.push(self.classes);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// Per-band standardization fitted on the training extent.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(bands: usize) -> Self {
        Standardizer {
            mean: vec![0.0; bands],
            std: vec![1.0; bands],
        }
    }

    /// Mean and population standard deviation of each band over `extent`.
    /// Zero-variance bands get a standard deviation of 1.
    pub fn fit(image: &BandRaster, extent: &Extent) -> Result<Self> {
        image.grid.check_extent(extent)?;
        let n = extent.len() as f64;
        let mut mean = Vec::with_capacity(image.bands);
        let mut std = Vec::with_capacity(image.bands);
        for b in 0..image.bands {
            let mut sum = 0.0;
            for r in extent.row0..extent.row0 + extent.rows {
                for c in extent.col0..extent.col0 + extent.cols {
                    sum += image.get(b, c, r) as f64;
                }
            }
            let m = sum / n;
            let mut var = 0.0;
            for r in extent.row0..extent.row0 + extent.rows {
                for c in extent.col0..extent.col0 + extent.cols {
                    let d = image.get(b, c, r) as f64 - m;
                    var += d * d;
                }
            }
            let s = sqrt(var / n);
            mean.push(m);
            std.push(if s > 1e-12 { s } else { 1.0 });
        }
        Ok(Standardizer { mean, std })
    }
}

/// Standardized window features of pixel `(col, row)`, written into `out`
/// (length `bands * (2r+1)²`). Window pixels are visited in row-major order
/// and each contributes all of its bands; positions outside the raster
/// replicate the nearest edge pixel.
pub fn featurize_into(image: &BandRaster, col: usize, row: usize, radius: usize, norm: &Standardizer, out: &mut [f64]) {
    let w = image.grid.width as isize;
    let h = image.grid.height as isize;
    let r = radius as isize;
    let n = image.grid.len();
    let mut k = 0;
    for dy in -r..=r {
        let y = (row as isize + dy).clamp(0, h - 1) as usize;
        for dx in -r..=r {
            let x = (col as isize + dx).clamp(0, w - 1) as usize;
            let idx = y * image.grid.width + x;
            for b in 0..image.bands {
                out[k] = (image.values[b * n + idx] as f64 - norm.mean[b]) / norm.std[b];
                k += 1;
            }
        }
    }
}

pub fn featurize(image: &BandRaster, col: usize, row: usize, radius: usize, norm: &Standardizer) -> Vec<f64> {
    let mut out = vec![0.0; image.bands * (2 * radius + 1) * (2 * radius + 1)];
    featurize_into(image, col, row, radius, norm, &mut out);
    out
}

/// Affine layer, weights row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Layer {
    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let mut acc = self.bias[o];
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            out.push(acc);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub norm: Standardizer,
    layers: Vec<Layer>,
}

impl Model {
    /// Randomly initialized model (He-uniform hidden layers, Glorot-uniform
    /// output layer, zero biases) seeded from `spec.seed`.
    pub fn new(spec: ModelSpec, norm: Standardizer) -> Result<Self> {
        spec.validate()?;
        let mut g = rng::seeded(spec.seed);
        let shapes = spec.layer_shapes();
        let last = shapes.len() - 1;
        let layers = shapes
            .iter()
            .enumerate()
            .map(|(i, &(inputs, outputs))| {
                let limit = if i == last {
                    sqrt(6.0 / (inputs + outputs) as f64)
                } else {
                    sqrt(6.0 / inputs as f64)
                };
                let weights = (0..inputs * outputs)
                    .map(|_| (2.0 * rng::unit(&mut g) - 1.0) * limit)
                    .collect();
                Layer {
                    inputs,
                    outputs,
                    weights,
                    bias: vec![0.0; outputs],
                }
            })
            .collect();
        let model = Model { spec, norm, layers };
        model.check_norm()?;
        Ok(model)
    }

    /// All weights and biases zero: predicts the uniform distribution.
    pub fn zeros(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let norm = Standardizer::identity(spec.bands);
        let n = spec.param_count();
        Model::from_params(spec, norm, &vec![0.0; n])
    }

    /// Rebuilds a model from a flat parameter vector laid out layer by layer,
    /// weights (row-major, outputs × inputs) before biases.
    pub fn from_params(spec: ModelSpec, norm: Standardizer, params: &[f64]) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.param_count() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                spec.param_count(),
                params.len()
            )));
        }
        let mut off = 0;
        let layers = spec
            .layer_shapes()
            .into_iter()
            .map(|(inputs, outputs)| {
                let weights = params[off..off + inputs * outputs].to_vec();
                off += inputs * outputs;
                let bias = params[off..off + outputs].to_vec();
                off += outputs;
                Layer {
                    inputs,
                    outputs,
                    weights,
                    bias,
                }
            })
            .collect();
        let model = Model { spec, norm, layers };
        model.check_norm()?;
        Ok(model)
    }

    fn check_norm(&self) -> Result<()> {
        if self.norm.mean.len() != self.spec.bands || self.norm.std.len() != self.spec.bands {
            return Err(Error::InvalidArgument("standardizer does not match band count".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.spec.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        let rebuilt = Model::from_params(self.spec.clone(), self.norm.clone(), params)?;
        self.layers = rebuilt.layers;
        Ok(())
    }

    fn step(&mut self, grad: &[f64], lr: f64) {
        let mut off = 0;
        for l in &mut self.layers {
            for w in &mut l.weights {
                *w -= lr * grad[off];
                off += 1;
            }
            for b in &mut l.bias {
                *b -= lr * grad[off];
                off += 1;
            }
        }
    }

    /// Class-probability vector (length `K`) for one feature vector.
    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.spec.feature_len() {
            return Err(Error::InvalidArgument(format!(
                "feature length {} does not match model input {}",
                features.len(),
                self.spec.feature_len()
            )));
        }
        let mut scratch = Scratch::default();
        let mut out = vec![0.0; self.spec.classes];
        self.forward_into(features, &mut scratch, &mut out);
        Ok(out)
    }

    fn forward_into(&self, features: &[f64], s: &mut Scratch, probs: &mut [f64]) {
        s.acts.resize_with(self.layers.len(), Vec::new);
        for (i, layer) in self.layers.iter().enumerate() {
            let (done, rest) = s.acts.split_at_mut(i);
            let input: &[f64] = if i == 0 { features } else { &done[i - 1] };
            let out = &mut rest[0];
            layer.apply(input, out);
            if i + 1 < self.layers.len() {
                for v in out.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
        softmax(&s.acts[self.layers.len() - 1], probs);
    }

    /// Masked weighted cross-entropy over `labels.len()` pixels whose feature
    /// rows are packed in `features`, and its gradient with respect to
    /// [`Model::params`]. Pixels labeled 0 are skipped entirely. Returns
    /// `None` when no pixel carries weight.
    pub fn loss_and_grad(&self, features: &[f64], labels: &[u8], weights: &ClassWeights) -> Result<Option<(f64, Vec<f64>)>> {
        let f = self.spec.feature_len();
        if features.len() != labels.len() * f {
            return Err(Error::InvalidArgument("features and labels disagree in length".into()));
        }
        let mut total_w = 0.0;
        for &y in labels {
            if y == 0 {
                continue;
            }
            self.check_label(y)?;
            total_w += weights.get(y);
        }
        if !(total_w > 0.0) {
            return Ok(None);
        }
        let mut grad = vec![0.0; self.spec.param_count()];
        let mut s = Scratch::default();
        let mut probs = vec![0.0; self.spec.classes];
        let mut loss = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            if y == 0 {
                continue;
            }
            let w = weights.get(y);
            if w == 0.0 {
                continue;
            }
            let x = &features[i * f..(i + 1) * f];
            self.forward_into(x, &mut s, &mut probs);
            let t = (y - 1) as usize;
            loss += w * -ln(probs[t]);
            // dL/dlogits = w (p - onehot) / W
            let scale = w / total_w;
            let mut delta: Vec<f64> = probs.iter().map(|p| p * scale).collect();
            delta[t] -= scale;
            self.backward(x, &s, delta, &mut grad);
        }
        Ok(Some((loss / total_w, grad)))
    }

    fn check_label(&self, y: u8) -> Result<()> {
        if y as usize > self.spec.classes {
            return Err(Error::InvalidArgument(format!(
                "label {y} exceeds model classes {}",
                self.spec.classes
            )));
        }
        Ok(())
    }

    fn backward(&self, x: &[f64], s: &Scratch, mut delta: Vec<f64>, grad: &mut [f64]) {
        let offsets = self.layer_offsets();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input: &[f64] = if i == 0 { x } else { &s.acts[i - 1] };
            let off = offsets[i];
            let (gw, gb) = grad[off..off + layer.inputs * layer.outputs + layer.outputs].split_at_mut(layer.inputs * layer.outputs);
            for o in 0..layer.outputs {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                for (g, v) in row.iter_mut().zip(input) {
                    *g += d * v;
                }
            }
            if i == 0 {
                break;
            }
            let mut prev = vec![0.0; layer.inputs];
            for o in 0..layer.outputs {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            // Rectifier derivative of the layer below.
            for (p, a) in prev.iter_mut().zip(&s.acts[i - 1]) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut off = 0;
        self.layers
            .iter()
            .map(|l| {
                let o = off;
                off += l.inputs * l.outputs + l.outputs;
                o
            })
            .collect()
    }

    /// Probabilities for rows `rows` of `image`, pixel-interleaved.
    pub fn predict_rows(&self, image: &BandRaster, rows: core::ops::Range<usize>) -> Result<Vec<f64>> {
        if image.bands != self.spec.bands {
            return Err(Error::InvalidArgument(format!(
                "image has {} bands, model expects {}",
                image.bands, self.spec.bands
            )));
        }
        let rows = rows.start..rows.end.min(image.grid.height);
        let k = self.spec.classes;
        let mut out = vec![0.0; rows.len() * image.grid.width * k];
        let mut feat = vec![0.0; self.spec.feature_len()];
        let mut s = Scratch::default();
        let mut i = 0;
        for row in rows {
            for col in 0..image.grid.width {
                featurize_into(image, col, row, self.spec.radius, &self.norm, &mut feat);
                self.forward_into(&feat, &mut s, &mut out[i * k..(i + 1) * k]);
                i += 1;
            }
        }
        Ok(out)
    }

    pub fn predict(&self, image: &BandRaster) -> Result<ProbRaster> {
        let values = self.predict_rows(image, 0..image.grid.height)?;
        ProbRaster::new(image.grid, self.spec.classes, values)
    }
}

#[derive(Default)]
struct Scratch {
    acts: Vec<Vec<f64>>,
}

fn softmax(logits: &[f64], out: &mut [f64]) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = exp(z - m);
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Masked weighted cross-entropy of precomputed probabilities.
///
/// `probs` holds `labels.len()` rows of `K` probabilities (plane `p` is class
/// `p + 1`). Returns `None` (skip) when no pixel is labeled.
pub fn masked_loss(probs: &[f64], classes: usize, labels: &[u8], weights: &ClassWeights) -> Result<Option<f64>> {
    if probs.len() != labels.len() * classes {
        return Err(Error::InvalidArgument("probabilities and mask disagree in shape".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y == 0 {
            continue;
        }
        if y as usize > classes {
            return Err(Error::InvalidArgument(format!("label {y} exceeds {classes} classes")));
        }
        let w = weights.get(y);
        num += w * -ln(probs[i * classes + (y - 1) as usize]);
        den += w;
    }
    if den > 0.0 {
        Ok(Some(num / den))
    } else {
        Ok(None)
    }
}

/// Per-pixel class-probability stack, pixel-interleaved: the `K`
/// probabilities of pixel `i` live at `values[i*K..(i+1)*K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbRaster {
    pub grid: Grid,
    pub classes: usize,
    pub values: Vec<f64>,
}

impl ProbRaster {
    pub fn new(grid: Grid, classes: usize, values: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if classes == 0 || values.len() != grid.len() * classes {
            return Err(Error::InvalidArgument(format!(
                "probability raster needs {} values, got {}",
                grid.len() * classes,
                values.len()
            )));
        }
        Ok(ProbRaster { grid, classes, values })
    }

    #[inline]
    pub fn pixel(&self, col: usize, row: usize) -> &[f64] {
        let i = row * self.grid.width + col;
        &self.values[i * self.classes..(i + 1) * self.classes]
    }

    pub fn pixels(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.classes)
    }

    /// Most probable class per pixel (lowest index on ties).
    pub fn argmax(&self) -> MaskRaster {
        self.argmax_confident(f64::NEG_INFINITY)
    }

    /// Most probable class where its probability is at least `threshold`,
    /// 0 elsewhere.
    pub fn argmax_confident(&self, threshold: f64) -> MaskRaster {
        let values = self
            .pixels()
            .map(|p| {
                let (best, pmax) = argmax(p);
                if pmax >= threshold {
                    best as u8 + 1
                } else {
                    0
                }
            })
            .collect();
        MaskRaster {
            grid: self.grid,
            values,
        }
    }
}

pub(crate) fn argmax(p: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    (best, p[best])
}

/// Optimization schedule and recursion settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub min_epochs: usize,
    pub max_epochs: usize,
    pub patch_size: usize,
    /// Minibatch steps per epoch.
    pub steps_per_epoch: usize,
    pub rounds: usize,
    /// Epochs without improvement (after `min_epochs`) before stopping.
    pub patience: usize,
    pub seed: u64,
    pub weight_strategy: WeightStrategy,
    pub augment: bool,
    /// Confidence a prediction needs to become a pseudo-label.
    pub pseudo_label_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.0003,
            batch_size: 32,
            min_epochs: 100,
            max_epochs: 300,
            patch_size: 512,
            steps_per_epoch: 8,
            rounds: 2,
            patience: 10,
            seed: 0,
            weight_strategy: WeightStrategy::InverseFrequency,
            augment: true,
            pseudo_label_threshold: 0.9,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.min_epochs > self.max_epochs {
            return Err(Error::Config(format!(
                "min_epochs ({}) exceeds max_epochs ({})",
                self.min_epochs, self.max_epochs
            )));
        }
        if self.max_epochs == 0 || self.batch_size == 0 || self.steps_per_epoch == 0 || self.patch_size == 0 {
            return Err(Error::Config("epochs, batch size, steps and patch size must be positive".into()));
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be >= 1".into()));
        }
        if self.pseudo_label_threshold.is_nan() {
            return Err(Error::Config("pseudo_label_threshold is NaN".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    pub labeled_pixels: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub stopped_early: bool,
}

impl TrainLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.mean_loss)
    }
}

/// Trains a fresh model on the labeled pixels of `mask` inside `extent`.
///
/// Every epoch runs `steps_per_epoch` SGD steps; each step draws
/// `batch_size` patches (each with at least one labeled pixel), optionally
/// augments them, and descends the masked loss of all their labeled pixels.
/// Training stops at `max_epochs`, or once the epoch loss has not improved
/// for `patience` epochs after `min_epochs`. Patch `i` of step `s` in epoch
/// `e` depends only on `(seed, e, s, i)`.
pub fn train(
    image: &BandRaster,
    mask: &MaskRaster,
    extent: &Extent,
    spec: &ModelSpec,
    config: &TrainConfig,
) -> Result<(Model, TrainLog)> {
    config.validate()?;
    spec.validate()?;
    if image.bands != spec.bands {
        return Err(Error::InvalidArgument(format!(
            "image has {} bands, model expects {}",
            image.bands, spec.bands
        )));
    }
    if image.grid != mask.grid {
        return Err(Error::GridMismatch("image and mask grids differ".into()));
    }
    mask.grid.check_extent(extent)?;

    let mut counts = vec![0u64; spec.classes + 1];
    for r in extent.row0..extent.row0 + extent.rows {
        for &v in &mask.row(r)[extent.col0..extent.col0 + extent.cols] {
            if v as usize > spec.classes {
                return Err(Error::InvalidArgument(format!(
                    "mask value {v} exceeds model classes {}",
                    spec.classes
                )));
            }
            counts[v as usize] += 1;
        }
    }
    let weights = weights_from_counts(&counts, config.weight_strategy)?;
    let norm = Standardizer::fit(image, extent)?;
    let mut model = Model::new(spec.clone(), norm)?;

    let size = config.patch_size.min(extent.cols).min(extent.rows);
    let sampler = PatchSampler::new(image, mask, extent, size)?;
    let f = spec.feature_len();
    let mut log = TrainLog::default();
    let mut best = f64::INFINITY;
    let mut stale = 0usize;
    let mut feats = Vec::new();
    let mut labels = Vec::new();

    for epoch in 0..config.max_epochs {
        let mut loss_sum = 0.0;
        let mut loss_steps = 0usize;
        let mut labeled = 0u64;
        for step in 0..config.steps_per_epoch {
            feats.clear();
            labels.clear();
            for i in 0..config.batch_size {
                let mut g = rng::stream(config.seed, rng::mix(&[epoch as u64, step as u64, i as u64]));
                let mut patch = sampler.sample(&mut g)?;
                if config.augment {
                    patch = Augmentation::draw(&mut g).apply(&patch)?;
                }
                let n = patch.size();
                for r in 0..n {
                    for c in 0..n {
                        let y = patch.mask.get(c, r);
                        if y == 0 {
                            continue;
                        }
                        let start = feats.len();
                        feats.resize(start + f, 0.0);
                        featurize_into(&patch.image, c, r, spec.radius, &model.norm, &mut feats[start..]);
                        labels.push(y);
                    }
                }
            }
            labeled += labels.len() as u64;
            let Some((loss, grad)) = model.loss_and_grad(&feats, &labels, &weights)? else {
                continue;
            };
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch: epoch + 1, loss });
            }
            model.step(&grad, config.learning_rate);
            loss_sum += loss;
            loss_steps += 1;
        }
        let mean_loss = if loss_steps > 0 { loss_sum / loss_steps as f64 } else { f64::NAN };
        if !mean_loss.is_finite() {
            return Err(Error::Diverged {
                epoch: epoch + 1,
                loss: mean_loss,
            });
        }
        log.epochs.push(EpochRecord {
            epoch: epoch + 1,
            mean_loss,
            labeled_pixels: labeled,
        });
        if mean_loss < best {
            best = mean_loss;
            stale = 0;
        } else {
            stale += 1;
        }
        if epoch + 1 >= config.min_epochs && config.patience > 0 && stale >= config.patience {
            log.stopped_early = epoch + 1 < config.max_epochs;
            break;
        }
    }
    Ok((model, log))
}

/// One round of [`recursive_train`].
#[derive(Debug, Clone)]
pub struct Round {
    pub model: Model,
    pub log: TrainLog,
    /// The labels this round trained on.
    pub training_mask: MaskRaster,
    /// Labeled pixels of `training_mask` inside the training extent.
    pub labeled_pixels: usize,
}

/// Self-training: round 1 trains on `mask`; every later round trains a freshly
/// initialized model on `mask` overlaid onto the previous round's confident
/// predictions (probability >= `pseudo_label_threshold`). Manual labels always
/// take precedence over pseudo-labels.
pub fn recursive_train(
    image: &BandRaster,
    mask: &MaskRaster,
    extent: &Extent,
    spec: &ModelSpec,
    config: &TrainConfig,
) -> Result<Vec<Round>> {
    config.validate()?;
    let mut rounds: Vec<Round> = Vec::with_capacity(config.rounds);
    for k in 0..config.rounds {
        let training_mask = match rounds.last() {
            None => mask.clone(),
            Some(prev) => {
                let probs = prev.model.predict(image)?;
                let pseudo = probs.argmax_confident(config.pseudo_label_threshold);
                overlay_labels(mask, &pseudo)?
            }
        };
        let mut cfg = config.clone();
        if k > 0 {
            cfg.seed = rng::mix(&[config.seed, k as u64]);
        }
        let (model, log) = train(image, &training_mask, extent, spec, &cfg)?;
        let labeled_pixels = training_mask.window(extent)?.labeled_count();
        rounds.push(Round {
            model,
            log,
            training_mask,
            labeled_pixels,
        });
    }
    Ok(rounds)
}

/// `primary` where labeled, `fallback` elsewhere.
pub fn overlay_labels(primary: &MaskRaster, fallback: &MaskRaster) -> Result<MaskRaster> {
    if primary.grid != fallback.grid {
        return Err(Error::GridMismatch("label layers are on different grids".into()));
    }
    let values = primary
        .values
        .iter()
        .zip(&fallback.values)
        .map(|(&p, &f)| if p != 0 { p } else { f })
        .collect();
    Ok(MaskRaster {
        grid: primary.grid,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal, seeded, unit};

    fn tiny_spec(radius: usize, hidden: Vec<usize>, classes: usize, bands: usize, seed: u64) -> ModelSpec {
        ModelSpec {
            radius,
            hidden,
            classes,
            bands,
            seed,
        }
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = Model::zeros(tiny_spec(1, vec![4], 5, 2, 0)).unwrap();
        let p = m.forward(&vec![0.3; 18]).unwrap();
        for v in p {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_rejects_wrong_length() {
        let m = Model::zeros(tiny_spec(0, vec![], 2, 3, 0)).unwrap();
        assert!(m.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn forward_is_normalized() {
        let m = Model::new(tiny_spec(1, vec![8, 6], 4, 2, 9), Standardizer::identity(2)).unwrap();
        let mut g = seeded(1);
        for _ in 0..50 {
            let x: Vec<f64> = (0..18).map(|_| 10.0 * normal(&mut g)).collect();
            let p = m.forward(&x).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn featurize_examples() {
        let g = Grid::new(0.0, 2.0, 1.0, 2, 2).unwrap();
        let img = BandRaster::new(g, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let id = Standardizer::identity(1);
        assert_eq!(featurize(&img, 1, 0, 0, &id), vec![2.0]);
        // corner (0,0), r=1: clamp replicates the edge row/column
        assert_eq!(
            featurize(&img, 0, 0, 1, &id),
            vec![1.0, 1.0, 2.0, 1.0, 1.0, 2.0, 3.0, 3.0, 4.0]
        );
        let constant = BandRaster::new(g, 2, vec![5.0; 8]).unwrap();
        let norm = Standardizer::fit(&constant, &g.full_extent()).unwrap();
        assert_eq!(norm.std, vec![1.0, 1.0]);
        assert!(featurize(&constant, 1, 1, 1, &norm).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn masked_loss_examples() {
        let w = ClassWeights(vec![0.0, 2.0, 1.0, 1.0]);
        // perfect prediction
        let probs = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        assert_eq!(masked_loss(&probs, 3, &[1, 2], &w).unwrap(), Some(0.0));
        // uniform
        let u = [1.0 / 3.0; 6];
        let l = masked_loss(&u, 3, &[1, 3], &w).unwrap().unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-12);
        // one labeled pixel, weight 2 cancels
        let probs = [0.25, 0.5, 0.25, 0.2, 0.2, 0.6];
        let l = masked_loss(&probs, 3, &[1, 0], &w).unwrap().unwrap();
        assert!((l - 1.3862943611198906).abs() < 1e-12);
        // nothing labeled -> skip
        assert_eq!(masked_loss(&probs, 3, &[0, 0], &w).unwrap(), None);
    }

    #[test]
    fn loss_matches_masked_loss_of_forward() {
        let m = Model::new(tiny_spec(0, vec![5], 3, 2, 4), Standardizer::identity(2)).unwrap();
        let feats = [0.1, -0.4, 1.2, 0.3, -0.7, 0.9];
        let labels = [2u8, 0, 3];
        let w = ClassWeights(vec![0.0, 1.0, 0.5, 3.0]);
        let (l, _) = m.loss_and_grad(&feats, &labels, &w).unwrap().unwrap();
        let mut probs = Vec::new();
        for i in 0..3 {
            probs.extend(m.forward(&feats[i * 2..i * 2 + 2]).unwrap());
        }
        let direct = masked_loss(&probs, 3, &labels, &w).unwrap().unwrap();
        assert!((l - direct).abs() < 1e-12);
    }

    #[test]
    fn weight_scaling_leaves_loss_unchanged() {
        let m = Model::new(tiny_spec(0, vec![4], 3, 2, 5), Standardizer::identity(2)).unwrap();
        let feats = [0.2, 0.5, -1.0, 0.1, 0.7, 0.7];
        let labels = [1u8, 2, 3];
        let w = ClassWeights(vec![0.0, 1.0, 2.0, 0.5]);
        let w3 = ClassWeights(w.0.iter().map(|v| v * 3.0).collect());
        let (a, _) = m.loss_and_grad(&feats, &labels, &w).unwrap().unwrap();
        let (b, _) = m.loss_and_grad(&feats, &labels, &w3).unwrap().unwrap();
        assert!((a - b).abs() <= 1e-14 * a.abs());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut g = seeded(77);
        let spec = tiny_spec(0, vec![5, 4], 3, 3, 12);
        let m = Model::new(spec.clone(), Standardizer::identity(3)).unwrap();
        let n = 6;
        let feats: Vec<f64> = (0..n * 3).map(|_| normal(&mut g)).collect();
        let labels: Vec<u8> = (0..n).map(|i| (i % 4) as u8).collect();
        let w = ClassWeights(vec![0.0, 1.0, 2.5, 0.7]);
        let (_, grad) = m.loss_and_grad(&feats, &labels, &w).unwrap().unwrap();
        let params = m.params();
        let h = 1e-5;
        for j in 0..params.len() {
            let mut p = params.clone();
            p[j] += h;
            let mut mp = m.clone();
            mp.set_params(&p).unwrap();
            let lp = mp.loss_and_grad(&feats, &labels, &w).unwrap().unwrap().0;
            p[j] -= 2.0 * h;
            mp.set_params(&p).unwrap();
            let lm = mp.loss_and_grad(&feats, &labels, &w).unwrap().unwrap().0;
            let fd = (lp - lm) / (2.0 * h);
            let denom = grad[j].abs().max(fd.abs()).max(1e-6);
            assert!((grad[j] - fd).abs() / denom < 1e-4, "param {j}: {} vs {fd}", grad[j]);
        }
        let _ = unit(&mut g);
    }

    fn separable_scene(w: usize, h: usize) -> (BandRaster, MaskRaster, MaskRaster) {
        let g = Grid::new(0.0, h as f64, 1.0, w, h).unwrap();
        let mut img = BandRaster::zeros(g, 1);
        let mut truth = MaskRaster::zeros(g);
        let mut sparse = MaskRaster::zeros(g);
        let mut rng = seeded(5);
        for r in 0..h {
            for c in 0..w {
                let class = if (c / 4 + r / 4) % 2 == 0 { 1 } else { 2 };
                img.set(0, c, r, if class == 1 { -1.0 } else { 1.0 } + 0.1 * normal(&mut rng) as f32);
                truth.set(c, r, class);
                if unit(&mut rng) < 0.1 {
                    sparse.set(c, r, class);
                }
            }
        }
        (img, truth, sparse)
    }

    fn quick_config() -> TrainConfig {
        TrainConfig {
            learning_rate: 0.1,
            batch_size: 4,
            min_epochs: 5,
            max_epochs: 15,
            patch_size: 8,
            steps_per_epoch: 4,
            rounds: 1,
            patience: 3,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn trains_on_separable_scene() {
        let (img, truth, sparse) = separable_scene(24, 24);
        let spec = tiny_spec(0, vec![8], 2, 1, 1);
        let (model, log) = train(&img, &sparse, &img.grid.full_extent(), &spec, &quick_config()).unwrap();
        assert!(!log.epochs.is_empty());
        let pred = model.predict(&img).unwrap().argmax();
        let correct = pred.values.iter().zip(&truth.values).filter(|(a, b)| a == b).count();
        assert!(correct as f64 / truth.values.len() as f64 >= 0.99);

        let (model2, log2) = train(&img, &sparse, &img.grid.full_extent(), &spec, &quick_config()).unwrap();
        assert_eq!(log.final_loss(), log2.final_loss());
        assert_eq!(model.params(), model2.params());
    }

    #[test]
    fn rejects_bad_configs() {
        let (img, _, sparse) = separable_scene(8, 8);
        let spec = tiny_spec(0, vec![], 2, 1, 1);
        let mut cfg = quick_config();
        cfg.min_epochs = 20;
        cfg.max_epochs = 10;
        assert!(matches!(
            train(&img, &sparse, &img.grid.full_extent(), &spec, &cfg),
            Err(Error::Config(_))
        ));
        let wrong_bands = tiny_spec(0, vec![], 2, 3, 1);
        assert!(train(&img, &sparse, &img.grid.full_extent(), &wrong_bands, &quick_config()).is_err());
    }

    #[test]
    fn diverging_training_is_reported() {
        let (img, _, sparse) = separable_scene(16, 16);
        let spec = tiny_spec(0, vec![8], 2, 1, 1);
        let mut cfg = quick_config();
        cfg.learning_rate = 1e300;
        match train(&img, &sparse, &img.grid.full_extent(), &spec, &cfg) {
            Err(Error::Diverged { epoch, .. }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn predict_checks_bands_and_tiles_exactly() {
        let (img, _, _) = separable_scene(10, 10);
        let m = Model::new(tiny_spec(1, vec![4], 3, 1, 2), Standardizer::identity(1)).unwrap();
        let whole = m.predict(&img).unwrap();
        let mut tiled = m.predict_rows(&img, 0..3).unwrap();
        tiled.extend(m.predict_rows(&img, 3..10).unwrap());
        assert_eq!(whole.values, tiled);
        assert_eq!(m.predict(&img).unwrap(), whole);
        let two_band = BandRaster::zeros(img.grid, 2);
        assert!(m.predict(&two_band).is_err());
        for p in whole.pixels() {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn recursive_rounds() {
        let (img, _, sparse) = separable_scene(24, 24);
        let spec = tiny_spec(0, vec![8], 2, 1, 1);
        let ext = img.grid.full_extent();

        let single = recursive_train(&img, &sparse, &ext, &spec, &quick_config()).unwrap();
        let (m, _) = train(&img, &sparse, &ext, &spec, &quick_config()).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].model.params(), m.params());

        let mut cfg = quick_config();
        cfg.rounds = 2;
        let two = recursive_train(&img, &sparse, &ext, &spec, &cfg).unwrap();
        assert!(two[1].labeled_pixels >= two[0].labeled_pixels);
        for (i, &v) in sparse.values.iter().enumerate() {
            if v != 0 {
                assert_eq!(two[1].training_mask.values[i], v);
            }
        }

        cfg.pseudo_label_threshold = 1.01;
        let none = recursive_train(&img, &sparse, &ext, &spec, &cfg).unwrap();
        assert_eq!(none[1].training_mask, sparse);
    }
}
