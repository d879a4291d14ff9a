//! Feedforward binary classifier separating target samples (label 1) from
//! generated samples (label 0).
//!
//! Hidden layers use rectifiers and the output is a single logistic unit.
//! Training is plain mini-batch SGD on mean binary cross-entropy. Gradients
//! within a batch are accumulated sequentially in sample order, so a run is
//! bit-reproducible for a given seed.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{rng_for, stream};

pub const DEFAULT_HIDDEN: [usize; 2] = [64, 32];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    fn affine(&self, input: &[f64], out: &mut [f64]) {
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            *slot = self.biases[o] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub layers: Vec<DenseLayer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// L2 penalty applied to weights (not biases) in the update step.
    pub weight_decay: f64,
    /// Stop when the epoch loss moved less than `early_stop_tolerance` over
    /// this many epochs. 0 disables early stopping.
    pub early_stop_window: usize,
    pub early_stop_tolerance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 500,
            batch_size: 32,
            seed: 0,
            weight_decay: 0.0,
            early_stop_window: 20,
            early_stop_tolerance: 1e-6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be nonnegative".into()));
        }
        Ok(())
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-[y ln s(z) + (1 - y) ln(1 - s(z))]` computed from the logit.
fn bce_from_logit(z: f64, label: f64) -> f64 {
    let softplus = if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    };
    softplus - label * z
}

/// Random model with `N(0, 1/fan_in)` weights and zero biases.
pub fn init_model(input_dim: usize, hidden: &[usize], seed: u64) -> ClassifierModel {
    let mut rng = rng_for(seed, stream::DISCRIMINATOR, 0);
    let mut sizes = vec![input_dim];
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    let layers = sizes
        .windows(2)
        .map(|w| {
            let (inputs, outputs) = (w[0], w[1]);
            let normal = Normal::new(0.0, 1.0 / (inputs.max(1) as f64).sqrt()).expect("finite std");
            DenseLayer {
                inputs,
                outputs,
                weights: (0..inputs * outputs).map(|_| normal.sample(&mut rng)).collect(),
                biases: vec![0.0; outputs],
            }
        })
        .collect();
    ClassifierModel { layers }
}

/// Per-sample forward/backward buffers.
struct Workspace {
    /// Post-activation outputs of every layer; the last entry holds the logit.
    activations: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(model: &ClassifierModel) -> Self {
        Workspace {
            activations: model.layers.iter().map(|l| vec![0.0; l.outputs]).collect(),
            deltas: model.layers.iter().map(|l| vec![0.0; l.outputs]).collect(),
        }
    }
}

impl ClassifierModel {
    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    /// All parameters flattened layer by layer, weights before biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                actual: params.len(),
            });
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[offset..offset + nw]);
            offset += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn forward_into(&self, x: &[f64], ws: &mut Workspace) -> f64 {
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (before, after) = ws.activations.split_at_mut(i);
            let input = if i == 0 { x } else { &before[i - 1] };
            let out = &mut after[0];
            layer.affine(input, out);
            if i != last {
                for v in out.iter_mut() {
                    *v = v.max(0.0);
                }
            }
        }
        ws.activations[last][0]
    }

    /// Realness probability for one feature vector.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.logit(x).map(sigmoid)
    }

    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.forward_into(x, &mut Workspace::new(self)))
    }

    /// Adds `d loss / d params` for one sample into `grad` (same layout as
    /// [`parameters`](Self::parameters)) and returns the sample loss.
    fn accumulate_gradient(&self, x: &[f64], label: f64, ws: &mut Workspace, grad: &mut [f64]) -> f64 {
        let z = self.forward_into(x, ws);
        let loss = bce_from_logit(z, label);
        let last = self.layers.len() - 1;
        ws.deltas[last][0] = sigmoid(z) - label;

        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut offset = 0;
        for l in &self.layers {
            offsets.push(offset);
            offset += l.param_count();
        }

        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input: &[f64] = if i == 0 { x } else { &ws.activations[i - 1] };
            let base = offsets[i];
            let (wgrad, bgrad) = grad[base..base + layer.param_count()].split_at_mut(layer.weights.len());
            let delta = &ws.deltas[i];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &mut wgrad[o * layer.inputs..(o + 1) * layer.inputs];
                for (g, xi) in row.iter_mut().zip(input) {
                    *g += d * xi;
                }
                bgrad[o] += d;
            }
            if i > 0 {
                let (prev_deltas, cur) = ws.deltas.split_at_mut(i);
                let prev = &mut prev_deltas[i - 1];
                prev.iter_mut().for_each(|v| *v = 0.0);
                for (o, d) in cur[0].iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                for (p, a) in prev.iter_mut().zip(&ws.activations[i - 1]) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
        }
        loss
    }

    /// Mean cross-entropy over `samples` and its gradient.
    pub fn loss_and_gradient(&self, samples: &[(&[f64], f64)]) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.param_count()];
        let mut ws = Workspace::new(self);
        let mut loss = 0.0;
        for (x, y) in samples {
            self.check_input(x)?;
            loss += self.accumulate_gradient(x, *y, &mut ws, &mut grad);
        }
        let n = samples.len().max(1) as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok((loss / n, grad))
    }

    /// Mean cross-entropy over `samples`.
    pub fn loss(&self, samples: &[(&[f64], f64)]) -> Result<f64> {
        let mut ws = Workspace::new(self);
        let mut total = 0.0;
        for (x, y) in samples {
            self.check_input(x)?;
            total += bce_from_logit(self.forward_into(x, &mut ws), *y);
        }
        Ok(total / samples.len().max(1) as f64)
    }

    fn sgd_step(&mut self, grad: &[f64], lr: f64, weight_decay: f64) {
        let mut offset = 0;
        for l in &mut self.layers {
            for (w, g) in l.weights.iter_mut().zip(&grad[offset..]) {
                *w -= lr * (g + weight_decay * *w);
            }
            offset += l.weights.len();
            for (b, g) in l.biases.iter_mut().zip(&grad[offset..]) {
                *b -= lr * g;
            }
            offset += l.biases.len();
        }
    }
}

pub fn forward(model: &ClassifierModel, x: &[f64]) -> Result<f64> {
    model.forward(x)
}

/// Trains `model` on `real` (label 1) versus `fake` (label 0). Returns the
/// trained model and the mean training loss of every completed epoch.
pub fn train(
    model: &ClassifierModel,
    real: &[Vec<f64>],
    fake: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<(ClassifierModel, Vec<f64>)> {
    cfg.validate()?;
    if real.is_empty() || fake.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let samples: Vec<(&[f64], f64)> = real
        .iter()
        .map(|x| (x.as_slice(), 1.0))
        .chain(fake.iter().map(|x| (x.as_slice(), 0.0)))
        .collect();
    for (x, _) in &samples {
        model.check_input(x)?;
    }

    let mut model = model.clone();
    let mut rng = rng_for(cfg.seed, stream::DISCRIMINATOR, 1);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut grad = vec![0.0; model.param_count()];
    let mut ws = Workspace::new(&model);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_loss = 0.0;
            for &i in batch {
                let (x, y) = samples[i];
                batch_loss += model.accumulate_gradient(x, y, &mut ws, &mut grad);
            }
            let n = batch.len() as f64;
            grad.iter_mut().for_each(|g| *g /= n);
            model.sgd_step(&grad, cfg.learning_rate, cfg.weight_decay);
            epoch_loss += batch_loss;
        }
        let mean = epoch_loss / samples.len() as f64;
        if !mean.is_finite() || model.parameters().iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch });
        }
        history.push(mean);
        let w = cfg.early_stop_window;
        if w > 0 && history.len() > w {
            let then = history[history.len() - 1 - w];
            if (then - mean).abs() < cfg.early_stop_tolerance {
                break;
            }
        }
    }
    Ok((model, history))
}

/// Realness probability for every sample, in input order.
pub fn score_batch(model: &ClassifierModel, samples: &[Vec<f64>]) -> Result<Vec<f64>> {
    samples.par_iter().map(|x| model.forward(x)).collect()
}

/// Fraction of samples whose thresholded prediction equals the label.
/// A probability of exactly 0.5 predicts label 0.
pub fn accuracy(model: &ClassifierModel, samples: &[Vec<f64>], labels: &[bool]) -> Result<f64> {
    if samples.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: samples.len(),
            right: labels.len(),
        });
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let scores = score_batch(model, samples)?;
    let correct = scores
        .iter()
        .zip(labels)
        .filter(|(p, label)| (**p > 0.5) == **label)
        .count();
    Ok(correct as f64 / samples.len() as f64)
}

/// Random split of `0..n` into `(train, held_out)` index sets with
/// `held_out_fraction` of the items held out (at least one each when `n >= 2`).
pub fn split_indices<R: Rng + ?Sized>(n: usize, held_out_fraction: f64, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut held = ((n as f64) * held_out_fraction).round() as usize;
    if n >= 2 {
        held = held.clamp(1, n - 1);
    } else {
        held = 0;
    }
    let train = idx.split_off(held);
    (train, idx)
}

impl ClassifierModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: ClassifierModel = serde_json::from_str(text)?;
        let mut prev = None;
        for l in &model.layers {
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(Error::InvalidArgument("layer array sizes disagree with shape".into()));
            }
            if let Some(p) = prev {
                if p != l.inputs {
                    return Err(Error::InvalidArgument("consecutive layer sizes disagree".into()));
                }
            }
            prev = Some(l.outputs);
        }
        if prev != Some(1) {
            return Err(Error::InvalidArgument("model must end in a single output".into()));
        }
        Ok(model)
    }
}
