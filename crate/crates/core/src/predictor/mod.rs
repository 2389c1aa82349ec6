//! Three-layer ReLU regressor from condition embeddings to DNA vectors,
//! trained with a cosine-similarity loss.

mod synthetic;
mod train;

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dna::{DnaProfile, TimeGrid};
use crate::error::{Error, Result};

pub use synthetic::{mean_predictor_cosine, SyntheticTask};
pub use train::{load_dataset, train, Sample, TrainConfig, TrainOutcome};

/// Floor applied to raw predictions before they are used as a profile.
pub const OUTPUT_FLOOR: f64 = 1e-12;

pub const FORMAT_NAME: &str = "dnaplan-regressor";
pub const FORMAT_VERSION: u32 = 1;

/// Input, two hidden, and output widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerWidths {
    pub d_in: usize,
    pub h1: usize,
    pub h2: usize,
    pub d_out: usize,
}

impl LayerWidths {
    /// Small configuration used for synthetic experiments.
    pub const DESK: LayerWidths = LayerWidths { d_in: 16, h1: 256, h2: 256, d_out: 100 };
    /// Text-encoder-sized input: 963,556 parameters, 1.93M FLOPs per call.
    pub const LARGE: LayerWidths = LayerWidths { d_in: 3584, h1: 256, h2: 128, d_out: 100 };

    fn dims(&self) -> [(usize, usize); 3] {
        [(self.d_in, self.h1), (self.h1, self.h2), (self.h2, self.d_out)]
    }

    pub fn param_count(&self) -> usize {
        self.dims().iter().map(|(i, o)| i * o + o).sum()
    }

    pub fn flops(&self) -> usize {
        2 * self.dims().iter().map(|(i, o)| i * o).sum::<usize>()
    }
}

/// Affine layer, weights stored row-major `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { in_dim, out_dim, weights: vec![0.0; in_dim * out_dim], bias: vec![0.0; out_dim] }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect()
    }

    /// `W^T g`.
    fn apply_transpose(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.in_dim];
        for (row, gi) in self.weights.chunks_exact(self.in_dim).zip(g) {
            if *gi == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * gi;
            }
        }
        out
    }
}

/// Weights of the regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorParams {
    pub layers: [DenseLayer; 3],
    /// Time grid of the predicted profile; uniform on `[0, 1]` when absent.
    pub grid: Option<Vec<f64>>,
}

/// Per-parameter gradient with the same shapes as [`RegressorParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: [DenseLayer; 3],
}

/// Activations of one forward pass.
struct Trace {
    input: Vec<f64>,
    pre: [Vec<f64>; 2],
    hidden: [Vec<f64>; 2],
    masks: [Option<Vec<f64>>; 2],
    output: Vec<f64>,
}

impl RegressorParams {
    pub fn zeros(w: LayerWidths) -> Self {
        let [a, b, c] = w.dims();
        Self {
            layers: [DenseLayer::zeros(a.0, a.1), DenseLayer::zeros(b.0, b.1), DenseLayer::zeros(c.0, c.1)],
            grid: None,
        }
    }

    /// He-normal weights, zero biases.
    pub fn init(w: LayerWidths, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Self::zeros(w);
        for layer in &mut params.layers {
            let std = (2.0 / layer.in_dim as f64).sqrt();
            for x in &mut layer.weights {
                *x = std * rng.sample::<f64, _>(StandardNormal);
            }
        }
        params
    }

    pub fn widths(&self) -> LayerWidths {
        LayerWidths {
            d_in: self.layers[0].in_dim,
            h1: self.layers[0].out_dim,
            h2: self.layers[1].out_dim,
            d_out: self.layers[2].out_dim,
        }
    }

    pub fn param_count(&self) -> usize {
        self.widths().param_count()
    }

    fn check_input(&self, e: &[f64]) -> Result<()> {
        let d_in = self.layers[0].in_dim;
        if e.len() != d_in {
            return Err(Error::DimensionMismatch { expected: d_in, got: e.len() });
        }
        if e.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("embedding has non-finite components".to_string()));
        }
        Ok(())
    }

    fn trace(&self, e: &[f64], dropout: Option<(f64, &mut ChaCha8Rng)>) -> Trace {
        let mut drop = dropout;
        let mut pre: [Vec<f64>; 2] = Default::default();
        let mut hidden: [Vec<f64>; 2] = Default::default();
        let mut masks: [Option<Vec<f64>>; 2] = [None, None];
        let mut x = e.to_vec();
        for l in 0..2 {
            let z = self.layers[l].apply(&x);
            let mut a: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
            if let Some((rate, rng)) = drop.as_mut() {
                if *rate > 0.0 {
                    let keep = 1.0 / (1.0 - *rate);
                    let mask: Vec<f64> =
                        (0..a.len()).map(|_| if rng.random::<f64>() < *rate { 0.0 } else { keep }).collect();
                    a.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                    masks[l] = Some(mask);
                }
            }
            pre[l] = z;
            hidden[l] = a.clone();
            x = a;
        }
        let output = self.layers[2].apply(&x);
        Trace { input: e.to_vec(), pre, hidden, masks, output }
    }

    /// Deterministic prediction (dropout off).
    pub fn forward(&self, e: &[f64]) -> Result<Vec<f64>> {
        self.check_input(e)?;
        Ok(self.trace(e, None).output)
    }

    /// Training-mode prediction with inverted dropout after each hidden layer.
    pub fn forward_train(&self, e: &[f64], dropout: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        self.check_input(e)?;
        Ok(self.trace(e, Some((dropout, rng))).output)
    }

    fn backprop(&self, t: &Trace, d_out: &[f64]) -> Gradients {
        let mut grads = Gradients {
            layers: [
                DenseLayer::zeros(self.layers[0].in_dim, self.layers[0].out_dim),
                DenseLayer::zeros(self.layers[1].in_dim, self.layers[1].out_dim),
                DenseLayer::zeros(self.layers[2].in_dim, self.layers[2].out_dim),
            ],
        };
        let mut delta = d_out.to_vec();
        for l in (0..3).rev() {
            let input = if l == 0 { &t.input } else { &t.hidden[l - 1] };
            let g = &mut grads.layers[l];
            for (o, &d) in delta.iter().enumerate() {
                g.bias[o] = d;
                if d != 0.0 {
                    let row = &mut g.weights[o * g.in_dim..(o + 1) * g.in_dim];
                    row.iter_mut().zip(input).for_each(|(w, x)| *w = d * x);
                }
            }
            if l == 0 {
                break;
            }
            let mut back = self.layers[l].apply_transpose(&delta);
            let h = l - 1;
            for (i, b) in back.iter_mut().enumerate() {
                let relu = if t.pre[h][i] > 0.0 { 1.0 } else { 0.0 };
                let mask = t.masks[h].as_ref().map_or(1.0, |m| m[i]);
                *b *= relu * mask;
            }
            delta = back;
        }
        grads
    }

    /// Loss and exact gradient of `cosine_loss(forward(e), target)`.
    pub fn backward(&self, e: &[f64], target: &[f64]) -> Result<(f64, Gradients)> {
        self.check_input(e)?;
        let t = self.trace(e, None);
        let (loss, d_out) = cosine_loss_grad(&t.output, target)?;
        Ok((loss, self.backprop(&t, &d_out)))
    }

    /// Loss and gradient with a fresh dropout draw; a zero prediction yields
    /// a zero gradient.
    pub(crate) fn backward_train(
        &self,
        e: &[f64],
        target: &[f64],
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, Option<Gradients>)> {
        self.check_input(e)?;
        let t = self.trace(e, Some((dropout, rng)));
        match cosine_loss_grad(&t.output, target) {
            Ok((loss, d_out)) => Ok((loss, Some(self.backprop(&t, &d_out)))),
            Err(_) if norm(&t.output) == 0.0 => Ok((1.0, None)),
            Err(err) => Err(err),
        }
    }

    /// Prediction clamped at [`OUTPUT_FLOOR`] and placed on the model grid.
    pub fn predict_dna(&self, e: &[f64]) -> Result<DnaProfile> {
        let raw = self.forward(e)?;
        let grid = match &self.grid {
            Some(g) => TimeGrid::new(g.clone())?,
            None => TimeGrid::uniform(raw.len())?,
        };
        if grid.len() != raw.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: raw.len() });
        }
        let values = raw.iter().map(|v| v.max(OUTPUT_FLOOR)).collect();
        let mut meta = serde_json::Map::new();
        meta.insert("source".to_string(), serde_json::Value::from("predictor"));
        DnaProfile::with_meta(grid, values, meta)
    }

    pub fn to_document(&self) -> ParamsDocument {
        ParamsDocument {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            activation: "relu".to_string(),
            grid: self.grid.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerDocument {
                    in_dim: l.in_dim,
                    out_dim: l.out_dim,
                    weights: l.weights.chunks_exact(l.in_dim).map(<[f64]>::to_vec).collect(),
                    bias: l.bias.clone(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        crate::fmt::to_stable_json(&self.to_document())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ParamsDocument = serde_json::from_str(text)?;
        doc.into_params()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Versioned, shape-explicit wire form of [`RegressorParams`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsDocument {
    pub format: String,
    pub version: u32,
    pub activation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    pub layers: Vec<LayerDocument>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerDocument {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl ParamsDocument {
    pub fn into_params(self) -> Result<RegressorParams> {
        if self.format != FORMAT_NAME || self.version != FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported parameter document {} v{}",
                self.format, self.version
            )));
        }
        if self.layers.len() != 3 {
            return Err(Error::Parse(format!("expected 3 layers, found {}", self.layers.len())));
        }
        let mut layers = Vec::with_capacity(3);
        for (i, l) in self.layers.into_iter().enumerate() {
            if l.weights.len() != l.out_dim
                || l.weights.iter().any(|row| row.len() != l.in_dim)
                || l.bias.len() != l.out_dim
            {
                return Err(Error::Parse(format!("layer {i} does not match its declared shape")));
            }
            let weights: Vec<f64> = l.weights.into_iter().flatten().collect();
            if weights.iter().chain(&l.bias).any(|x| !x.is_finite()) {
                return Err(Error::Parse(format!("layer {i} has non-finite parameters")));
            }
            layers.push(DenseLayer { in_dim: l.in_dim, out_dim: l.out_dim, weights, bias: l.bias });
        }
        for i in 1..3 {
            if layers[i].in_dim != layers[i - 1].out_dim {
                return Err(Error::Parse(format!("layer {i} input does not match layer {} output", i - 1)));
            }
        }
        let layers: [DenseLayer; 3] = layers.try_into().expect("length checked above");
        if let Some(g) = &self.grid {
            if g.len() != layers[2].out_dim {
                return Err(Error::DimensionMismatch { expected: layers[2].out_dim, got: g.len() });
            }
        }
        Ok(RegressorParams { layers, grid: self.grid })
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_pair(pred: &[f64], target: &[f64]) -> Result<(f64, f64)> {
    if pred.len() != target.len() {
        return Err(Error::DimensionMismatch { expected: target.len(), got: pred.len() });
    }
    let (np, nt) = (norm(pred), norm(target));
    if np == 0.0 || nt == 0.0 {
        return Err(Error::Domain("cosine loss undefined for a zero-norm vector".to_string()));
    }
    Ok((np, nt))
}

/// Cosine similarity of two nonzero vectors.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    let (na, nb) = check_pair(a, b)?;
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// `1 - cos(pred, target)`, in `[0, 2]`.
pub fn cosine_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    Ok(1.0 - cosine_similarity(pred, target)?)
}

fn cosine_loss_grad(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (np, nt) = check_pair(pred, target)?;
    let cos = dot(pred, target) / (np * nt);
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| -(t / (np * nt) - cos * p / (np * np)))
        .collect();
    Ok((1.0 - cos.clamp(-1.0, 1.0), grad))
}

/// Size and speed of a parameter set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub param_count: usize,
    pub flops: usize,
    pub trials: usize,
    pub mean_latency_ms: f64,
}

/// Times `trials` inference calls on a fixed pseudo-random embedding.
pub fn benchmark(params: &RegressorParams, trials: usize) -> BenchmarkReport {
    let w = params.widths();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let e: Vec<f64> = (0..w.d_in).map(|_| rng.sample(StandardNormal)).collect();
    let mut sink = 0.0;
    let started = Instant::now();
    for _ in 0..trials {
        let out = params.forward(&e).expect("embedding matches the model");
        sink += out[0];
    }
    let elapsed = started.elapsed();
    std::hint::black_box(sink);
    BenchmarkReport {
        param_count: w.param_count(),
        flops: w.flops(),
        trials,
        mean_latency_ms: if trials == 0 { 0.0 } else { elapsed.as_secs_f64() * 1e3 / trials as f64 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(w1: f64, b1: f64, w2: f64, b2: f64, w3: f64, b3: f64) -> RegressorParams {
        let mut p = RegressorParams::zeros(LayerWidths { d_in: 1, h1: 1, h2: 1, d_out: 1 });
        p.layers[0].weights[0] = w1;
        p.layers[0].bias[0] = b1;
        p.layers[1].weights[0] = w2;
        p.layers[1].bias[0] = b2;
        p.layers[2].weights[0] = w3;
        p.layers[2].bias[0] = b3;
        p
    }

    #[test]
    fn zero_network_outputs_zero() {
        let p = RegressorParams::zeros(LayerWidths::DESK);
        let out = p.forward(&[0.3; 16]).unwrap();
        assert_eq!(out.len(), 100);
        assert!(out.iter().all(|&x| x == 0.0));
        assert!(matches!(p.forward(&[0.0; 3]), Err(Error::DimensionMismatch { expected: 16, got: 3 })));
    }

    #[test]
    fn hand_computed_chain() {
        // 2 -> relu(1.5*2 - 1) = 2 -> relu(-1*2 + 0.5) = 0 -> 3*0 + 0.25
        let p = tiny(1.5, -1.0, -1.0, 0.5, 3.0, 0.25);
        assert_eq!(p.forward(&[2.0]).unwrap(), vec![0.25]);
        // 2 -> relu(2) = 2 -> relu(2*2 - 1) = 3 -> -1*3 + 1
        let p = tiny(1.0, 0.0, 2.0, -1.0, -1.0, 1.0);
        assert_eq!(p.forward(&[2.0]).unwrap(), vec![-2.0]);
    }

    #[test]
    fn cosine_loss_examples() {
        let v = [0.3, -1.2, 4.0];
        assert!(cosine_loss(&v, &v).unwrap().abs() < 1e-15);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((cosine_loss(&v, &neg).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(cosine_loss(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert!(cosine_loss(&[0.0, 0.0], &[0.0, 1.0]).is_err());
        let scaled: Vec<f64> = v.iter().map(|x| 7.5 * x).collect();
        let t = [1.0, 2.0, 0.5];
        assert!((cosine_loss(&scaled, &t).unwrap() - cosine_loss(&v, &t).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn inference_ignores_dropout() {
        let p = RegressorParams::init(LayerWidths { d_in: 4, h1: 8, h2: 8, d_out: 5 }, 1);
        let e = [0.1, -0.4, 0.9, 0.2];
        let a = p.forward(&e).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let _ = p.forward_train(&e, 0.5, &mut rng).unwrap();
        assert_eq!(p.forward(&e).unwrap(), a);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(p.forward_train(&e, 0.0, &mut rng).unwrap(), a);
    }

    #[test]
    fn zero_input_kills_first_layer_weight_gradient() {
        let mut p = RegressorParams::init(LayerWidths { d_in: 3, h1: 6, h2: 5, d_out: 4 }, 2);
        p.layers[0].bias.iter_mut().for_each(|b| *b = 0.5);
        p.layers[1].bias.iter_mut().for_each(|b| *b = 0.1);
        let (_, g) = p.backward(&[0.0; 3], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(g.layers[0].weights.iter().all(|&x| x == 0.0));
        assert!(g.layers[0].bias.iter().any(|&x| x != 0.0));
    }

    #[test]
    fn output_gradient_orthogonal_to_prediction() {
        let p = RegressorParams::init(LayerWidths { d_in: 3, h1: 6, h2: 5, d_out: 4 }, 4);
        let e = [0.5, -0.2, 0.8];
        let pred = p.forward(&e).unwrap();
        let target: Vec<f64> = pred.iter().map(|x| 2.5 * x).collect();
        let (loss, g) = cosine_loss_grad(&pred, &target).unwrap();
        assert!(loss.abs() < 1e-15);
        assert!(dot(&g, &pred).abs() < 1e-12);
        // at any target the loss gradient is orthogonal to the prediction
        let (_, g) = cosine_loss_grad(&pred, &[1.0, -1.0, 0.3, 2.0]).unwrap();
        assert!(dot(&g, &pred).abs() < 1e-12);
    }

    #[test]
    fn presets() {
        assert_eq!(LayerWidths::LARGE.param_count(), 963_556);
        assert_eq!(LayerWidths::LARGE.flops(), 1_926_144);
        assert_eq!(LayerWidths::DESK.param_count(), 16 * 256 + 256 + 256 * 256 + 256 + 256 * 100 + 100);
    }

    #[test]
    fn params_json_round_trip() {
        let mut p = RegressorParams::init(LayerWidths { d_in: 2, h1: 3, h2: 3, d_out: 4 }, 9);
        p.grid = Some(vec![0.0, 0.25, 0.5, 1.0]);
        let back = RegressorParams::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(back, p);
        let dna = back.predict_dna(&[1.0, -1.0]).unwrap();
        assert_eq!(dna.times(), &[0.0, 0.25, 0.5, 1.0]);
        assert!(dna.values().iter().all(|&v| v >= OUTPUT_FLOOR));

        let mut doc = p.to_document();
        doc.layers[1].weights.pop();
        assert!(doc.into_params().is_err());
    }
}
