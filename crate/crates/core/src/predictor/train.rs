use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{cosine_similarity, Gradients, LayerWidths, RegressorParams};
use crate::dna::DnaDocument;
use crate::error::{Error, Result};

/// One `(embedding, dna)` training pair as stored on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sample {
    pub embedding: Vec<f64>,
    pub dna: DnaDocument,
}

/// Reads a dataset file: a JSON array of [`Sample`]s.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Fraction of pairs held out for evaluation.
    pub holdout_fraction: f64,
    pub hidden: (usize, usize),
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 40,
            dropout: 0.1,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            holdout_fraction: 0.1,
            hidden: (LayerWidths::DESK.h1, LayerWidths::DESK.h2),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: RegressorParams,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
    pub train_size: usize,
    pub holdout_size: usize,
    pub holdout_mean_cosine: Option<f64>,
    pub holdout_median_cosine: Option<f64>,
    pub train_mean_cosine: f64,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

impl Adam {
    fn new(params: &RegressorParams) -> Self {
        let sizes: Vec<usize> = params
            .layers
            .iter()
            .flat_map(|l| [l.weights.len(), l.bias.len()])
            .collect();
        Self {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut RegressorParams, grads: &Gradients, cfg: &TrainConfig) {
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step);
        let c2 = 1.0 - cfg.beta2.powi(self.step);
        let tensors = params
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .flat_map(|(p, g)| [(&mut p.weights, &g.weights), (&mut p.bias, &g.bias)]);
        for ((param, grad), (m, v)) in tensors.zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for i in 0..param.len() {
                let g = grad[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
                param[i] -= cfg.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.adam_eps);
            }
        }
    }
}

fn accumulate(sum: &mut Gradients, g: &Gradients) {
    for (s, g) in sum.layers.iter_mut().zip(&g.layers) {
        s.weights.iter_mut().zip(&g.weights).for_each(|(a, b)| *a += b);
        s.bias.iter_mut().zip(&g.bias).for_each(|(a, b)| *a += b);
    }
}

fn scale(g: &mut Gradients, factor: f64) {
    for l in &mut g.layers {
        l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|x| *x *= factor);
    }
}

fn validate(dataset: &[Sample], cfg: &TrainConfig) -> Result<(usize, usize)> {
    let first = dataset.first().ok_or_else(|| Error::Domain("empty dataset".to_string()))?;
    let (d_in, d_out) = (first.embedding.len(), first.dna.values.len());
    if d_in == 0 || d_out == 0 {
        return Err(Error::Domain("embedding and DNA must be non-empty".to_string()));
    }
    for (i, s) in dataset.iter().enumerate() {
        if s.embedding.len() != d_in {
            return Err(Error::DimensionMismatch { expected: d_in, got: s.embedding.len() });
        }
        if s.dna.values.len() != d_out {
            return Err(Error::DimensionMismatch { expected: d_out, got: s.dna.values.len() });
        }
        let report = crate::dna::validate(&s.dna.grid, &s.dna.values);
        if !report.is_valid() {
            return Err(Error::Parse(format!("sample {i} has an invalid DNA profile:\n{report}")));
        }
        if s.dna.values.iter().all(|&v| v == 0.0) {
            return Err(Error::Domain(format!("sample {i} has an all-zero DNA target")));
        }
    }
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::Domain("learning rate must be positive".to_string()));
    }
    if !(0.0..1.0).contains(&cfg.dropout) {
        return Err(Error::Domain("dropout must lie in [0, 1)".to_string()));
    }
    if !(0.0..1.0).contains(&cfg.holdout_fraction) {
        return Err(Error::Domain("holdout fraction must lie in [0, 1)".to_string()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Domain("batch size must be positive".to_string()));
    }
    Ok((d_in, d_out))
}

fn cosines(params: &RegressorParams, data: &[&Sample]) -> Vec<f64> {
    data.iter()
        .map(|s| {
            let pred = params.forward(&s.embedding).expect("dimensions validated");
            cosine_similarity(&pred, &s.dna.values).unwrap_or(0.0)
        })
        .collect()
}

/// Adam on the cosine loss. The split, initialization, shuffling and dropout
/// all derive from `cfg.seed`, so equal inputs give bit-identical weights.
pub fn train(dataset: &[Sample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let (d_in, d_out) = validate(dataset, cfg)?;
    let widths = LayerWidths { d_in, h1: cfg.hidden.0, h2: cfg.hidden.1, d_out };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);
    let holdout_size = (dataset.len() as f64 * cfg.holdout_fraction).floor() as usize;
    let (train_idx, holdout_idx) = order.split_at(dataset.len() - holdout_size);
    let mut train_idx = train_idx.to_vec();

    let mut params = RegressorParams::init(widths, cfg.seed.wrapping_add(1));
    params.grid = Some(dataset[0].dna.grid.clone());
    let mut adam = Adam::new(&params);
    let mut loss_history = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in train_idx.chunks(cfg.batch_size) {
            let mut sum = Gradients { layers: RegressorParams::zeros(widths).layers };
            for &i in batch {
                let s = &dataset[i];
                let (loss, g) = params.backward_train(&s.embedding, &s.dna.values, cfg.dropout, &mut rng)?;
                epoch_loss += loss;
                if let Some(g) = g {
                    accumulate(&mut sum, &g);
                }
            }
            scale(&mut sum, 1.0 / batch.len() as f64);
            adam.update(&mut params, &sum, cfg);
        }
        loss_history.push(epoch_loss / train_idx.len() as f64);
    }

    let train_refs: Vec<&Sample> = train_idx.iter().map(|&i| &dataset[i]).collect();
    let train_cos = cosines(&params, &train_refs);
    let holdout_refs: Vec<&Sample> = holdout_idx.iter().map(|&i| &dataset[i]).collect();
    let mut holdout_cos = cosines(&params, &holdout_refs);
    let (mean, median) = if holdout_cos.is_empty() {
        (None, None)
    } else {
        holdout_cos.sort_by(f64::total_cmp);
        let n = holdout_cos.len();
        let median = if n % 2 == 1 {
            holdout_cos[n / 2]
        } else {
            0.5 * (holdout_cos[n / 2 - 1] + holdout_cos[n / 2])
        };
        (Some(holdout_cos.iter().sum::<f64>() / n as f64), Some(median))
    };

    Ok(TrainOutcome {
        params,
        loss_history,
        train_size: train_refs.len(),
        holdout_size,
        holdout_mean_cosine: mean,
        holdout_median_cosine: median,
        train_mean_cosine: train_cos.iter().sum::<f64>() / train_cos.len() as f64,
    })
}
