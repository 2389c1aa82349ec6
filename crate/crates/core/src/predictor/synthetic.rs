use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::train::Sample;
use crate::dna::{DnaProfile, TimeGrid};
use crate::error::Result;

/// A fixed random smooth map from embeddings to decaying DNA shapes.
///
/// Each embedding passes through `tanh(A e)`; the four latent coordinates
/// set the amplitude, growth rate, bump height and bump centre of
/// `C(t) = amp * ((e^{rate t} - 1) / (e^{rate} - 1) + bump * exp(-((t - c) / 0.1)^2))`.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub embed_dim: usize,
    pub grid_len: usize,
    mixing: Vec<[f64; 4]>,
}

impl SyntheticTask {
    pub fn new(embed_dim: usize, grid_len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (embed_dim as f64).sqrt();
        let mixing = (0..embed_dim)
            .map(|_| std::array::from_fn(|_| scale * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        Self { embed_dim, grid_len, mixing }
    }

    /// 16-dim embeddings, 100-point grid.
    pub fn standard(seed: u64) -> Self {
        Self::new(16, 100, seed)
    }

    pub fn profile(&self, embedding: &[f64]) -> Result<DnaProfile> {
        let mut h = [0.0; 4];
        for (x, row) in embedding.iter().zip(&self.mixing) {
            for (hk, a) in h.iter_mut().zip(row) {
                *hk += a * x;
            }
        }
        let h = h.map(f64::tanh);
        let amp = (0.5 * h[0]).exp();
        let rate = 4.5 + 3.5 * h[1];
        let bump = 0.6 * (1.0 + h[2]);
        let centre = 0.5 + 0.35 * h[3];
        let norm = rate.exp_m1();
        DnaProfile::from_fn(TimeGrid::uniform(self.grid_len)?, |t| {
            let z = (t - centre) / 0.1;
            amp * ((rate * t).exp_m1() / norm + bump * (-z * z).exp())
        })
    }

    /// `count` pairs with standard-normal embeddings.
    pub fn generate(&self, count: usize, seed: u64) -> Result<Vec<Sample>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let embedding: Vec<f64> =
                    (0..self.embed_dim).map(|_| rng.sample(StandardNormal)).collect();
                let dna = self.profile(&embedding)?.to_document();
                Ok(Sample { embedding, dna })
            })
            .collect()
    }
}

/// Mean cosine of predicting the average target for every holdout sample,
/// using the first `1 - holdout` share as the reference set.
pub fn mean_predictor_cosine(samples: &[Sample], holdout: f64) -> f64 {
    let split = samples.len() - (samples.len() as f64 * holdout).floor() as usize;
    let (train, test) = samples.split_at(split);
    let d = train[0].dna.values.len();
    let mut mean = vec![0.0; d];
    for s in train {
        mean.iter_mut().zip(&s.dna.values).for_each(|(m, v)| *m += v / train.len() as f64);
    }
    let total: f64 = test
        .iter()
        .map(|s| super::cosine_similarity(&mean, &s.dna.values).unwrap_or(0.0))
        .sum();
    total / test.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_are_valid_and_varied() {
        let task = SyntheticTask::standard(7);
        let data = task.generate(50, 1).unwrap();
        assert_eq!(data.len(), 50);
        assert!(data.iter().all(|s| s.embedding.len() == 16 && s.dna.values.len() == 100));
        assert!(data.iter().all(|s| s.dna.values[0] < 0.1 * s.dna.values[99]));
        let baseline = mean_predictor_cosine(&data, 0.2);
        assert!(baseline < 0.95, "{baseline}");
    }

    #[test]
    fn generation_is_seeded() {
        let a = SyntheticTask::standard(3).generate(5, 9).unwrap();
        let b = SyntheticTask::standard(3).generate(5, 9).unwrap();
        assert_eq!(a[4].dna.values, b[4].dna.values);
        assert_eq!(a[4].embedding, b[4].embedding);
    }
}
