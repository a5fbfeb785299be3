//! Siamese training: pair sampling, the stress-style loss and Adam.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distances::PairwiseMatrix;

use super::network::{Architecture, Mode, Network};
use super::{Chart, ChartError};

/// Number of fixed probe batches used to measure loss before and after
/// training.
const PROBE_BATCHES: usize = 8;

/// `L = sqrt(Σ (ρ_ij − ‖o_i − o_j‖)²)` over the given pairs, with its
/// gradient with respect to the flat `n × dim` embedding array. Coincident
/// embeddings and a zero loss contribute a zero subgradient.
pub fn siamese_loss(
    pairs: &[(usize, usize)],
    rho: &[f64],
    embeddings: &[f64],
    dim: usize,
) -> Result<(f64, Vec<f64>), ChartError> {
    if pairs.is_empty() {
        return Err(ChartError::EmptyPairs);
    }
    if rho.len() != pairs.len() {
        return Err(ChartError::ShapeMismatch { got: rho.len(), expected: pairs.len() });
    }
    let n = embeddings.len() / dim.max(1);
    if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= n || j >= n) {
        return Err(ChartError::ShapeMismatch { got: i.max(j), expected: n });
    }
    let point = |i: usize| &embeddings[i * dim..(i + 1) * dim];
    let deltas: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| point(i).iter().zip(point(j)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .collect();
    let loss = rho.iter().zip(&deltas).map(|(r, d)| (r - d).powi(2)).sum::<f64>().sqrt();
    let mut grad = vec![0.0; embeddings.len()];
    if loss > 0.0 {
        for (p, &(i, j)) in pairs.iter().enumerate() {
            let d = deltas[p];
            if d == 0.0 {
                continue;
            }
            let coef = -(rho[p] - d) / (loss * d);
            for k in 0..dim {
                let diff = embeddings[i * dim + k] - embeddings[j * dim + k];
                grad[i * dim + k] += coef * diff;
                grad[j * dim + k] -= coef * diff;
            }
        }
    }
    Ok((loss, grad))
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Vec<f64>>, grads: &[Vec<f64>]) {
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (p, (param, grad)) in params.into_iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[p], &mut self.v[p]);
            for k in 0..param.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * grad[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * grad[k] * grad[k];
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                param[k] -= self.learning_rate * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceSource {
    Signature,
    Geodesic,
    CirGeodesic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub architecture: Architecture,
    pub out_dim: usize,
    pub distance_source: DistanceSource,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 50,
            learning_rate: 1e-4,
            seed: 0,
            architecture: Architecture::Conv,
            out_dim: 2,
            distance_source: DistanceSource::Signature,
        }
    }
}

impl TrainConfig {
    /// Hyperparameters for the compact datasets (batch 500, learning rate 1e-3).
    pub fn compact() -> Self {
        Self {
            batch_size: 500,
            learning_rate: 1e-3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ChartError> {
        let bad = |m: &str| Err(ChartError::InvalidConfig(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.out_dim == 0 {
            return bad("out_dim must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean loss of the untrained network on the probe batches.
    pub initial_loss: f64,
    /// Mean loss of the trained network on the same probe batches.
    pub final_loss: f64,
    /// Mean per-step training loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Single-channel `height × width` training inputs stored contiguously.
#[derive(Clone, Copy, Debug)]
pub struct InputMaps<'a> {
    pub data: &'a [f64],
    pub height: usize,
    pub width: usize,
}

impl InputMaps<'_> {
    pub fn len(&self) -> usize {
        self.data.len() / (self.height * self.width).max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn sample(&self, i: usize) -> &[f64] {
        let s = self.height * self.width;
        &self.data[i * s..(i + 1) * s]
    }

    /// First members of all pairs, then all second members.
    fn twin_batch(&self, pairs: &[(usize, usize)]) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * pairs.len() * self.height * self.width);
        pairs.iter().for_each(|&(i, _)| out.extend_from_slice(self.sample(i)));
        pairs.iter().for_each(|&(_, j)| out.extend_from_slice(self.sample(j)));
        out
    }
}

fn sample_pairs(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<(usize, usize)> {
    (0..count).map(|_| (rng.random_range(0..n), rng.random_range(0..n))).collect()
}

fn twin_pairs(count: usize) -> Vec<(usize, usize)> {
    (0..count).map(|k| (k, count + k)).collect()
}

fn batch_loss(
    net: &Network,
    inputs: &InputMaps,
    distances: &PairwiseMatrix,
    pairs: &[(usize, usize)],
    mode: Mode,
) -> Result<(f64, Vec<f64>, super::network::ForwardCache), ChartError> {
    let cache = net.forward(&inputs.twin_batch(pairs), 2 * pairs.len(), mode)?;
    let rho: Vec<f64> = pairs.iter().map(|&(i, j)| distances.get(i, j)).collect();
    let (loss, grad) = siamese_loss(&twin_pairs(pairs.len()), &rho, &cache.output, net.output_dim())?;
    Ok((loss, grad, cache))
}

/// Trains a fresh network so that chart distances reproduce `distances`.
/// Deterministic for a given seed and configuration.
pub fn train_siamese(
    inputs: InputMaps,
    distances: &PairwiseMatrix,
    config: &TrainConfig,
) -> Result<(Network, TrainReport), ChartError> {
    config.validate()?;
    let n = inputs.len();
    if n < 2 {
        return Err(ChartError::Empty);
    }
    if inputs.data.len() != n * inputs.height * inputs.width {
        return Err(ChartError::ShapeMismatch {
            got: inputs.data.len(),
            expected: n * inputs.height * inputs.width,
        });
    }
    if distances.size() != n {
        return Err(ChartError::ShapeMismatch { got: distances.size(), expected: n });
    }
    if distances.max() > 1.0 + 1e-9 {
        return Err(ChartError::InvalidConfig("distance matrix must be normalized to max 1".into()));
    }
    let mut net = Network::build(
        config.architecture,
        inputs.height,
        inputs.width,
        config.out_dim,
        config.seed,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let probe: Vec<Vec<(usize, usize)>> = (0..PROBE_BATCHES)
        .map(|_| sample_pairs(&mut rng, n, config.batch_size))
        .collect();
    let probe_loss = |net: &Network| -> Result<f64, ChartError> {
        let mut total = 0.0;
        for pairs in &probe {
            total += batch_loss(net, &inputs, distances, pairs, Mode::Eval)?.0;
        }
        Ok(total / probe.len() as f64)
    };
    let initial_loss = probe_loss(&net)?;

    rng.set_stream(2);
    let steps = n.div_ceil(config.batch_size);
    let mut adam = Adam::new(config.learning_rate);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut total = 0.0;
        for step in 0..steps {
            let pairs = sample_pairs(&mut rng, n, config.batch_size);
            let (loss, grad, cache) = batch_loss(&net, &inputs, distances, &pairs, Mode::Train)?;
            if !loss.is_finite() {
                return Err(ChartError::NonFiniteLoss { epoch, step, pairs });
            }
            total += loss;
            let grads = net.backward(&cache, &grad);
            adam.step(net.params_mut(), &grads);
            net.update_running_stats(&cache);
            if !net.is_finite() {
                return Err(ChartError::NonFiniteLoss { epoch, step, pairs });
            }
        }
        let mean = total / steps as f64;
        log::debug!("epoch {epoch}: loss {mean:.6}");
        epoch_losses.push(mean);
    }
    let final_loss = probe_loss(&net)?;
    Ok((
        net,
        TrainReport {
            initial_loss,
            final_loss,
            epoch_losses,
        },
    ))
}

/// Inference pass over every sample; batch-norm uses running statistics.
pub fn embed(net: &Network, inputs: InputMaps) -> Result<Chart, ChartError> {
    const CHUNK: usize = 256;
    let size = inputs.height * inputs.width;
    if size != net.input.size() || inputs.data.len() % size != 0 {
        return Err(ChartError::ShapeMismatch { got: size, expected: net.input.size() });
    }
    let parts: Vec<Vec<f64>> = inputs
        .data
        .par_chunks(CHUNK * size)
        .map(|chunk| net.predict(chunk, chunk.len() / size))
        .collect::<Result<_, _>>()?;
    Chart::new(net.output_dim(), parts.concat(), "siamese")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_examples() {
        let (l, g) = siamese_loss(&[(0, 1)], &[1.0], &[0.5, 0.5, 0.5, 0.5], 2).unwrap();
        assert_eq!(l, 1.0);
        assert!(g.iter().all(|&v| v == 0.0));
        let emb = [0.0, 0.0, 3.0, 4.0, 0.0, 1.0];
        let (l, g) = siamese_loss(&[(0, 1), (0, 2), (1, 2)], &[5.0, 1.0, 18f64.sqrt()], &emb, 2).unwrap();
        assert!(l < 1e-12);
        assert!(g.iter().all(|&v| v.abs() < 1e-12));
        assert!(siamese_loss(&[], &[], &emb, 2).is_err());
        assert!(siamese_loss(&[(0, 5)], &[1.0], &emb, 2).is_err());
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let emb: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pairs = vec![(0, 1), (2, 3), (4, 5), (0, 5), (1, 3)];
        let rho: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
        let (_, g) = siamese_loss(&pairs, &rho, &emb, 2).unwrap();
        let h = 1e-6;
        for k in 0..emb.len() {
            let mut e = emb.clone();
            e[k] += h;
            let plus = siamese_loss(&pairs, &rho, &e, 2).unwrap().0;
            e[k] -= 2.0 * h;
            let minus = siamese_loss(&pairs, &rho, &e, 2).unwrap().0;
            let fd = (plus - minus) / (2.0 * h);
            assert!((g[k] - fd).abs() / g[k].abs().max(fd.abs()).max(1e-8) < 1e-5);
        }
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut x = vec![vec![3.0, -2.0]];
        let mut adam = Adam::new(0.05);
        for _ in 0..2000 {
            let g = vec![x[0].iter().map(|v| 2.0 * v).collect::<Vec<_>>()];
            adam.step(x.iter_mut().collect(), &g);
        }
        assert!(x[0].iter().all(|v| v.abs() < 1e-3));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig { batch_size: 0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { learning_rate: -1.0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        assert!(toml_like_roundtrip());
    }

    fn toml_like_roundtrip() -> bool {
        let c = TrainConfig::compact();
        let s = serde_json::to_string(&c).unwrap();
        serde_json::from_str::<TrainConfig>(&s).unwrap() == c
    }
}
