//! Chart quality: rank-based trustworthiness and continuity, and
//! affine-aligned localization error (MAE and CE90) over repeated random
//! anchor draws.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distances::{euclidean_matrix, DistanceError, MetricTag, PairwiseMatrix};

pub const DEFAULT_NEIGHBORHOOD: usize = 50;
pub const DEFAULT_ANCHORS: usize = 100;
pub const DEFAULT_TRIALS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("neighbourhood size {k} invalid for {size} points (need 1 <= k < (2D-1)/3)")]
    InvalidK { k: usize, size: usize },
    #[error("size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("need more samples ({samples}) than anchors ({anchors})")]
    TooFewSamples { samples: usize, anchors: usize },
    #[error("anchor set is rank deficient")]
    DegenerateAnchors,
    #[error("exceeded {0} anchor redraws")]
    TooManyRedraws(usize),
    #[error("points must have positive dimension and finite coordinates")]
    InvalidPoints,
    #[error(transparent)]
    Distance(#[from] DistanceError),
}

/// True UE coordinates, row-major `len × dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub dim: usize,
    pub coords: Vec<f64>,
}

impl GroundTruth {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self, EvalError> {
        if dim == 0 || coords.len() % dim != 0 || coords.iter().any(|v| !v.is_finite()) {
            return Err(EvalError::InvalidPoints);
        }
        Ok(Self { dim, coords })
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn subset(&self, indices: &[usize]) -> GroundTruth {
        GroundTruth {
            dim: self.dim,
            coords: indices.iter().flat_map(|&i| self.point(i).to_vec()).collect(),
        }
    }

    pub fn distance_matrix(&self) -> Result<PairwiseMatrix, EvalError> {
        Ok(euclidean_matrix(&self.coords, self.dim, MetricTag::TrueLocation)?)
    }
}

/// `rank[i][j]`: 1-based position of `j` among `i`'s neighbours sorted by
/// ascending distance (ties by smaller index); the diagonal is 0.
#[derive(Clone, Debug, PartialEq)]
pub struct RankMatrix {
    size: usize,
    ranks: Vec<u32>,
}

impl RankMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.ranks[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.ranks[i * self.size..(i + 1) * self.size]
    }
}

pub fn rank_matrix(distances: &PairwiseMatrix) -> RankMatrix {
    let n = distances.size();
    let rows: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let d = distances.row(i);
            let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
            let mut ranks = vec![0u32; n];
            for (pos, j) in order.into_iter().enumerate() {
                ranks[j] = pos as u32 + 1;
            }
            ranks
        })
        .collect();
    RankMatrix {
        size: n,
        ranks: rows.concat(),
    }
}

fn check_k(size: usize, k: usize) -> Result<(), EvalError> {
    // The normalizer D·k·(2D − 3k − 1) must be positive.
    if k == 0 || 3 * k + 1 >= 2 * size {
        return Err(EvalError::InvalidK { k, size });
    }
    Ok(())
}

/// `1 − 2/(D k (2D−3k−1)) Σ_i Σ_{j ∈ N_k^other(i) \ N_k^ref(i)} (r_ref(i,j) − k)`
fn rank_penalty_score(reference: &RankMatrix, other: &RankMatrix, k: usize) -> f64 {
    let n = reference.size;
    let kk = k as u32;
    let total: u64 = (0..n)
        .into_par_iter()
        .map(|i| {
            reference
                .row(i)
                .iter()
                .zip(other.row(i))
                .enumerate()
                .filter(|&(j, (&r_ref, &r_other))| {
                    j != i && r_other <= kk && r_ref > kk
                })
                .map(|(_, (&r_ref, _))| (r_ref - kk) as u64)
                .sum::<u64>()
        })
        .sum();
    let norm = 2.0 / (n as f64 * k as f64 * (2.0 * n as f64 - 3.0 * k as f64 - 1.0));
    1.0 - norm * total as f64
}

fn check_pair(true_d: &PairwiseMatrix, chart_d: &PairwiseMatrix, k: usize) -> Result<(), EvalError> {
    if true_d.size() != chart_d.size() {
        return Err(EvalError::SizeMismatch(true_d.size(), chart_d.size()));
    }
    check_k(true_d.size(), k)
}

/// Penalizes points that are chart neighbours but not true neighbours.
pub fn trustworthiness(
    true_d: &PairwiseMatrix,
    chart_d: &PairwiseMatrix,
    k: usize,
) -> Result<f64, EvalError> {
    check_pair(true_d, chart_d, k)?;
    Ok(rank_penalty_score(&rank_matrix(true_d), &rank_matrix(chart_d), k))
}

/// Penalizes true neighbours that the chart places far away.
pub fn continuity(
    true_d: &PairwiseMatrix,
    chart_d: &PairwiseMatrix,
    k: usize,
) -> Result<f64, EvalError> {
    check_pair(true_d, chart_d, k)?;
    Ok(rank_penalty_score(&rank_matrix(chart_d), &rank_matrix(true_d), k))
}

/// Both metrics from a single pair of rank computations: `(ct, tw)`.
pub fn continuity_trustworthiness(
    true_d: &PairwiseMatrix,
    chart_d: &PairwiseMatrix,
    k: usize,
) -> Result<(f64, f64), EvalError> {
    check_pair(true_d, chart_d, k)?;
    let rt = rank_matrix(true_d);
    let rc = rank_matrix(chart_d);
    Ok((rank_penalty_score(&rc, &rt, k), rank_penalty_score(&rt, &rc, k)))
}

/// `y ≈ A x + b` with `A` stored row-major `out_dim × in_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    pub in_dim: usize,
    pub out_dim: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl AffineMap {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.out_dim)
            .map(|r| {
                self.b[r]
                    + self.a[r * self.in_dim..(r + 1) * self.in_dim]
                        .iter()
                        .zip(x)
                        .map(|(a, x)| a * x)
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn apply_all(&self, coords: &[f64]) -> Vec<f64> {
        coords
            .chunks_exact(self.in_dim)
            .flat_map(|x| self.apply(x))
            .collect()
    }
}

/// Solves `M X = R` in place by Gaussian elimination with partial pivoting;
/// `m` is `n × n`, `rhs` is `n × q`, both row-major.
fn solve_pivoted(m: &mut [f64], rhs: &mut [f64], n: usize, q: usize) -> Result<(), EvalError> {
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if !(scale > 0.0) {
        return Err(EvalError::DegenerateAnchors);
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a * n + col].abs().total_cmp(&m[b * n + col].abs()))
            .unwrap_or(col);
        if m[pivot * n + col].abs() <= 1e-12 * scale {
            return Err(EvalError::DegenerateAnchors);
        }
        if pivot != col {
            for c in 0..n {
                m.swap(col * n + c, pivot * n + c);
            }
            for c in 0..q {
                rhs.swap(col * q + c, pivot * q + c);
            }
        }
        let p = m[col * n + col];
        for r in (col + 1)..n {
            let f = m[r * n + col] / p;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                m[r * n + c] -= f * m[col * n + c];
            }
            for c in 0..q {
                rhs[r * q + c] -= f * rhs[col * q + c];
            }
        }
    }
    for col in (0..n).rev() {
        let p = m[col * n + col];
        for c in 0..q {
            let mut v = rhs[col * q + c];
            for k in (col + 1)..n {
                v -= m[col * n + k] * rhs[k * q + c];
            }
            rhs[col * q + c] = v / p;
        }
    }
    Ok(())
}

/// Least-squares affine map from chart rows to truth rows through the
/// homogeneous normal equations.
pub fn affine_fit(
    chart: &[f64],
    chart_dim: usize,
    truth: &[f64],
    truth_dim: usize,
) -> Result<AffineMap, EvalError> {
    if chart_dim == 0 || truth_dim == 0 {
        return Err(EvalError::InvalidPoints);
    }
    let n = chart.len() / chart_dim;
    if truth.len() / truth_dim != n {
        return Err(EvalError::SizeMismatch(n, truth.len() / truth_dim));
    }
    let p = chart_dim + 1;
    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p * truth_dim];
    let mut x = vec![1.0; p];
    for (row, y) in chart.chunks_exact(chart_dim).zip(truth.chunks_exact(truth_dim)) {
        x[..chart_dim].copy_from_slice(row);
        for r in 0..p {
            for c in 0..p {
                gram[r * p + c] += x[r] * x[c];
            }
            for c in 0..truth_dim {
                rhs[r * truth_dim + c] += x[r] * y[c];
            }
        }
    }
    solve_pivoted(&mut gram, &mut rhs, p, truth_dim)?;
    // rhs now holds W (p × q): y = [x, 1] W.
    let mut a = vec![0.0; truth_dim * chart_dim];
    let mut b = vec![0.0; truth_dim];
    for out in 0..truth_dim {
        for inp in 0..chart_dim {
            a[out * chart_dim + inp] = rhs[inp * truth_dim + out];
        }
        b[out] = rhs[chart_dim * truth_dim + out];
    }
    Ok(AffineMap {
        in_dim: chart_dim,
        out_dim: truth_dim,
        a,
        b,
    })
}

/// Linear-interpolated percentile (`q` in `[0, 1]`) of unsorted data.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and (population) standard deviation of MAE and CE90 over trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationScores {
    pub mae_mean: f64,
    pub mae_std: f64,
    pub ce90_mean: f64,
    pub ce90_std: f64,
    pub trials: usize,
    pub anchors: usize,
    pub redraws: usize,
}

/// Per-sample errors after aligning with an affine map fit on `anchors`.
pub fn aligned_errors(
    chart: &[f64],
    chart_dim: usize,
    truth: &GroundTruth,
    anchors: &[usize],
) -> Result<Vec<f64>, EvalError> {
    let ca: Vec<f64> = anchors
        .iter()
        .flat_map(|&i| chart[i * chart_dim..(i + 1) * chart_dim].to_vec())
        .collect();
    let ta: Vec<f64> = anchors.iter().flat_map(|&i| truth.point(i).to_vec()).collect();
    let map = affine_fit(&ca, chart_dim, &ta, truth.dim)?;
    Ok(chart
        .chunks_exact(chart_dim)
        .enumerate()
        .map(|(i, x)| {
            map.apply(x)
                .iter()
                .zip(truth.point(i))
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

pub fn locate_and_score(
    chart: &[f64],
    chart_dim: usize,
    truth: &GroundTruth,
    anchors: usize,
    trials: usize,
    seed: u64,
) -> Result<LocalizationScores, EvalError> {
    let n = truth.len();
    if chart_dim == 0 || chart.len() != n * chart_dim {
        return Err(EvalError::SizeMismatch(chart.len() / chart_dim.max(1), n));
    }
    if n <= anchors {
        return Err(EvalError::TooFewSamples {
            samples: n,
            anchors,
        });
    }
    let cap = 10 * trials;
    let outcomes: Vec<Result<(f64, f64, usize), EvalError>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64);
            let mut redraws = 0;
            loop {
                let picked = sample(&mut rng, n, anchors).into_vec();
                match aligned_errors(chart, chart_dim, truth, &picked) {
                    Ok(errors) => {
                        let mae = errors.iter().sum::<f64>() / errors.len() as f64;
                        return Ok((mae, percentile(&errors, 0.9), redraws));
                    }
                    Err(EvalError::DegenerateAnchors) if redraws < cap => redraws += 1,
                    Err(EvalError::DegenerateAnchors) => return Err(EvalError::TooManyRedraws(cap)),
                    Err(e) => return Err(e),
                }
            }
        })
        .collect();
    let mut maes = Vec::with_capacity(trials);
    let mut ce90s = Vec::with_capacity(trials);
    let mut redraws = 0;
    for outcome in outcomes {
        let (mae, ce90, r) = outcome?;
        maes.push(mae);
        ce90s.push(ce90);
        redraws += r;
    }
    if redraws > cap {
        return Err(EvalError::TooManyRedraws(cap));
    }
    let (mae_mean, mae_std) = mean_std(&maes);
    let (ce90_mean, ce90_std) = mean_std(&ce90s);
    Ok(LocalizationScores {
        mae_mean,
        mae_std,
        ce90_mean,
        ce90_std,
        trials,
        anchors,
        redraws,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub k: usize,
    pub anchors: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_NEIGHBORHOOD,
            anchors: DEFAULT_ANCHORS,
            trials: DEFAULT_TRIALS,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub split: String,
    pub samples: usize,
    pub ct: f64,
    pub tw: f64,
    pub mae_mean: f64,
    pub mae_std: f64,
    pub ce90_mean: f64,
    pub ce90_std: f64,
    pub k: usize,
    pub anchors: usize,
    pub trials: usize,
    pub seed: u64,
    pub chart_hash: String,
}

/// Seeded random split of `0..n`; `fraction` of the samples (rounded) go to
/// the first set. Both sets are returned in ascending order.
pub fn train_test_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64 * fraction.clamp(0.0, 1.0)).round() as usize).min(n);
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Full report for one chart against its ground truth.
pub fn evaluate(
    chart: &[f64],
    chart_dim: usize,
    truth: &GroundTruth,
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    let true_d = truth.distance_matrix()?;
    let chart_d = euclidean_matrix(chart, chart_dim, MetricTag::Chart)?;
    let (ct, tw) = continuity_trustworthiness(&true_d, &chart_d, config.k)?;
    let loc = locate_and_score(chart, chart_dim, truth, config.anchors, config.trials, config.seed)?;
    Ok(EvalReport {
        method: String::new(),
        split: String::new(),
        samples: truth.len(),
        ct,
        tw,
        mae_mean: loc.mae_mean,
        mae_std: loc.mae_std,
        ce90_mean: loc.ce90_mean,
        ce90_std: loc.ce90_std,
        k: config.k,
        anchors: config.anchors,
        trials: config.trials,
        seed: config.seed,
        chart_hash: String::new(),
    })
}
