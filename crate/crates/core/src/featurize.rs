//! Signature-map generation from raw channel impulse responses.
//!
//! Each CIR row goes through energy normalization, the cumulative sum of
//! energy (CSE), time and basepoint augmentation, and finally the
//! log-signature of the resulting 2-D path `(c(t), t)`. Level-1 terms are
//! dropped since `c_N = 1` always and `t_N` is shared by every sample.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sigcore::{log_signature, lyndon_words, path_signature, Path};

/// Floor applied to per-feature standard deviations.
pub const STD_FLOOR: f64 = 1e-12;

/// Default signature truncation level.
pub const DEFAULT_LEVEL: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("degenerate CIR: total energy is zero")]
    DegenerateCir,
    #[error("degenerate CIR at base station {bs} of sample {sample_id}")]
    DegenerateRow { sample_id: u64, bs: usize },
    #[error("time grid must be finite, positive and strictly increasing (index {0})")]
    NonMonotoneTimes(usize),
    #[error("length mismatch: {what} has {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("CSE sequence must be finite and non-decreasing (index {0})")]
    NonMonotoneCse(usize),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("truncation level must be at least 2, got {0}")]
    InvalidLevel(usize),
}

/// One complex channel impulse response.
#[derive(Clone, Debug, PartialEq)]
pub struct Cir {
    pub taps: Vec<Complex64>,
    pub sample_times: Option<Vec<f64>>,
}

impl Cir {
    pub fn new(taps: Vec<Complex64>) -> Self {
        Self {
            taps,
            sample_times: None,
        }
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn powers(&self) -> Vec<f64> {
        self.taps.iter().map(|h| h.norm_sqr()).collect()
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|h| h.norm_sqr()).sum()
    }
}

/// One UE snapshot: a CIR per base station.
#[derive(Clone, Debug, PartialEq)]
pub struct CirSample {
    pub per_bs: Vec<Cir>,
    pub sample_id: u64,
}

impl CirSample {
    pub fn n_bs(&self) -> usize {
        self.per_bs.len()
    }

    pub fn n_taps(&self) -> usize {
        self.per_bs.first().map_or(0, Cir::len)
    }
}

/// Time- and basepoint-augmented CSE path; `points[0]` is `(0, 0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CsePath {
    points: Vec<(f64, f64)>,
}

impl CsePath {
    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn to_path(&self) -> Path {
        let flat = self.points.iter().flat_map(|&(c, t)| [c, t]).collect();
        Path::from_flat(2, flat).expect("CSE paths always hold at least two finite points")
    }
}

pub fn normalize_energy(cir: &Cir) -> Result<Cir, FeatureError> {
    let energy = cir.energy();
    if !(energy > 0.0) || !energy.is_finite() {
        return Err(FeatureError::DegenerateCir);
    }
    let scale = energy.sqrt().recip();
    Ok(Cir {
        taps: cir.taps.iter().map(|h| h * scale).collect(),
        sample_times: cir.sample_times.clone(),
    })
}

/// Cumulative tap powers `c_n = Σ_{k≤n} |h_k|²`.
pub fn cse(cir: &Cir) -> Vec<f64> {
    cir.taps
        .iter()
        .scan(0.0, |acc, h| {
            *acc += h.norm_sqr();
            Some(*acc)
        })
        .collect()
}

/// The uniform grid `t_n = n/N`, `n = 1..=N`.
pub fn default_times(n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64 / n as f64).collect()
}

pub(crate) fn validate_times(times: &[f64]) -> Result<(), FeatureError> {
    let mut prev = 0.0;
    for (i, &t) in times.iter().enumerate() {
        if !t.is_finite() || t <= prev {
            return Err(FeatureError::NonMonotoneTimes(i));
        }
        prev = t;
    }
    Ok(())
}

/// Pairs the CSE values with tap times and prepends the `(0, 0)` basepoint.
pub fn augment(cse: &[f64], times: &[f64]) -> Result<CsePath, FeatureError> {
    if cse.is_empty() {
        return Err(FeatureError::Empty("CSE sequence"));
    }
    if cse.len() != times.len() {
        return Err(FeatureError::LengthMismatch {
            what: "time grid",
            got: times.len(),
            expected: cse.len(),
        });
    }
    validate_times(times)?;
    let mut prev = 0.0;
    for (i, &c) in cse.iter().enumerate() {
        if !c.is_finite() || c < prev {
            return Err(FeatureError::NonMonotoneCse(i));
        }
        prev = c;
    }
    let mut points = Vec::with_capacity(cse.len() + 1);
    points.push((0.0, 0.0));
    points.extend(cse.iter().copied().zip(times.iter().copied()));
    Ok(CsePath { points })
}

/// Number of signature features kept per row: Lyndon words over two letters
/// with lengths `2..=level`.
pub fn feature_count(level: usize) -> usize {
    lyndon_words(2, level).iter().filter(|w| w.len() >= 2).count()
}

/// Log-signature coordinates of word length `2..=level`, in basis order.
pub fn signature_features(path: &CsePath, level: usize) -> Vec<f64> {
    let sig = path_signature(&path.to_path(), level);
    log_signature(&sig).coords_with_lengths(2..=level)
}

/// Fraction of raw real values removed when a `n_bs × 2·n_taps` CIR matrix is
/// replaced by an `n_bs × L` signature map.
pub fn feature_reduction(n_bs: usize, n_taps: usize, level: usize) -> f64 {
    let raw = (n_bs * 2 * n_taps) as f64;
    let kept = (n_bs * feature_count(level)) as f64;
    1.0 - kept / raw
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub level: usize,
    /// Tap times overriding both the per-CIR times and the `n/N` default.
    pub times: Option<Vec<f64>>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            level: DEFAULT_LEVEL,
            times: None,
        }
    }
}

impl FeatureConfig {
    /// Time grid for a CIR row, by precedence: config, CIR, `n/N`.
    pub fn times_for(&self, cir: &Cir) -> Vec<f64> {
        self.times
            .clone()
            .or_else(|| cir.sample_times.clone())
            .unwrap_or_else(|| default_times(cir.len()))
    }
}

/// `n_bs × L` matrix of signature features, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SignatureMap {
    pub n_bs: usize,
    pub n_features: usize,
    pub values: Vec<f64>,
    pub sample_id: u64,
}

impl SignatureMap {
    pub fn row(&self, bs: usize) -> &[f64] {
        &self.values[bs * self.n_features..(bs + 1) * self.n_features]
    }
}

fn featurize_row(cir: &Cir, config: &FeatureConfig) -> Result<Vec<f64>, FeatureError> {
    let normalized = normalize_energy(cir)?;
    let times = config.times_for(cir);
    let path = augment(&cse(&normalized), &times)?;
    Ok(signature_features(&path, config.level))
}

pub fn build_signature_map(
    sample: &CirSample,
    config: &FeatureConfig,
) -> Result<SignatureMap, FeatureError> {
    if config.level < 2 {
        return Err(FeatureError::InvalidLevel(config.level));
    }
    if sample.per_bs.is_empty() {
        return Err(FeatureError::Empty("sample without base stations"));
    }
    let n_features = feature_count(config.level);
    let mut values = Vec::with_capacity(sample.n_bs() * n_features);
    for (bs, cir) in sample.per_bs.iter().enumerate() {
        let row = featurize_row(cir, config).map_err(|e| match e {
            FeatureError::DegenerateCir => FeatureError::DegenerateRow {
                sample_id: sample.sample_id,
                bs,
            },
            other => other,
        })?;
        values.extend(row);
    }
    Ok(SignatureMap {
        n_bs: sample.n_bs(),
        n_features,
        values,
        sample_id: sample.sample_id,
    })
}

/// Signature maps of many samples, computed in parallel.
pub fn build_signature_maps(
    samples: &[CirSample],
    config: &FeatureConfig,
) -> Result<Vec<SignatureMap>, FeatureError> {
    samples
        .par_iter()
        .map(|s| build_signature_map(s, config))
        .collect()
}

/// Neumaier-compensated sum; order-robust to within a few ulps.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Per-`(bs, feature)` z-score statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub n_bs: usize,
    pub n_features: usize,
    pub mean: Vec<f64>,
    /// Population standard deviation, clamped below at [`STD_FLOOR`].
    pub std: Vec<f64>,
}

pub fn fit_normalization(maps: &[SignatureMap]) -> Result<NormalizationStats, FeatureError> {
    let first = maps.first().ok_or(FeatureError::Empty("normalization dataset"))?;
    let width = first.values.len();
    if let Some(bad) = maps.iter().find(|m| m.values.len() != width) {
        return Err(FeatureError::LengthMismatch {
            what: "signature map",
            got: bad.values.len(),
            expected: width,
        });
    }
    let n = maps.len() as f64;
    let mut mean = Vec::with_capacity(width);
    let mut std = Vec::with_capacity(width);
    for col in 0..width {
        let mu = compensated_sum(maps.iter().map(|m| m.values[col])) / n;
        let var = compensated_sum(maps.iter().map(|m| {
            let d = m.values[col] - mu;
            d * d
        })) / n;
        mean.push(mu);
        std.push(var.sqrt().max(STD_FLOOR));
    }
    Ok(NormalizationStats {
        n_bs: first.n_bs,
        n_features: first.n_features,
        mean,
        std,
    })
}

pub fn apply_normalization(
    map: &SignatureMap,
    stats: &NormalizationStats,
) -> Result<SignatureMap, FeatureError> {
    if map.values.len() != stats.mean.len() {
        return Err(FeatureError::LengthMismatch {
            what: "signature map",
            got: map.values.len(),
            expected: stats.mean.len(),
        });
    }
    let values = map
        .values
        .iter()
        .zip(stats.mean.iter().zip(&stats.std))
        .map(|(&x, (&mu, &sd))| {
            // A clamped column carries no information; rounding in the mean
            // must not be amplified by the floor.
            if sd <= STD_FLOOR {
                0.0
            } else {
                (x - mu) / sd
            }
        })
        .collect();
    Ok(SignatureMap {
        values,
        ..map.clone()
    })
}
