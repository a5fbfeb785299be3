//! Desk-scale synthetic multipath datasets.
//!
//! A rectangular hall holds base stations on a regular grid and UEs along a
//! chosen trajectory. Each BS link sees a line-of-sight path plus single-bounce
//! paths through a fixed set of scatterers owned by that BS. Path delays map
//! to fractional tap positions whose amplitude is split linearly between the
//! two neighbouring taps, so features vary continuously as a UE moves.
//!
//! This is a geometric stand-in for a standardized indoor-factory channel
//! model; it is deterministic per seed and makes no claim of realism.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::GroundTruth;
use crate::featurize::{Cir, CirSample};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid scene configuration: {0}")]
    InvalidConfig(String),
    #[error("UE index {0} out of range")]
    IndexOutOfRange(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trajectory {
    Grid,
    SCurve,
    RandomWalk,
}

/// Placement of the BS grid inside the hall.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BsLayout {
    /// Outer grid lines on the hall walls; corners occupied.
    Edge,
    /// BSs at the centres of equal grid cells.
    Interior,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    /// Hall width and depth in metres.
    pub hall: [f64; 2],
    pub n_bs: usize,
    pub bs_height: f64,
    pub ue_height: f64,
    pub bs_layout: BsLayout,
    pub n_taps: usize,
    pub bandwidth_hz: f64,
    /// Recorded for provenance only; phases are drawn at random.
    pub carrier_hz: f64,
    pub n_scatterers: usize,
    /// LoS-to-scatter power weighting: scattered amplitudes are divided by
    /// `sqrt(rician_k)`.
    pub rician_k: f64,
    pub scatterer_gain: [f64; 2],
    /// Standard deviation of the complex tap noise (total over re and im).
    pub noise_std: f64,
    pub trajectory: Trajectory,
    pub samples: usize,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            hall: [120.0, 60.0],
            n_bs: 18,
            bs_height: 8.0,
            ue_height: 1.5,
            bs_layout: BsLayout::Edge,
            n_taps: 256,
            bandwidth_hz: 100e6,
            carrier_hz: 3.5e9,
            n_scatterers: 4,
            rician_k: 1.0,
            scatterer_gain: [0.3, 1.0],
            noise_std: 0.0,
            trajectory: Trajectory::Grid,
            samples: 8000,
            seed: 0,
        }
    }
}

impl SceneConfig {
    /// Small preset that runs the full pipeline in minutes.
    pub fn desk() -> Self {
        Self {
            n_bs: 8,
            n_taps: 64,
            samples: 1000,
            ..Self::default()
        }
    }

    pub fn tap_spacing(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if !(self.hall[0] > 0.0 && self.hall[1] > 0.0) || !self.hall.iter().all(|v| v.is_finite()) {
            return bad("hall dimensions must be positive");
        }
        if self.n_bs == 0 {
            return bad("n_bs must be positive");
        }
        if self.n_taps == 0 {
            return bad("n_taps must be positive");
        }
        if !(self.bandwidth_hz > 0.0) {
            return bad("bandwidth must be positive");
        }
        if !(self.bs_height >= 0.0 && self.ue_height >= 0.0) {
            return bad("heights must be nonnegative");
        }
        if !(self.rician_k > 0.0) {
            return bad("rician_k must be positive");
        }
        if !(self.noise_std >= 0.0) {
            return bad("noise_std must be nonnegative");
        }
        if !(self.scatterer_gain[0] >= 0.0 && self.scatterer_gain[0] <= self.scatterer_gain[1]) {
            return bad("scatterer_gain must be an increasing nonnegative range");
        }
        if self.samples == 0 {
            return bad("samples must be positive");
        }
        if self.n_bs < 3 {
            log::warn!("fewer than 3 base stations; charts will be poorly constrained");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub bs_positions: Vec<[f64; 3]>,
    pub ue_positions: Vec<[f64; 3]>,
    /// Scatterers per BS: position and amplitude gain.
    pub scatterers: Vec<Vec<([f64; 3], f64)>>,
}

impl Scene {
    /// Horizontal UE coordinates as ground truth.
    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            dim: 2,
            coords: self.ue_positions.iter().flat_map(|p| [p[0], p[1]]).collect(),
        }
    }
}

/// `(cols, rows)` with `cols · rows = n` whose aspect best matches `aspect`.
fn grid_shape(n: usize, aspect: f64) -> (usize, usize) {
    (1..=n)
        .filter(|c| n % c == 0)
        .map(|c| (c, n / c))
        .min_by(|a, b| {
            let err = |&(c, r): &(usize, usize)| ((c as f64 / r as f64) / aspect).ln().abs();
            err(a).total_cmp(&err(b))
        })
        .unwrap_or((n, 1))
}

fn axis_positions(count: usize, length: f64, layout: BsLayout) -> Vec<f64> {
    match (layout, count) {
        (_, 1) => vec![length / 2.0],
        (BsLayout::Edge, _) => (0..count).map(|i| i as f64 * length / (count - 1) as f64).collect(),
        (BsLayout::Interior, _) => (0..count).map(|i| (i as f64 + 0.5) * length / count as f64).collect(),
    }
}

fn ue_grid(samples: usize, hall: [f64; 2]) -> Vec<[f64; 2]> {
    let aspect = hall[0] / hall[1];
    let (mut nx, mut ny) = grid_shape(samples, aspect);
    if ((nx as f64 / ny as f64) / aspect).ln().abs() > 2f64.ln() {
        nx = ((samples as f64 * aspect).sqrt().round() as usize).max(1);
        ny = samples.div_ceil(nx);
    }
    (0..samples)
        .map(|i| {
            let (ix, iy) = (i % nx, i / nx);
            [
                (ix as f64 + 0.5) * hall[0] / nx as f64,
                (iy as f64 + 0.5) * hall[1] / ny as f64,
            ]
        })
        .collect()
}

fn ue_s_curve(samples: usize, hall: [f64; 2], rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let jitter = 0.01 * hall[0].min(hall[1]);
    (0..samples)
        .map(|i| {
            let s = if samples > 1 { i as f64 / (samples - 1) as f64 } else { 0.5 };
            let x = hall[0] * (0.05 + 0.9 * s) + rng.random_range(-jitter..=jitter);
            let y = hall[1] * (0.5 + 0.4 * (2.0 * PI * s).sin()) + rng.random_range(-jitter..=jitter);
            [x.clamp(0.0, hall[0]), y.clamp(0.0, hall[1])]
        })
        .collect()
}

fn reflect(v: f64, hi: f64) -> f64 {
    let mut v = v;
    while v < 0.0 || v > hi {
        v = if v < 0.0 { -v } else { 2.0 * hi - v };
    }
    v
}

fn ue_random_walk(samples: usize, hall: [f64; 2], rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let step = Normal::new(0.0, 0.02 * hall[0].min(hall[1])).expect("positive step");
    let mut pos = [hall[0] / 2.0, hall[1] / 2.0];
    (0..samples)
        .map(|_| {
            let here = pos;
            pos = [
                reflect(pos[0] + step.sample(rng), hall[0]),
                reflect(pos[1] + step.sample(rng), hall[1]),
            ];
            here
        })
        .collect()
}

pub fn generate_scene(config: &SceneConfig) -> Result<Scene, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(0);
    let [w, h] = config.hall;
    let (cols, rows) = grid_shape(config.n_bs, w / h);
    let xs = axis_positions(cols, w, config.bs_layout);
    let ys = axis_positions(rows, h, config.bs_layout);
    let bs_positions: Vec<[f64; 3]> = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| [x, y, config.bs_height]))
        .collect();

    let scatterers = (0..config.n_bs)
        .map(|_| {
            (0..config.n_scatterers)
                .map(|_| {
                    let p = [
                        rng.random_range(0.0..=w),
                        rng.random_range(0.0..=h),
                        rng.random_range(0.0..=config.bs_height.max(config.ue_height)),
                    ];
                    let [lo, hi] = config.scatterer_gain;
                    (p, if hi > lo { rng.random_range(lo..hi) } else { lo })
                })
                .collect()
        })
        .collect();

    let horizontal = match config.trajectory {
        Trajectory::Grid => ue_grid(config.samples, config.hall),
        Trajectory::SCurve => ue_s_curve(config.samples, config.hall, &mut rng),
        Trajectory::RandomWalk => ue_random_walk(config.samples, config.hall, &mut rng),
    };
    let ue_positions = horizontal
        .into_iter()
        .map(|[x, y]| [x, y, config.ue_height])
        .collect();

    Ok(Scene {
        bs_positions,
        ue_positions,
        scatterers,
    })
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Adds a path of the given length; returns false when it falls past the
/// last tap.
fn add_path(taps: &mut [Complex64], path_len: f64, amplitude: f64, phase: f64, spacing: f64) -> bool {
    let pos = path_len / (SPEED_OF_LIGHT * spacing);
    let idx = pos.floor() as usize;
    let frac = pos - idx as f64;
    let h = Complex64::from_polar(amplitude, phase);
    let mut kept = false;
    if idx < taps.len() {
        taps[idx] += h * (1.0 - frac);
        kept = true;
    }
    if frac > 0.0 && idx + 1 < taps.len() {
        taps[idx + 1] += h * frac;
        kept = true;
    }
    kept
}

/// CIRs from every BS to one UE, plus the number of paths that fell beyond
/// the last tap.
pub fn generate_cir_counted(
    scene: &Scene,
    ue_index: usize,
    config: &SceneConfig,
) -> Result<(CirSample, usize), SynthError> {
    let ue = scene
        .ue_positions
        .get(ue_index)
        .ok_or(SynthError::IndexOutOfRange(ue_index))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(ue_index as u64 + 1);
    let spacing = config.tap_spacing();
    let scatter_scale = config.rician_k.sqrt().recip();
    let noise = (config.noise_std > 0.0)
        .then(|| Normal::new(0.0, config.noise_std / 2f64.sqrt()).expect("valid noise"));
    let mut dropped = 0;
    let per_bs = scene
        .bs_positions
        .iter()
        .zip(&scene.scatterers)
        .map(|(bs, scatterers)| {
            let mut taps = vec![Complex64::new(0.0, 0.0); config.n_taps];
            let d = distance(ue, bs);
            if !add_path(&mut taps, d, 1.0 / d.max(1.0), rng.random_range(0.0..2.0 * PI), spacing) {
                dropped += 1;
            }
            for (sc, gain) in scatterers {
                let (d1, d2) = (distance(ue, sc), distance(sc, bs));
                let amp = scatter_scale * gain / (d1.max(1.0) * d2.max(1.0));
                if !add_path(&mut taps, d1 + d2, amp, rng.random_range(0.0..2.0 * PI), spacing) {
                    dropped += 1;
                }
            }
            if let Some(noise) = &noise {
                for t in &mut taps {
                    *t += Complex64::new(noise.sample(&mut rng), noise.sample(&mut rng));
                }
            }
            Cir::new(taps)
        })
        .collect();
    Ok((
        CirSample {
            per_bs,
            sample_id: ue_index as u64,
        },
        dropped,
    ))
}

pub fn generate_cir(
    scene: &Scene,
    ue_index: usize,
    config: &SceneConfig,
) -> Result<CirSample, SynthError> {
    generate_cir_counted(scene, ue_index, config).map(|(s, _)| s)
}

/// A generated dataset: scene, one sample per UE position, ground truth.
#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub scene: Scene,
    pub samples: Vec<CirSample>,
    pub truth: GroundTruth,
    pub dropped_paths: usize,
}

pub fn generate_dataset(config: &SceneConfig) -> Result<SynthDataset, SynthError> {
    let scene = generate_scene(config)?;
    let results: Vec<(CirSample, usize)> = (0..scene.ue_positions.len())
        .into_par_iter()
        .map(|i| generate_cir_counted(&scene, i, config))
        .collect::<Result<_, _>>()?;
    let dropped_paths = results.iter().map(|r| r.1).sum();
    if dropped_paths > 0 {
        log::info!("{dropped_paths} paths fell beyond the last of {} taps", config.n_taps);
    }
    let samples = results.into_iter().map(|r| r.0).collect();
    let truth = scene.ground_truth();
    Ok(SynthDataset {
        scene,
        samples,
        truth,
        dropped_paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(trajectory: Trajectory) -> SceneConfig {
        SceneConfig {
            hall: [10.0, 10.0],
            n_bs: 4,
            n_taps: 32,
            samples: 100,
            trajectory,
            ..SceneConfig::default()
        }
    }

    #[test]
    fn grid_is_lattice() {
        let scene = generate_scene(&small(Trajectory::Grid)).unwrap();
        let xs: std::collections::BTreeSet<u64> =
            scene.ue_positions.iter().map(|p| (p[0] * 1000.0) as u64).collect();
        let ys: std::collections::BTreeSet<u64> =
            scene.ue_positions.iter().map(|p| (p[1] * 1000.0) as u64).collect();
        assert_eq!((xs.len(), ys.len()), (10, 10));
        assert_eq!(scene.ue_positions[0], [0.5, 0.5, 1.5]);
    }

    #[test]
    fn bs_grid_matches_aspect() {
        assert_eq!(grid_shape(18, 2.0), (6, 3));
        assert_eq!(grid_shape(8, 2.0), (4, 2));
        let scene = generate_scene(&SceneConfig::desk()).unwrap();
        assert_eq!(scene.bs_positions.len(), 8);
        assert_eq!(scene.bs_positions[0], [0.0, 0.0, 8.0]);
        assert_eq!(scene.bs_positions[7], [120.0, 60.0, 8.0]);
    }

    #[test]
    fn positions_inside_hall_and_deterministic() {
        for traj in [Trajectory::Grid, Trajectory::SCurve, Trajectory::RandomWalk] {
            let cfg = small(traj);
            let a = generate_scene(&cfg).unwrap();
            let b = generate_scene(&cfg).unwrap();
            assert_eq!(a, b);
            let inside = |p: &[f64; 3]| (0.0..=10.0).contains(&p[0]) && (0.0..=10.0).contains(&p[1]);
            assert!(a.ue_positions.iter().all(inside));
            assert!(a.bs_positions.iter().all(inside));
            assert!(a.scatterers.iter().flatten().all(|(p, _)| inside(p)));
        }
    }

    #[test]
    fn clean_los_occupies_adjacent_taps() {
        let cfg = SceneConfig {
            n_scatterers: 0,
            ..small(Trajectory::Grid)
        };
        let scene = generate_scene(&cfg).unwrap();
        for ue in 0..scene.ue_positions.len() {
            let sample = generate_cir(&scene, ue, &cfg).unwrap();
            for (bs, cir) in sample.per_bs.iter().enumerate() {
                let nz: Vec<usize> = (0..cir.len()).filter(|&i| cir.taps[i].norm() > 0.0).collect();
                assert!(nz.len() == 1 || (nz.len() == 2 && nz[1] == nz[0] + 1));
                let d = distance(&scene.ue_positions[ue], &scene.bs_positions[bs]);
                let pos = d / (SPEED_OF_LIGHT * cfg.tap_spacing());
                assert_eq!(nz[0], pos.floor() as usize);
            }
        }
    }

    #[test]
    fn on_grid_delay_lands_on_rounded_tap() {
        let mut taps = vec![Complex64::new(0.0, 0.0); 16];
        let spacing = 1e-8;
        assert!(add_path(&mut taps, 5.0 * SPEED_OF_LIGHT * spacing, 1.0, 0.0, spacing));
        let nz: Vec<usize> = (0..16).filter(|&i| taps[i].norm() > 1e-12).collect();
        assert_eq!(nz, vec![5]);
        assert!(!add_path(&mut taps, 40.0 * SPEED_OF_LIGHT * spacing, 1.0, 0.0, spacing));
    }

    #[test]
    fn equidistant_ues_share_los_tap() {
        let cfg = SceneConfig {
            n_scatterers: 0,
            ..small(Trajectory::Grid)
        };
        let mut scene = generate_scene(&cfg).unwrap();
        let bs = scene.bs_positions[0];
        scene.ue_positions[0] = [bs[0] + 3.0, bs[1] + 4.0, 1.5];
        scene.ue_positions[1] = [bs[0] + 4.0, bs[1] + 3.0, 1.5];
        let first = |ue| {
            let s = generate_cir(&scene, ue, &cfg).unwrap();
            (0..32).find(|&i| s.per_bs[0].taps[i].norm() > 0.0)
        };
        assert_eq!(first(0), first(1));
    }

    #[test]
    fn samples_are_nondegenerate_and_reproducible() {
        let cfg = SceneConfig {
            noise_std: 1e-3,
            ..small(Trajectory::RandomWalk)
        };
        let a = generate_dataset(&cfg).unwrap();
        let b = generate_dataset(&cfg).unwrap();
        assert_eq!(a.samples, b.samples);
        for s in &a.samples {
            assert!(s.per_bs.iter().all(|c| c.energy() > 0.0 && c.energy().is_finite()));
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = small(Trajectory::Grid);
        cfg.hall = [0.0, 5.0];
        assert!(generate_scene(&cfg).is_err());
        let mut cfg = small(Trajectory::Grid);
        cfg.n_taps = 0;
        assert!(generate_scene(&cfg).is_err());
    }
}
