//! Acceptance suite: one PASS/FAIL/SKIP line per criterion. Runs under a
//! custom harness (`harness = false`) and exits nonzero if any gating
//! criterion fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigchart::charting::{
    embed, siamese_loss, train_siamese, Architecture, InputMaps, Mode, Network, PcaModel, TrainConfig,
};
use sigchart::datastore::{import_csv, CsvLayout, TruthLayout};
use sigchart::distances::{
    cir_euclidean_matrix, cir_magnitude, euclidean_matrix, geodesic_matrix, normalize_matrix,
    normalized_frobenius, s_feature, signature_matrix, svectors, MagnitudeMap, MetricTag, PairwiseMatrix,
};
use sigchart::eval::{continuity_trustworthiness, evaluate, locate_and_score, EvalConfig, GroundTruth};
use sigchart::featurize::{augment, default_times, feature_reduction, Cir, CirSample, FeatureConfig};
use sigchart::sigcore::{chen_concat, log_signature, path_signature, Path, TruncatedSignature};
use sigchart::synthgen::{generate_dataset, SceneConfig, SynthDataset};

const LEVEL: usize = 4;

// Criterion 1 tolerances.
const CHEN_TOL: f64 = 1e-10;
const REFINE_TOL: f64 = 1e-12;
const SHUFFLE_TOL: f64 = 1e-10;
const EXP_LOG_TOL: f64 = 1e-12;
const RANDOM_PATHS: usize = 200;

// Criterion 2.
const EQ_PATHS: usize = 64;
const EQ_RESIDUAL: f64 = 1e-8;

// Criterion 3.
const TRIANGLE_TOL: f64 = 1e-12;
const METRIC_SAMPLES: usize = 100;

// Criterion 4.
const FULL_SHAPE: (usize, usize) = (18, 256);
const UWB_SHAPE: (usize, usize) = (6, 128);
const NR_SHAPE: (usize, usize) = (18, 24);

// Criteria 5 and 6: frozen after the calibration run (measured Pearson 0.9316,
// SPCA CT 0.9861 / TW 0.9611 / MAE 8.10 m on this scene).
const FIDELITY_SAMPLES: usize = 400;
const PEARSON_MIN: f64 = 0.90;
const SPCA_CT_MIN: f64 = 0.85;
const SPCA_TW_MIN: f64 = 0.85;
const SPCA_MAE_FRACTION: f64 = 0.10;

// Criterion 7.
const FD_STEP: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-4;
const FD_ABS_FLOOR: f64 = 1e-6;

// Criterion 8.
const REALIZABLE_POINTS: usize = 400;
const REALIZABLE_SIDE: usize = 4;
const REALIZABLE_SIGMA2: f64 = 0.2;
const LOSS_RATIO_MAX: f64 = 0.05;
const REALIZABLE_CT_TW_MIN: f64 = 0.95;

// Criterion 9.
const AFFINE_ZERO_TOL: f64 = 1e-9;

// Criterion 10. The CIR-euclidean base is the one the geodesic target of
// PSSN uses.
const SENSITIVITY_RATIO_MIN: f64 = 10.0;

// Criterion 11 (non-gating).
const UWB_ENV: &str = "SIGCHART_UWB_DIR";
const UWB_MAE_RANGE: (f64, f64) = (1.0, 2.5);

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;

fn ensure(cond: bool, detail: String) -> Check {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_path(rng: &mut ChaCha8Rng, dim: usize, points: usize) -> Vec<Vec<f64>> {
    (0..points).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn signature(points: &[Vec<f64>], level: usize) -> TruncatedSignature {
    path_signature(&Path::new(points[0].len(), points).unwrap(), level)
}

fn max_sig_diff(a: &TruncatedSignature, b: &TruncatedSignature) -> f64 {
    (1..=a.level())
        .flat_map(|k| a.tensor(k).iter().zip(b.tensor(k)).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

fn signature_algebra() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut chen, mut refine, mut translate, mut shuffle, mut explog) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..RANDOM_PATHS {
        let dim = rng.random_range(2..=3);
        let n = rng.random_range(3..=12);
        let pts = random_path(&mut rng, dim, n);
        let whole = signature(&pts, LEVEL);

        let split = rng.random_range(1..n - 1);
        let joined = chen_concat(&signature(&pts[..=split], LEVEL), &signature(&pts[split..], LEVEL)).unwrap();
        chen = chen.max(max_sig_diff(&whole, &joined));

        let seg = rng.random_range(0..n - 1);
        let lambda: f64 = rng.random_range(0.0..1.0);
        let inserted: Vec<f64> = pts[seg].iter().zip(&pts[seg + 1]).map(|(a, b)| a + lambda * (b - a)).collect();
        let mut refined = pts.clone();
        refined.insert(seg + 1, inserted);
        refine = refine.max(max_sig_diff(&whole, &signature(&refined, LEVEL)));

        // Dyadic offsets keep the increments exact, so equality is exact.
        let offset: Vec<f64> = (0..dim).map(|_| rng.random_range(-8i32..8) as f64 / 4.0).collect();
        let exact_pts: Vec<Vec<f64>> =
            pts.iter().map(|p| p.iter().map(|v| (v * 1024.0).round() / 1024.0).collect()).collect();
        let exact_moved: Vec<Vec<f64>> =
            exact_pts.iter().map(|p| p.iter().zip(&offset).map(|(a, b)| a + b).collect()).collect();
        translate = translate.max(max_sig_diff(&signature(&exact_pts, LEVEL), &signature(&exact_moved, LEVEL)));

        for i in 1..=dim {
            for j in 1..=dim {
                let lhs = whole.coeff(&[i]) * whole.coeff(&[j]);
                let rhs = whole.coeff(&[i, j]) + whole.coeff(&[j, i]);
                shuffle = shuffle.max((lhs - rhs).abs());
            }
        }

        explog = explog.max(max_sig_diff(&whole, &log_signature(&whole).exp()));
    }
    let detail = format!(
        "{RANDOM_PATHS} paths: chen {chen:.1e}, refinement {refine:.1e}, translation {translate:.1e}, shuffle {shuffle:.1e}, exp∘log {explog:.1e}"
    );
    ensure(
        chen < CHEN_TOL && refine < REFINE_TOL && translate == 0.0 && shuffle < SHUFFLE_TOL && explog < EXP_LOG_TOL,
        detail,
    )
}

/// Solves the least-squares problem `min ‖X c − y‖` by normal equations and
/// Gauss-Jordan elimination with partial pivoting.
fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = rows[0].len();
    let mut a = vec![vec![0.0; p + 1]; p];
    for (r, &v) in rows.iter().zip(y) {
        for i in 0..p {
            for j in 0..p {
                a[i][j] += r[i] * r[j];
            }
            a[i][p] += r[i] * v;
        }
    }
    for col in 0..p {
        let piv = (col..p).max_by(|&x, &z| a[x][col].abs().total_cmp(&a[z][col].abs())).unwrap();
        a.swap(col, piv);
        let d = a[col][col];
        for v in a[col].iter_mut() {
            *v /= d;
        }
        for r in 0..p {
            if r != col {
                let f = a[r][col];
                let pivot_row = a[col].clone();
                for (v, pv) in a[r].iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
    }
    a.iter().map(|row| row[p]).collect()
}

fn random_powers_and_times(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let n = rng.random_range(2..=40);
    let mut powers: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0f64).powi(3)).collect();
    let total: f64 = powers.iter().sum();
    powers.iter_mut().for_each(|p| *p /= total);
    let times = if rng.random_bool(0.5) {
        default_times(n)
    } else {
        let mut t = 0.0;
        (0..n)
            .map(|_| {
                t += rng.random_range(0.05..1.0);
                t
            })
            .collect()
    };
    (powers, times)
}

fn s_feature_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut rows = Vec::new();
    let mut ys = Vec::new();
    let mut words = Vec::new();
    for _ in 0..EQ_PATHS {
        let (powers, times) = random_powers_and_times(&mut rng);
        let c: Vec<f64> = powers.iter().scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        }).collect();
        let path = augment(&c, &times).unwrap().to_path();
        let logsig = log_signature(&path_signature(&path, 3));
        words = logsig.basis().to_vec();
        rows.push(logsig.coords().to_vec());
        ys.push(s_feature(&powers, &times).unwrap());
    }
    let coef = least_squares(&rows, &ys);
    let residual = rows
        .iter()
        .zip(&ys)
        .map(|(r, y)| (r.iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>() - y).abs())
        .fold(0.0, f64::max);
    let combo: Vec<String> = words
        .iter()
        .zip(&coef)
        .filter(|(_, c)| c.abs() > 1e-9)
        .map(|(w, c)| format!("{c:+.6}·{w}"))
        .collect();
    ensure(
        residual < EQ_RESIDUAL,
        format!("{EQ_PATHS} paths: s = {} (max residual {residual:.1e})", combo.join(" ")),
    )
}

fn random_sample(rng: &mut ChaCha8Rng, id: u64, n_bs: usize, n_taps: usize) -> CirSample {
    let per_bs = (0..n_bs)
        .map(|_| {
            Cir::new(
                (0..n_taps)
                    .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect(),
            )
        })
        .collect();
    CirSample { per_bs, sample_id: id }
}

fn metric_axioms() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let samples: Vec<CirSample> = (0..METRIC_SAMPLES as u64).map(|i| random_sample(&mut rng, i, 6, 32)).collect();
    let sv = svectors(&samples, &FeatureConfig::default()).unwrap();
    let m = signature_matrix(&sv).unwrap();
    let n = m.size();
    let mut worst = 0.0f64;
    let mut symmetric = true;
    let mut nonneg = true;
    for i in 0..n {
        for j in 0..n {
            symmetric &= m.get(i, j) == m.get(j, i);
            nonneg &= m.get(i, j) >= 0.0;
            for k in 0..n {
                worst = worst.max(m.get(i, j) - m.get(i, k) - m.get(k, j));
            }
        }
    }
    let diag = (0..n).all(|i| m.get(i, i) == 0.0);
    ensure(
        symmetric && nonneg && diag && worst <= TRIANGLE_TOL,
        format!("{n} samples: symmetric {symmetric}, nonnegative {nonneg}, zero diagonal {diag}, max triangle excess {worst:.1e}"),
    )
}

fn compression() -> Check {
    let full = feature_reduction(FULL_SHAPE.0, FULL_SHAPE.1, LEVEL);
    let uwb = feature_reduction(UWB_SHAPE.0, UWB_SHAPE.1, LEVEL);
    let nr = feature_reduction(NR_SHAPE.0, NR_SHAPE.1, LEVEL);
    ensure(
        full > 0.97 && uwb > 0.97 && nr > 0.87,
        format!(
            "InF-DH N={}: {:.2}%, UWB N={}: {:.2}%, 5G N={}: {:.2}%",
            FULL_SHAPE.1,
            100.0 * full,
            UWB_SHAPE.1,
            100.0 * uwb,
            NR_SHAPE.1,
            100.0 * nr
        ),
    )
}

fn fidelity_scene() -> SynthDataset {
    let scene = SceneConfig { samples: FIDELITY_SAMPLES, noise_std: 0.0, ..SceneConfig::desk() };
    generate_dataset(&scene).unwrap()
}

fn pearson_upper(a: &PairwiseMatrix, b: &PairwiseMatrix) -> f64 {
    let n = a.size();
    let pairs: Vec<(f64, f64)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).map(|(i, j)| (a.get(i, j), b.get(i, j))).collect();
    let m = pairs.len() as f64;
    let (ma, mb) = pairs.iter().fold((0.0, 0.0), |s, p| (s.0 + p.0 / m, s.1 + p.1 / m));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for &(x, y) in &pairs {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

fn distance_fidelity(ds: &SynthDataset) -> Check {
    let sv = svectors(&ds.samples, &FeatureConfig::default()).unwrap();
    let rho = signature_matrix(&sv).unwrap();
    let r = pearson_upper(&rho, &ds.truth.distance_matrix().unwrap());
    ensure(r >= PEARSON_MIN, format!("Pearson(ρ, true distance) = {r:.4} (threshold {PEARSON_MIN})"))
}

fn spca_end_to_end(ds: &SynthDataset, scene: &SceneConfig) -> Check {
    let sv = svectors(&ds.samples, &FeatureConfig::default()).unwrap();
    let model = PcaModel::fit(&sv, 2).unwrap();
    let chart = model.transform(&sv).unwrap();
    let r = evaluate(&chart.coords, chart.dim, &ds.truth, &EvalConfig::default()).unwrap();
    let diag = scene.hall[0].hypot(scene.hall[1]);
    let mae_max = SPCA_MAE_FRACTION * diag;
    ensure(
        r.ct >= SPCA_CT_MIN && r.tw >= SPCA_TW_MIN && r.mae_mean <= mae_max,
        format!(
            "CT {:.4}, TW {:.4}, MAE {:.2} ± {:.2} m (limit {mae_max:.2} m), CE90 {:.2} m",
            r.ct, r.tw, r.mae_mean, r.mae_std, r.ce90_mean
        ),
    )
}

fn gradient_check() -> Check {
    let (h, w, pairs) = (4, 3, 3);
    let mut net = Network::build(Architecture::Conv, h, w, 2, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x: Vec<f64> = (0..2 * pairs * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
    let idx: Vec<(usize, usize)> = (0..pairs).map(|p| (p, pairs + p)).collect();
    let rho: Vec<f64> = (0..pairs).map(|_| rng.random_range(0.5..2.0)).collect();
    let batch = 2 * pairs;
    let objective = |n: &Network| {
        let out = n.forward(&x, batch, Mode::Train).unwrap().output;
        siamese_loss(&idx, &rho, &out, 2).unwrap().0
    };

    // Loss gradient with respect to the embeddings.
    let emb: Vec<f64> = (0..2 * batch).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (_, g_emb) = siamese_loss(&idx, &rho, &emb, 2).unwrap();
    let mut worst_loss = 0.0f64;
    for k in 0..emb.len() {
        let mut e = emb.clone();
        e[k] += FD_STEP;
        let plus = siamese_loss(&idx, &rho, &e, 2).unwrap().0;
        e[k] -= 2.0 * FD_STEP;
        let minus = siamese_loss(&idx, &rho, &e, 2).unwrap().0;
        let fd = (plus - minus) / (2.0 * FD_STEP);
        worst_loss = worst_loss.max((g_emb[k] - fd).abs() / g_emb[k].abs().max(fd.abs()).max(FD_ABS_FLOOR));
    }

    // Loss through the network with respect to every parameter.
    let cache = net.forward(&x, batch, Mode::Train).unwrap();
    let (_, g_out) = siamese_loss(&idx, &rho, &cache.output, 2).unwrap();
    let grads = net.backward(&cache, &g_out);
    let mut worst_net = 0.0f64;
    let mut count = 0;
    for p in 0..grads.len() {
        for k in 0..grads[p].len() {
            let orig = net.params()[p][k];
            net.params_mut()[p][k] = orig + FD_STEP;
            let plus = objective(&net);
            net.params_mut()[p][k] = orig - FD_STEP;
            let minus = objective(&net);
            net.params_mut()[p][k] = orig;
            let fd = (plus - minus) / (2.0 * FD_STEP);
            let g = grads[p][k];
            worst_net = worst_net.max((g - fd).abs() / g.abs().max(fd.abs()).max(FD_ABS_FLOOR));
            count += 1;
        }
    }
    ensure(
        worst_loss < FD_REL_TOL && worst_net < FD_REL_TOL,
        format!("loss max rel err {worst_loss:.1e}; network {count} params, max rel err {worst_net:.1e}"),
    )
}

/// Points in the unit square, each encoded as Gaussian bumps centred on a
/// `side × side` grid; the true distances are exactly realizable in 2-D.
fn realizable_instance() -> (GroundTruth, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pts: Vec<f64> = (0..2 * REALIZABLE_POINTS).map(|_| rng.random_range(0.0..1.0)).collect();
    let side = REALIZABLE_SIDE;
    let mut maps = Vec::with_capacity(REALIZABLE_POINTS * side * side);
    for p in pts.chunks(2) {
        for a in 0..side {
            for b in 0..side {
                let c = [(a as f64 + 0.5) / side as f64, (b as f64 + 0.5) / side as f64];
                let d2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
                maps.push((-d2 / REALIZABLE_SIGMA2).exp());
            }
        }
    }
    (GroundTruth::new(2, pts).unwrap(), maps)
}

fn siamese_convergence() -> Check {
    let (truth, maps) = realizable_instance();
    let true_d = truth.distance_matrix().unwrap();
    let target = normalize_matrix(&true_d).unwrap();
    let cfg = TrainConfig { batch_size: 100, learning_rate: 1e-3, ..TrainConfig::default() };
    let inputs = InputMaps { data: &maps, height: REALIZABLE_SIDE, width: REALIZABLE_SIDE };
    let (net, report) = train_siamese(inputs, &target, &cfg).unwrap();
    let ratio = report.final_loss / report.initial_loss;
    let chart = embed(&net, inputs).unwrap();
    let chart_d = euclidean_matrix(&chart.coords, 2, MetricTag::Chart).unwrap();
    let (ct, tw) = continuity_trustworthiness(&true_d, &chart_d, EvalConfig::default().k).unwrap();
    ensure(
        ratio < LOSS_RATIO_MAX && ct > REALIZABLE_CT_TW_MIN && tw > REALIZABLE_CT_TW_MIN,
        format!(
            "{} epochs: loss {:.4} -> {:.4} (ratio {ratio:.4}), CT {ct:.4}, TW {tw:.4}",
            cfg.epochs, report.initial_loss, report.final_loss
        ),
    )
}

fn evaluation_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let coords: Vec<f64> = (0..2 * 400).map(|_| rng.random_range(0.0..100.0)).collect();
    let truth = GroundTruth::new(2, coords.clone()).unwrap();
    let (a, b) = ([1.7, -0.4, 0.9, 2.3], [12.0, -5.0]);
    let chart: Vec<f64> =
        coords.chunks(2).flat_map(|p| [a[0] * p[0] + a[1] * p[1] + b[0], a[2] * p[0] + a[3] * p[1] + b[1]]).collect();
    let cfg = EvalConfig::default();
    let s = locate_and_score(&chart, 2, &truth, cfg.anchors, cfg.trials, cfg.seed).unwrap();
    let worst = s.mae_mean.max(s.mae_std).max(s.ce90_mean).max(s.ce90_std);
    let true_d = truth.distance_matrix().unwrap();
    let (ct, tw) = continuity_trustworthiness(&true_d, &true_d, cfg.k).unwrap();
    ensure(
        worst < AFFINE_ZERO_TOL && ct == 1.0 && tw == 1.0,
        format!(
            "{} trials × {} anchors: MAE {:.1e} ± {:.1e}, CE90 {:.1e} ± {:.1e}; identity CT {ct}, TW {tw}",
            s.trials, s.anchors, s.mae_mean, s.mae_std, s.ce90_mean, s.ce90_std
        ),
    )
}

fn geodesic_sensitivity() -> Check {
    let ds = generate_dataset(&SceneConfig::desk()).unwrap();
    let mags: Vec<MagnitudeMap> = ds.samples.iter().map(cir_magnitude).collect();
    let base = cir_euclidean_matrix(&mags).unwrap();
    let g = |k| normalize_matrix(&geodesic_matrix(&base, k).unwrap()).unwrap();
    let (g5, g15, g20) = (g(5), g(15), g(20));
    let d_small = normalized_frobenius(&g5, &g15).unwrap();
    let d_large = normalized_frobenius(&g15, &g20).unwrap();
    let ratio = d_small / d_large;
    ensure(
        ratio >= SENSITIVITY_RATIO_MIN,
        format!("D={}: ‖G5−G15‖ = {d_small:.4}, ‖G15−G20‖ = {d_large:.4}, ratio {ratio:.1}", ds.samples.len()),
    )
}

#[derive(serde::Deserialize)]
struct UwbLayout {
    cir: CsvLayout,
    truth: TruthLayout,
}

/// External UWB measurements: `$SIGCHART_UWB_DIR` holds `cir.csv`,
/// `truth.csv` and the `layout.toml` descriptor also accepted by
/// `sigchart import`.
fn uwb_dataset() -> Option<Check> {
    let dir = PathBuf::from(std::env::var_os(UWB_ENV)?);
    let run = || -> Result<String, String> {
        let text = std::fs::read_to_string(dir.join("layout.toml")).map_err(|e| e.to_string())?;
        let layout: UwbLayout = toml::from_str(&text).map_err(|e| e.to_string())?;
        let ds = import_csv(&dir.join("cir.csv"), Some((&dir.join("truth.csv"), &layout.truth)), &layout.cir)
            .map_err(|e| e.to_string())?;
        let cfg = FeatureConfig { times: ds.times.clone(), ..FeatureConfig::default() };
        let sv = svectors(&ds.samples, &cfg).map_err(|e| e.to_string())?;
        let chart = PcaModel::fit(&sv, 2).and_then(|m| m.transform(&sv)).map_err(|e| e.to_string())?;
        let truth = ds.truth.ok_or("no truth")?;
        let r = evaluate(&chart.coords, 2, &truth, &EvalConfig::default()).map_err(|e| e.to_string())?;
        let detail = format!("SPCA MAE {:.3} ± {:.3} m on {} samples", r.mae_mean, r.mae_std, r.samples);
        if (UWB_MAE_RANGE.0..=UWB_MAE_RANGE.1).contains(&r.mae_mean) {
            Ok(detail)
        } else {
            Err(detail)
        }
    };
    Some(run())
}

fn timed(budget: Duration, f: impl FnOnce() -> Check) -> Outcome {
    let start = Instant::now();
    let result = f();
    let elapsed = start.elapsed();
    let timing = format!("{:.2} s / {} s", elapsed.as_secs_f64(), budget.as_secs());
    match result {
        Ok(d) if elapsed <= budget => Outcome::Pass(format!("{d} [{timing}]")),
        Ok(d) => Outcome::Fail(format!("{d} [over budget: {timing}]")),
        Err(d) => Outcome::Fail(format!("{d} [{timing}]")),
    }
}

fn main() {
    let secs = Duration::from_secs;
    let fidelity = fidelity_scene();
    let fidelity_cfg = SceneConfig { samples: FIDELITY_SAMPLES, ..SceneConfig::desk() };
    let results: Vec<(u32, &str, Outcome)> = vec![
        (1, "signature algebra", timed(secs(10), signature_algebra)),
        (2, "s-feature oracle", timed(secs(10), s_feature_oracle)),
        (3, "distance axioms", timed(secs(10), metric_axioms)),
        (4, "feature compression", timed(secs(1), compression)),
        (5, "distance fidelity", timed(secs(60), || distance_fidelity(&fidelity))),
        (6, "SPCA end-to-end", timed(secs(60), || spca_end_to_end(&fidelity, &fidelity_cfg))),
        (7, "gradient correctness", timed(secs(30), gradient_check)),
        (8, "Siamese convergence", timed(secs(180), siamese_convergence)),
        (9, "evaluation exactness", timed(secs(10), evaluation_exactness)),
        (10, "geodesic sensitivity", timed(secs(60), geodesic_sensitivity)),
        (
            11,
            "UWB SPCA (non-gating)",
            match uwb_dataset() {
                None => Outcome::Skip(format!("${UWB_ENV} not set")),
                Some(Ok(d)) => Outcome::Pass(d),
                Some(Err(d)) => Outcome::Fail(d),
            },
        ),
    ];
    let mut failed = 0;
    for (id, name, outcome) in &results {
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => ("FAIL", d),
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("criterion {id:>2} {tag} {name}: {detail}");
        if matches!(outcome, Outcome::Fail(_)) && *id != 11 {
            failed += 1;
        }
    }
    println!("acceptance: {} gating criteria, {failed} failed", results.len() - 1);
    if failed > 0 {
        std::process::exit(1);
    }
}
