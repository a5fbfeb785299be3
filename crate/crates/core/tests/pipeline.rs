use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigchart::charting::{embed, train_siamese, Architecture, InputMaps, TrainConfig};
use sigchart::datastore::{decode_chart, encode_chart};
use sigchart::distances::{normalize_matrix, PairwiseMatrix};
use sigchart::eval::{evaluate, EvalConfig, GroundTruth};
use sigchart::featurize::cse;
use sigchart::synthgen::{generate_cir, generate_dataset, generate_scene, SceneConfig, Trajectory, SPEED_OF_LIGHT};

#[test]
fn first_energy_jump_tracks_distance() {
    let cfg = SceneConfig { samples: 60, trajectory: Trajectory::RandomWalk, ..SceneConfig::desk() };
    let scene = generate_scene(&cfg).unwrap();
    let tap_m = SPEED_OF_LIGHT * cfg.tap_spacing();
    for ue in 0..scene.ue_positions.len() {
        let sample = generate_cir(&scene, ue, &cfg).unwrap();
        for (bs, cir) in sample.per_bs.iter().enumerate() {
            let first = cse(cir).iter().position(|&c| c > 0.0).unwrap();
            let (u, b) = (scene.ue_positions[ue], scene.bs_positions[bs]);
            let d = ((u[0] - b[0]).powi(2) + (u[1] - b[1]).powi(2) + (u[2] - b[2]).powi(2)).sqrt();
            assert!((first as f64 - d / tap_m).abs() <= 1.0, "ue {ue} bs {bs}: tap {first}, distance {d}");
        }
    }
}

#[test]
fn dataset_is_deterministic_and_nondegenerate() {
    let cfg = SceneConfig { samples: 50, noise_std: 0.01, ..SceneConfig::desk() };
    let a = generate_dataset(&cfg).unwrap();
    let b = generate_dataset(&cfg).unwrap();
    assert_eq!(a.samples, b.samples);
    for s in &a.samples {
        for cir in &s.per_bs {
            let e = cir.energy();
            assert!(e.is_finite() && e > 0.0);
        }
    }
}

fn blob_inputs(points: &[f64], side: usize) -> Vec<f64> {
    let mut maps = Vec::new();
    for p in points.chunks(2) {
        for a in 0..side {
            for b in 0..side {
                let c = [(a as f64 + 0.5) / side as f64, (b as f64 + 0.5) / side as f64];
                maps.push((-((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)) / 0.2).exp());
            }
        }
    }
    maps
}

fn small_problem(n: usize) -> (Vec<f64>, PairwiseMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pts: Vec<f64> = (0..2 * n).map(|_| rng.random_range(0.0..1.0)).collect();
    let truth = GroundTruth::new(2, pts.clone()).unwrap();
    (pts, normalize_matrix(&truth.distance_matrix().unwrap()).unwrap())
}

#[test]
fn training_is_reproducible() {
    let (pts, target) = small_problem(120);
    let maps = blob_inputs(&pts, 3);
    let inputs = InputMaps { data: &maps, height: 3, width: 3 };
    let cfg = TrainConfig { epochs: 10, batch_size: 40, learning_rate: 1e-3, ..TrainConfig::default() };
    let (net_a, a) = train_siamese(inputs, &target, &cfg).unwrap();
    let (net_b, b) = train_siamese(inputs, &target, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(net_a.params(), net_b.params());
    assert!(a.final_loss < a.initial_loss);
}

// Fails at lr 1e-3: on the loss plateau (epochs 25 to 40) Adam oscillates and
// the 10-epoch mean rises by about 2%. Run with `--ignored` to reproduce.
#[test]
#[ignore = "known finding: moving average rises on the plateau"]
fn realizable_loss_moving_average_never_rises() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pts: Vec<f64> = (0..800).map(|_| rng.random_range(0.0..1.0)).collect();
    let truth = GroundTruth::new(2, pts.clone()).unwrap();
    let target = normalize_matrix(&truth.distance_matrix().unwrap()).unwrap();
    let maps = blob_inputs(&pts, 4);
    let inputs = InputMaps { data: &maps, height: 4, width: 4 };
    let cfg = TrainConfig { batch_size: 100, learning_rate: 1e-3, ..TrainConfig::default() };
    let (_, report) = train_siamese(inputs, &target, &cfg).unwrap();
    let window = 10;
    let averages: Vec<f64> =
        report.epoch_losses.windows(window).map(|w| w.iter().sum::<f64>() / window as f64).collect();
    for pair in averages.windows(2) {
        assert!(pair[1] <= pair[0], "moving average rose: {pair:?}");
    }
}

#[test]
fn identical_inputs_embed_together() {
    let (mut pts, _) = small_problem(60);
    pts[2] = pts[0];
    pts[3] = pts[1];
    let truth = GroundTruth::new(2, pts.clone()).unwrap();
    let target = normalize_matrix(&truth.distance_matrix().unwrap()).unwrap();
    let maps = blob_inputs(&pts, 3);
    let inputs = InputMaps { data: &maps, height: 3, width: 3 };
    let cfg = TrainConfig {
        epochs: 5,
        batch_size: 30,
        learning_rate: 1e-3,
        architecture: Architecture::Dense,
        ..TrainConfig::default()
    };
    let (net, _) = train_siamese(inputs, &target, &cfg).unwrap();
    let chart = embed(&net, inputs).unwrap();
    let gap = chart.point(0).iter().zip(chart.point(1)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap < 1e-3);
}

#[test]
fn saved_chart_scores_like_the_original() {
    let cfg = SceneConfig { samples: 200, ..SceneConfig::desk() };
    let ds = generate_dataset(&cfg).unwrap();
    let (pts, target) = (ds.truth.coords.clone(), ds.truth.distance_matrix().unwrap());
    let scaled: Vec<f64> = pts.iter().map(|v| v / 120.0).collect();
    let maps = blob_inputs(&scaled, 3);
    let inputs = InputMaps { data: &maps, height: 3, width: 3 };
    let train = TrainConfig { epochs: 2, batch_size: 50, ..TrainConfig::default() };
    let (net, _) = train_siamese(inputs, &normalize_matrix(&target).unwrap(), &train).unwrap();
    let chart = embed(&net, inputs).unwrap();
    let back = decode_chart(&encode_chart(&chart)).unwrap();
    let eval = EvalConfig { k: 10, trials: 20, ..EvalConfig::default() };
    assert_eq!(
        evaluate(&chart.coords, 2, &ds.truth, &eval).unwrap(),
        evaluate(&back.coords, 2, &ds.truth, &eval).unwrap()
    );
}
