use std::fs;

use sigchart::charting::{Architecture, Chart, FeatureLayout, Network, PcaModel};
use sigchart::datastore::*;
use sigchart::distances::{euclidean_matrix, MetricTag};
use sigchart::eval::{EvalReport, GroundTruth};
use sigchart::featurize::{build_signature_map, fit_normalization, FeatureConfig};
use sigchart::synthgen::{generate_dataset, SceneConfig};
use tempfile::tempdir;

fn small_dataset() -> CirDataset {
    let cfg = SceneConfig {
        hall: [20.0, 10.0],
        n_bs: 4,
        n_taps: 16,
        samples: 10,
        noise_std: 1e-3,
        ..SceneConfig::default()
    };
    let synth = generate_dataset(&cfg).unwrap();
    CirDataset {
        samples: synth.samples,
        truth: Some(synth.truth),
        times: Some((1..=16).map(|n| n as f64 / 16.0).collect()),
        config_hash: config_hash(&cfg),
    }
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn dataset_round_trip_is_bit_exact() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("ds.sgch");
    let ds = small_dataset();
    save_dataset(&path, &ds).unwrap();
    let back = load_dataset(&path).unwrap();
    assert_eq!(back, ds);
    for (a, b) in back.samples.iter().zip(&ds.samples) {
        for (ca, cb) in a.per_bs.iter().zip(&b.per_bs) {
            for (x, y) in ca.taps.iter().zip(&cb.taps) {
                assert_eq!((x.re.to_bits(), x.im.to_bits()), (y.re.to_bits(), y.im.to_bits()));
            }
        }
    }
    // Writing again yields identical bytes.
    assert_eq!(encode_dataset(&back).unwrap(), fs::read(&path).unwrap());
}

#[test]
fn corrupted_magic_is_rejected() {
    let mut bytes = encode_dataset(&small_dataset()).unwrap();
    bytes[0] = b'X';
    let err = decode_dataset(&bytes).unwrap_err();
    assert!(matches!(err, DataError::BadMagic { .. }));
    assert!(err.to_string().contains("bad magic"));
}

#[test]
fn version_bump_is_rejected() {
    let mut bytes = encode_dataset(&small_dataset()).unwrap();
    bytes[4] = 2;
    assert!(matches!(decode_dataset(&bytes), Err(DataError::UnsupportedVersion { found: 2, .. })));
    let chart = Chart::new(2, vec![0.0; 4], "x").unwrap();
    let mut bytes = encode_chart(&chart);
    bytes[4] = 9;
    assert!(matches!(decode_chart(&bytes), Err(DataError::UnsupportedVersion { .. })));
}

#[test]
fn short_payload_reports_offset() {
    let mut ds = small_dataset();
    ds.truth = None;
    ds.times = None;
    let bytes = encode_dataset(&ds).unwrap();
    // The header promises 10 samples; keep only 9 samples' worth of taps.
    let hash_len = ds.config_hash.len();
    let payload_start = 40 + 4 + hash_len;
    let per_sample = 4 * 16 * 2 * 8;
    let cut = &bytes[..payload_start + 9 * per_sample];
    match decode_dataset(cut) {
        Err(DataError::Truncated { offset, .. }) => assert_eq!(offset, payload_start),
        other => panic!("expected truncation, got {other:?}"),
    }
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(decode_dataset(&extra), Err(DataError::CountMismatch { .. })));
}

#[test]
fn huge_header_counts_do_not_allocate() {
    let mut bytes = encode_dataset(&small_dataset()).unwrap();
    bytes[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
    assert!(decode_dataset(&bytes).is_err());
}

#[test]
fn feature_set_round_trip() {
    let ds = small_dataset();
    let cfg = FeatureConfig::default();
    let maps: Vec<_> = ds.samples.iter().map(|s| build_signature_map(s, &cfg).unwrap()).collect();
    let stats = fit_normalization(&maps).unwrap();
    let svectors = ds
        .samples
        .iter()
        .map(|s| sigchart::distances::svector(s, &cfg).unwrap())
        .collect();
    let fs_ = FeatureSet {
        level: 4,
        maps,
        svectors: Some(svectors),
        normalization: Some(stats),
        config_hash: "abc".into(),
        dataset_hash: "def".into(),
    };
    let back = decode_features(&encode_features(&fs_).unwrap()).unwrap();
    assert_eq!(back, fs_);
}

#[test]
fn matrix_chart_pca_network_round_trips() {
    let dir = tempdir().unwrap();
    let coords: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).sin()).collect();
    let m = euclidean_matrix(&coords, 2, MetricTag::TrueLocation).unwrap();
    let p = dir.path().join("m.sgmx");
    save_matrix(&p, &m, "h1").unwrap();
    let (back, hash) = load_matrix(&p).unwrap();
    assert_eq!(bits(back.data()), bits(m.data()));
    assert_eq!((back.metric(), hash.as_str()), (MetricTag::TrueLocation, "h1"));

    let mut chart = Chart::new(2, coords.clone(), "spca").unwrap();
    chart.provenance.config_hash = "h2".into();
    let p = dir.path().join("c.sgcr");
    save_chart(&p, &chart).unwrap();
    assert_eq!(load_chart(&p).unwrap(), chart);
    export_chart_csv(&dir.path().join("c.csv"), &chart).unwrap();
    let text = fs::read_to_string(dir.path().join("c.csv")).unwrap();
    assert_eq!(text.lines().count(), 11);

    let model = PcaModel::fit_rows(&coords, 2, 2, FeatureLayout::Svector).unwrap();
    let p = dir.path().join("p.sgpc");
    save_pca(&p, &model, "h3").unwrap();
    assert_eq!(load_pca(&p).unwrap(), (model, "h3".to_string()));

    for arch in [Architecture::Conv, Architecture::Dense] {
        let file = NetworkFile {
            network: Network::build(arch, 4, 6, 2, 1).unwrap(),
            normalization: None,
            config_hash: "h4".into(),
        };
        let p = dir.path().join("n.sgnn");
        save_network(&p, &file).unwrap();
        assert_eq!(load_network(&p).unwrap(), file);
    }
}

#[test]
fn report_json_round_trip_and_version_check() {
    let report = EvalReport {
        method: "spca".into(),
        split: "test".into(),
        samples: 10,
        ct: 0.9,
        tw: 0.8,
        mae_mean: 1.5,
        mae_std: 0.1,
        ce90_mean: 2.5,
        ce90_std: 0.2,
        k: 3,
        anchors: 5,
        trials: 7,
        seed: 1,
        chart_hash: "x".into(),
    };
    let text = encode_report(&report);
    assert_eq!(decode_report(&text).unwrap(), report);
    let bumped = text.replace("\"format_version\": 1", "\"format_version\": 2");
    assert!(matches!(decode_report(&bumped), Err(DataError::UnsupportedVersion { .. })));
}

const LONG: &str = "sample,bs,tap,re,im
0,0,0,1.0,0.5
0,0,2,0.25,0
0,1,1,-1,2
1,0,0,3,0
1,1,2,0,1
";

fn long_layout() -> CsvLayout {
    CsvLayout::Long { sample: 0, bs: 1, tap: 2, re: 3, im: Some(4), header: true }
}

#[test]
fn import_hand_written_long_csv() {
    let dir = tempdir().unwrap();
    let cir = dir.path().join("cir.csv");
    let truth = dir.path().join("truth.csv");
    fs::write(&cir, LONG).unwrap();
    fs::write(&truth, "id,x,y\n1,3.0,4.0\n0,1.0,2.0\n").unwrap();
    let tl = TruthLayout { sample: Some(0), coords: vec![1, 2], header: true };
    let ds = import_csv(&cir, Some((&truth, &tl)), &long_layout()).unwrap();
    assert_eq!((ds.len(), ds.n_bs(), ds.n_taps()), (2, 2, 3));
    assert_eq!(ds.samples[0].per_bs[0].taps[1].re, 0.0);
    assert_eq!(ds.samples[0].per_bs[1].taps[1].im, 2.0);
    assert_eq!(ds.truth.as_ref().unwrap().point(1), &[3.0, 4.0]);
}

#[test]
fn nan_and_ragged_rows_name_the_row() {
    let dir = tempdir().unwrap();
    let cir = dir.path().join("cir.csv");
    fs::write(&cir, "sample,bs,tap,re,im\n0,0,0,1,0\n0,0,1,NaN,0\n").unwrap();
    let err = import_csv(&cir, None, &long_layout()).unwrap_err();
    assert!(matches!(err, DataError::Csv { row: 3, .. }), "{err}");
    fs::write(&cir, "sample,bs,tap,re,im\n0,0,0,1,0\n0,0,1,2\n").unwrap();
    let err = import_csv(&cir, None, &long_layout()).unwrap_err();
    assert!(matches!(err, DataError::Csv { row: 3, .. }), "{err}");
    assert!(err.to_string().contains("ragged"));
}

#[test]
fn import_export_import_is_idempotent() {
    let dir = tempdir().unwrap();
    let ds = {
        let mut d = small_dataset();
        d.times = None;
        d.config_hash.clear();
        d
    };
    let tl = TruthLayout { sample: Some(0), coords: vec![1, 2], header: true };
    let layouts = [
        long_layout(),
        CsvLayout::Wide { n_bs: 4, n_taps: 16, sample: Some(0), first_value: 1, real_only: false, header: false },
    ];
    for layout in layouts {
        let (c1, t1) = (dir.path().join("c1.csv"), dir.path().join("t1.csv"));
        export_csv(&ds, &c1, Some((&t1, &tl)), &layout).unwrap();
        let first = import_csv(&c1, Some((&t1, &tl)), &layout).unwrap();
        assert_eq!(first, ds);
        let (c2, t2) = (dir.path().join("c2.csv"), dir.path().join("t2.csv"));
        export_csv(&first, &c2, Some((&t2, &tl)), &layout).unwrap();
        assert_eq!(fs::read(&c1).unwrap(), fs::read(&c2).unwrap());
        assert_eq!(import_csv(&c2, Some((&t2, &tl)), &layout).unwrap(), first);
    }
}

#[test]
fn truth_without_ids_follows_row_order() {
    let dir = tempdir().unwrap();
    let cir = dir.path().join("cir.csv");
    fs::write(&cir, "1,0,2,0\n0,0,0,5\n").unwrap();
    let truth = dir.path().join("t.csv");
    fs::write(&truth, "1,1\n2,2\n").unwrap();
    let layout = CsvLayout::Wide { n_bs: 2, n_taps: 2, sample: None, first_value: 0, real_only: true, header: false };
    let tl = TruthLayout { sample: None, coords: vec![0, 1], header: false };
    let ds = import_csv(&cir, Some((&truth, &tl)), &layout).unwrap();
    assert_eq!(ds.truth, Some(GroundTruth::new(2, vec![1.0, 1.0, 2.0, 2.0]).unwrap()));
    assert_eq!(ds.samples[1].per_bs[1].taps[1].re, 5.0);
}

#[test]
fn atomic_write_replaces_file() {
    let dir = tempdir().unwrap();
    let p = dir.path().join("f");
    write_atomic(&p, b"one").unwrap();
    write_atomic(&p, b"two").unwrap();
    assert_eq!(fs::read(&p).unwrap(), b"two");
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
}
