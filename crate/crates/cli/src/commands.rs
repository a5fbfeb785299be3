//! Stage implementations shared by the individual subcommands and the
//! end-to-end pipeline.

use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use clap::ValueEnum;
use serde::Serialize;
use sigchart::charting::{
    embed, train_siamese, Chart, InputMaps, PcaModel, TrainConfig, TrainReport,
};
use sigchart::datastore::{
    config_hash, encode_chart, sha256_hex, write_atomic, CirDataset, FeatureSet, NetworkFile,
};
use sigchart::distances::{
    cir_euclidean_matrix, cir_magnitude, geodesic_matrix, normalize_matrix, signature_matrix, svectors,
    MagnitudeMap, MetricTag, PairwiseMatrix, SVector,
};
use sigchart::eval::{affine_fit, evaluate, train_test_split, EvalConfig, EvalReport, GroundTruth};
use sigchart::featurize::{
    apply_normalization, build_signature_maps, feature_count, feature_reduction, fit_normalization,
    FeatureConfig, NormalizationStats, SignatureMap,
};
use sigchart::synthgen::{generate_dataset, SceneConfig};

use crate::config::{Method, SpcaLayout};
use crate::error::{CliError, Result};
use crate::plot;

static PROGRESS: AtomicBool = AtomicBool::new(false);

pub fn enable_progress() {
    PROGRESS.store(true, Ordering::Relaxed);
}

/// Machine-readable progress line on stderr, when enabled.
pub fn progress(stage: &str, detail: &str) {
    if PROGRESS.load(Ordering::Relaxed) {
        eprintln!("progress stage={stage} {detail}");
    }
}

pub fn synth(scene: &SceneConfig) -> Result<CirDataset> {
    progress("synth", &format!("samples={}", scene.samples));
    let out = generate_dataset(scene)?;
    Ok(CirDataset {
        samples: out.samples,
        truth: Some(out.truth),
        times: None,
        config_hash: config_hash(scene),
    })
}

pub fn feature_config(ds: &CirDataset, level: usize) -> FeatureConfig {
    FeatureConfig { level, times: ds.times.clone() }
}

/// One-line summary of the per-BS feature compression.
pub fn reduction_line(n_bs: usize, n_taps: usize, level: usize) -> String {
    format!(
        "features per BS: 2·N = {} real values -> L = {} log-signature coordinates ({:.2}% reduction; {} -> {} per sample)",
        2 * n_taps,
        feature_count(level),
        100.0 * feature_reduction(n_bs, n_taps, level),
        2 * n_taps * n_bs,
        feature_count(level) * n_bs
    )
}

pub fn featurize(ds: &CirDataset, dataset_hash: &str, level: usize) -> Result<FeatureSet> {
    featurize_with(ds, dataset_hash, &feature_config(ds, level))
}

pub fn featurize_with(ds: &CirDataset, dataset_hash: &str, cfg: &FeatureConfig) -> Result<FeatureSet> {
    let level = cfg.level;
    progress("featurize", &format!("samples={} level={level}", ds.len()));
    let maps = build_signature_maps(&ds.samples, cfg)?;
    let sv = svectors(&ds.samples, cfg)?;
    Ok(FeatureSet {
        level,
        maps,
        svectors: Some(sv),
        normalization: None,
        config_hash: config_hash(cfg),
        dataset_hash: dataset_hash.to_string(),
    })
}

/// Refuses features that were computed from a different dataset file.
pub fn check_features(fs: &FeatureSet, dataset_hash: &str) -> Result<()> {
    if fs.dataset_hash != dataset_hash {
        return Err(CliError::Data(format!(
            "feature file was computed from dataset {} but the given dataset hashes to {}; re-run featurize",
            short(&fs.dataset_hash),
            short(dataset_hash)
        )));
    }
    Ok(())
}

fn short(h: &str) -> &str {
    &h[..h.len().min(12)]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DistMetric {
    /// ℓ¹ distance between s-vectors.
    Signature,
    /// Frobenius distance between CIR magnitude maps.
    CirEuclidean,
    /// Shortest paths on the k-NN graph of the base metric.
    Geodesic,
    /// Euclidean distance between true positions.
    TrueLocation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GeodesicBase {
    CirEuclidean,
    Signature,
}

fn svectors_of(fs: Option<&FeatureSet>, ds: Option<&CirDataset>, level: usize) -> Result<Vec<SVector>> {
    if let Some(sv) = fs.and_then(|f| f.svectors.clone()) {
        return Ok(sv);
    }
    let ds = ds.ok_or_else(|| CliError::Config("signature distances need --features or --dataset".into()))?;
    Ok(svectors(&ds.samples, &feature_config(ds, level))?)
}

fn magnitudes(ds: Option<&CirDataset>) -> Result<Vec<MagnitudeMap>> {
    let ds = ds.ok_or_else(|| CliError::Config("CIR distances need --dataset".into()))?;
    Ok(ds.samples.iter().map(cir_magnitude).collect())
}

pub fn distance_matrix(
    metric: DistMetric,
    ds: Option<&CirDataset>,
    fs: Option<&FeatureSet>,
    k: usize,
    base: GeodesicBase,
) -> Result<PairwiseMatrix> {
    progress("dist", &format!("metric={metric:?} k={k}"));
    let level = fs.map_or(sigchart::featurize::DEFAULT_LEVEL, |f| f.level);
    Ok(match metric {
        DistMetric::Signature => signature_matrix(&svectors_of(fs, ds, level)?)?,
        DistMetric::CirEuclidean => cir_euclidean_matrix(&magnitudes(ds)?)?,
        DistMetric::Geodesic => {
            let base_m = match base {
                GeodesicBase::CirEuclidean => cir_euclidean_matrix(&magnitudes(ds)?)?,
                GeodesicBase::Signature => signature_matrix(&svectors_of(fs, ds, level)?)?,
            };
            geodesic_matrix(&base_m, k)?
        }
        DistMetric::TrueLocation => {
            let truth = ds
                .and_then(|d| d.truth.as_ref())
                .ok_or_else(|| CliError::Data("true-location distances need a dataset with ground truth".into()))?;
            truth.distance_matrix()?
        }
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ChartParams {
    pub method: Method,
    pub split: f64,
    pub split_seed: u64,
    pub components: usize,
    pub spca_layout: SpcaLayout,
    pub geodesic_k: usize,
    pub train: TrainConfig,
    pub level: usize,
}

pub enum Model {
    Pca(PcaModel),
    Network(NetworkFile),
}

pub struct ChartOutput {
    pub chart: Chart,
    pub model: Model,
    pub train_report: Option<TrainReport>,
}

fn magnitude_as_map(m: &MagnitudeMap) -> SignatureMap {
    SignatureMap { n_bs: m.n_bs, n_features: m.n_taps, values: m.values.clone(), sample_id: 0 }
}

/// Z-scores every map with statistics of the training subset and
/// concatenates them into one input array.
fn normalized_inputs(maps: &[SignatureMap], train: &[usize]) -> Result<(Vec<f64>, NormalizationStats)> {
    let train_maps: Vec<SignatureMap> = train.iter().map(|&i| maps[i].clone()).collect();
    let stats = fit_normalization(&train_maps)?;
    let mut data = Vec::with_capacity(maps.len() * stats.mean.len());
    for m in maps {
        data.extend(apply_normalization(m, &stats)?.values);
    }
    Ok((data, stats))
}

fn pick<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| items[i].clone()).collect()
}

/// Fits a charting method on the training split and charts every sample.
pub fn make_chart(ds: &CirDataset, fs: &FeatureSet, dataset_hash: &str, params: &ChartParams) -> Result<ChartOutput> {
    if fs.maps.len() != ds.len() {
        return Err(CliError::Data(format!("{} feature rows for {} samples", fs.maps.len(), ds.len())));
    }
    let (train, _) = train_test_split(ds.len(), params.split, params.split_seed);
    if train.len() < 2 {
        return Err(CliError::Config("training split has fewer than 2 samples".into()));
    }
    progress("chart", &format!("method={} train={}", params.method.name(), train.len()));
    let hash = config_hash(&(params, &fs.config_hash, dataset_hash));
    let mut train_report = None;
    let (mut chart, model) = match params.method {
        Method::Spca => match params.spca_layout {
            SpcaLayout::Svector => {
                let sv = fs.svectors.as_ref().ok_or_else(|| CliError::Data("feature file lacks s-vectors".into()))?;
                let model = PcaModel::fit(&pick(sv, &train), params.components)?;
                (model.transform(sv)?, Model::Pca(model))
            }
            SpcaLayout::VectorizedMap => {
                let model = PcaModel::fit(&pick(&fs.maps, &train), params.components)?;
                (model.transform(&fs.maps)?, Model::Pca(model))
            }
        },
        Method::Cirpca => {
            let mags: Vec<MagnitudeMap> = ds.samples.iter().map(cir_magnitude).collect();
            let model = PcaModel::fit(&pick(&mags, &train), params.components)?;
            (model.transform(&mags)?, Model::Pca(model))
        }
        Method::Fssn | Method::Pssn | Method::Cirsia => {
            let (maps, width): (Vec<SignatureMap>, usize) = if params.method == Method::Cirsia {
                (ds.samples.iter().map(|s| magnitude_as_map(&cir_magnitude(s))).collect(), ds.n_taps())
            } else {
                (fs.maps.clone(), fs.maps.first().map_or(0, |m| m.n_features))
            };
            let (data, stats) = normalized_inputs(&maps, &train)?;
            let height = ds.n_bs();
            let train_data: Vec<f64> = train
                .iter()
                .flat_map(|&i| data[i * height * width..(i + 1) * height * width].iter().copied())
                .collect();
            let target = match params.method {
                Method::Fssn => {
                    let sv = fs.svectors.as_ref().ok_or_else(|| CliError::Data("feature file lacks s-vectors".into()))?;
                    signature_matrix(&pick(sv, &train))?
                }
                _ => {
                    let mags: Vec<MagnitudeMap> = train.iter().map(|&i| cir_magnitude(&ds.samples[i])).collect();
                    geodesic_matrix(&cir_euclidean_matrix(&mags)?, params.geodesic_k)?
                }
            };
            let target = normalize_matrix(&target)?;
            let inputs = InputMaps { data: &train_data, height, width };
            let (net, report) = train_siamese(inputs, &target, &params.train)?;
            progress(
                "train",
                &format!("initial_loss={:.6} final_loss={:.6}", report.initial_loss, report.final_loss),
            );
            train_report = Some(report);
            let chart = embed(&net, InputMaps { data: &data, height, width })?;
            let normalization = (params.method != Method::Cirsia).then_some(stats);
            (chart, Model::Network(NetworkFile { network: net, normalization, config_hash: hash.clone() }))
        }
    };
    chart.provenance.method = params.method.name().to_string();
    chart.provenance.config_hash = hash;
    chart.provenance.dataset_hash = dataset_hash.to_string();
    Ok(ChartOutput { chart, model, train_report })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    All,
}

pub fn split_indices(n: usize, which: Split, fraction: f64, seed: u64) -> Vec<usize> {
    let (train, test) = train_test_split(n, fraction, seed);
    match which {
        Split::Train => train,
        Split::Test => test,
        Split::All => (0..n).collect(),
    }
}

pub fn evaluate_chart(
    chart: &Chart,
    ds: &CirDataset,
    dataset_hash: &str,
    indices: &[usize],
    split: Split,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let truth = ds.truth.as_ref().ok_or_else(|| CliError::Data("dataset has no ground truth; cannot evaluate".into()))?;
    if chart.len() != ds.len() {
        return Err(CliError::Data(format!("chart has {} points for {} samples", chart.len(), ds.len())));
    }
    if !chart.provenance.dataset_hash.is_empty() && chart.provenance.dataset_hash != dataset_hash {
        return Err(CliError::Data(format!(
            "chart was computed from dataset {} but the given dataset hashes to {}",
            short(&chart.provenance.dataset_hash),
            short(dataset_hash)
        )));
    }
    progress("eval", &format!("method={} samples={}", chart.provenance.method, indices.len()));
    let coords: Vec<f64> = indices.iter().flat_map(|&i| chart.point(i).iter().copied()).collect();
    let mut report = evaluate(&coords, chart.dim, &truth.subset(indices), cfg)?;
    report.method = chart.provenance.method.clone();
    report.split = format!("{split:?}").to_lowercase();
    report.chart_hash = sha256_hex(&encode_chart(chart));
    Ok(report)
}

/// Results table with the usual CT / TW / MAE / CE90 columns.
pub fn report_table(reports: &[EvalReport]) -> String {
    let mut s = format!(
        "{:<8} {:<6} {:>6} {:>7} {:>7} {:>18} {:>18}\n",
        "method", "split", "D", "CT", "TW", "MAE (m)", "CE90 (m)"
    );
    for r in reports {
        s.push_str(&format!(
            "{:<8} {:<6} {:>6} {:>7.4} {:>7.4} {:>9.3} ± {:<6.3} {:>9.3} ± {:<6.3}\n",
            r.method, r.split, r.samples, r.ct, r.tw, r.mae_mean, r.mae_std, r.ce90_mean, r.ce90_std
        ));
    }
    s
}

/// Chart scatter plot; affinely aligned to the truth when available and
/// coloured by true x-position.
pub fn write_chart_plot(path: &Path, chart: &Chart, truth: Option<&GroundTruth>) -> Result<()> {
    let (points, colors, title) = match truth {
        Some(t) if t.len() == chart.len() && t.dim >= 1 => {
            let aligned = affine_fit(&chart.coords, chart.dim, &t.coords, t.dim)
                .map(|map| map.apply_all(&chart.coords))
                .unwrap_or_else(|_| chart.coords.clone());
            let out_dim = if aligned.len() == chart.len() * t.dim { t.dim } else { chart.dim };
            let xs: Vec<f64> = (0..t.len()).map(|i| t.point(i)[0]).collect();
            let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &v| (a.0.min(v), a.1.max(v)));
            let colors: Vec<f64> = xs.iter().map(|v| (v - lo) / (hi - lo).max(1e-12)).collect();
            (first_two(&aligned, out_dim), Some(colors), format!("{} (affine-aligned)", chart.provenance.method))
        }
        _ => (first_two(&chart.coords, chart.dim), None, chart.provenance.method.clone()),
    };
    write_atomic(path, plot::scatter_svg(&points, colors.as_deref(), &title).as_bytes())?;
    Ok(())
}

fn first_two(coords: &[f64], dim: usize) -> Vec<f64> {
    coords
        .chunks(dim)
        .flat_map(|p| [p[0], if dim > 1 { p[1] } else { 0.0 }])
        .collect()
}

pub fn write_heatmaps(m: &PairwiseMatrix, svg: Option<&Path>, pgm: Option<&Path>, title: &str) -> Result<()> {
    if let Some(p) = svg {
        write_atomic(p, plot::heatmap_svg(m, title).as_bytes())?;
    }
    if let Some(p) = pgm {
        write_atomic(p, &plot::heatmap_pgm(m))?;
    }
    Ok(())
}

pub fn metric_title(metric: MetricTag, k: Option<usize>) -> String {
    match (metric, k) {
        (MetricTag::Geodesic, Some(k)) => format!("geodesic distance, k = {k}"),
        (m, _) => format!("{m:?} distance"),
    }
}
