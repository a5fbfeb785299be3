//! End-to-end run: synthesize, featurize, compute distances, chart with every
//! configured method and score each chart on the held-out split.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sigchart::charting::DistanceSource;
use sigchart::datastore::{self, file_hash};
use sigchart::distances::normalize_matrix;
use sigchart::featurize::FeatureConfig;

use crate::commands::{self, ChartParams, DistMetric, GeodesicBase, Model, Split};
use crate::config::{Method, RunConfig};
use crate::error::{CliError, Result};

#[derive(Serialize)]
struct Manifest<'a> {
    format_version: u16,
    config: &'a RunConfig,
    files: BTreeMap<String, String>,
}

fn record(files: &mut BTreeMap<String, String>, dir: &Path, name: &str) -> Result<()> {
    files.insert(name.to_string(), file_hash(&dir.join(name))?);
    Ok(())
}

/// Runs every stage into `dir` and returns the results table.
pub fn run(cfg: &RunConfig, dir: &Path) -> Result<String> {
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    let mut files = BTreeMap::new();

    let ds = commands::synth(&cfg.scene)?;
    datastore::save_dataset(&dir.join("dataset.sgch"), &ds)?;
    record(&mut files, dir, "dataset.sgch")?;
    let ds_hash = files["dataset.sgch"].clone();

    let fcfg = FeatureConfig {
        level: cfg.features.level,
        times: cfg.features.times.clone().or_else(|| ds.times.clone()),
    };
    let fs_ = commands::featurize_with(&ds, &ds_hash, &fcfg)?;
    datastore::save_features(&dir.join("features.sgft"), &fs_)?;
    record(&mut files, dir, "features.sgft")?;

    let k = cfg.pipeline.geodesic_k;
    for (name, metric) in [("signature", DistMetric::Signature), ("geodesic", DistMetric::Geodesic)] {
        let m = commands::distance_matrix(metric, Some(&ds), Some(&fs_), k, GeodesicBase::CirEuclidean)?;
        let m = normalize_matrix(&m)?;
        let file = format!("dist_{name}.sgmx");
        datastore::save_matrix(&dir.join(&file), &m, &datastore::config_hash(&(metric, k)))?;
        record(&mut files, dir, &file)?;
        if cfg.pipeline.plots {
            let svg = format!("dist_{name}.svg");
            let title = commands::metric_title(m.metric(), (metric == DistMetric::Geodesic).then_some(k));
            commands::write_heatmaps(&m, Some(&dir.join(&svg)), None, &title)?;
            record(&mut files, dir, &svg)?;
        }
    }

    let test = commands::split_indices(ds.len(), Split::Test, cfg.pipeline.split, cfg.pipeline.split_seed);
    let mut reports = Vec::new();
    for &method in &cfg.pipeline.methods {
        let mut train = cfg.train.clone();
        train.distance_source = match method {
            Method::Fssn => DistanceSource::Signature,
            _ => DistanceSource::CirGeodesic,
        };
        let params = ChartParams {
            method,
            split: cfg.pipeline.split,
            split_seed: cfg.pipeline.split_seed,
            components: cfg.pipeline.components,
            spca_layout: cfg.pipeline.spca_layout,
            geodesic_k: k,
            train,
            level: fs_.level,
        };
        let out = commands::make_chart(&ds, &fs_, &ds_hash, &params)?;
        let name = method.name();
        let chart_file = format!("chart_{name}.sgcr");
        datastore::save_chart(&dir.join(&chart_file), &out.chart)?;
        record(&mut files, dir, &chart_file)?;
        let model_file = match &out.model {
            Model::Pca(m) => {
                let f = format!("model_{name}.sgpc");
                datastore::save_pca(&dir.join(&f), m, &out.chart.provenance.config_hash)?;
                f
            }
            Model::Network(n) => {
                let f = format!("model_{name}.sgnn");
                datastore::save_network(&dir.join(&f), n)?;
                f
            }
        };
        record(&mut files, dir, &model_file)?;
        if let Some(r) = &out.train_report {
            let f = format!("train_{name}.json");
            let text = serde_json::to_string_pretty(r).map_err(|e| CliError::Data(e.to_string()))? + "\n";
            datastore::write_atomic(&dir.join(&f), text.as_bytes())?;
            record(&mut files, dir, &f)?;
        }
        if cfg.pipeline.plots {
            let f = format!("chart_{name}.svg");
            commands::write_chart_plot(&dir.join(&f), &out.chart, ds.truth.as_ref())?;
            record(&mut files, dir, &f)?;
        }
        let report = commands::evaluate_chart(&out.chart, &ds, &ds_hash, &test, Split::Test, &cfg.eval)?;
        let f = format!("report_{name}.json");
        datastore::save_report(&dir.join(&f), &report)?;
        record(&mut files, dir, &f)?;
        reports.push(report);
    }

    let table = commands::report_table(&reports);
    let summary = format!(
        "{}\n{}",
        commands::reduction_line(ds.n_bs(), ds.n_taps(), fs_.level),
        table
    );
    datastore::write_atomic(&dir.join("summary.txt"), summary.as_bytes())?;
    record(&mut files, dir, "summary.txt")?;

    let manifest = Manifest { format_version: datastore::FORMAT_VERSION, config: cfg, files };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Data(e.to_string()))? + "\n";
    datastore::write_atomic(&dir.join("manifest.json"), text.as_bytes())?;
    Ok(summary)
}
