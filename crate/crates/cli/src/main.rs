mod commands;
mod config;
mod error;
mod pipeline;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use sigchart::charting::{Architecture, DistanceSource, TrainConfig};
use sigchart::datastore::{self, CsvLayout, TruthLayout};
use sigchart::eval::EvalConfig;
use sigchart::synthgen::{BsLayout, Trajectory};

use commands::{ChartParams, DistMetric, GeodesicBase, Model, Split};
use config::{load_toml, Method, Preset, RunConfig, SpcaLayout};
use error::{CliError, Result};

#[derive(Parser)]
#[command(name = "sigchart", version, about = "Channel charting with path-signature features")]
struct Cli {
    /// Emit machine-readable progress lines on stderr.
    #[arg(long, global = true)]
    progress: bool,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic CIR dataset with ground truth.
    Synth(SynthArgs),
    /// Convert a CIR CSV (and optional truth CSV) into a dataset file.
    Import(ImportArgs),
    /// Compute signature maps and s-vectors for a dataset.
    Featurize(FeaturizeArgs),
    /// Compute a pairwise distance matrix, optionally with heatmaps.
    Dist(DistArgs),
    /// Fit a charting method and chart every sample.
    Chart(ChartArgs),
    /// Score a chart against the dataset's ground truth.
    Eval(EvalArgs),
    /// Run synth, featurize, dist, chart and eval end to end.
    Pipeline(PipelineArgs),
}

fn serde_enum<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Args)]
struct SynthArgs {
    /// Output dataset file.
    #[arg(long)]
    out: PathBuf,
    /// Run configuration (TOML); its `preset` and `[scene]` table are used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scene preset when no config file is given.
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    /// Number of UE positions [default: from preset].
    #[arg(long)]
    samples: Option<usize>,
    /// Random seed [default: from preset].
    #[arg(long)]
    seed: Option<u64>,
    /// grid, s-curve or random-walk [default: from preset].
    #[arg(long, value_parser = serde_enum::<Trajectory>)]
    trajectory: Option<Trajectory>,
    /// edge or interior [default: from preset].
    #[arg(long, value_parser = serde_enum::<BsLayout>)]
    bs_layout: Option<BsLayout>,
    /// Number of base stations [default: from preset].
    #[arg(long)]
    n_bs: Option<usize>,
    /// CIR taps per link [default: from preset].
    #[arg(long)]
    n_taps: Option<usize>,
    /// Scatterers per BS [default: from preset].
    #[arg(long)]
    scatterers: Option<usize>,
    /// Complex tap noise standard deviation [default: from preset].
    #[arg(long)]
    noise_std: Option<f64>,
}

#[derive(Args)]
struct ImportArgs {
    /// CIR CSV file.
    #[arg(long)]
    cir: PathBuf,
    /// Ground-truth CSV file.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Layout descriptor (TOML with a `[cir]` table and optional `[truth]` table).
    #[arg(long)]
    layout: PathBuf,
    /// Output dataset file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct LayoutFile {
    cir: CsvLayout,
    truth: Option<TruthLayout>,
}

#[derive(Args)]
struct FeaturizeArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Output feature file.
    #[arg(long)]
    out: PathBuf,
    /// Signature truncation level K.
    #[arg(long, default_value_t = sigchart::featurize::DEFAULT_LEVEL)]
    level: usize,
}

#[derive(Args)]
struct DistArgs {
    /// Output matrix file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = DistMetric::Signature)]
    metric: DistMetric,
    /// Feature file (signature metrics).
    #[arg(long)]
    features: Option<PathBuf>,
    /// Dataset file (CIR, geodesic and true-location metrics).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Neighbours per node for geodesic distances.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Base metric of the geodesic k-NN graph.
    #[arg(long, value_enum, default_value_t = GeodesicBase::CirEuclidean)]
    base: GeodesicBase,
    /// Store raw distances instead of scaling the maximum to 1.
    #[arg(long)]
    raw: bool,
    /// Grayscale SVG heatmap (block-averaged to at most 128 cells per side).
    #[arg(long)]
    heatmap: Option<PathBuf>,
    /// Full-resolution 8-bit PGM heatmap.
    #[arg(long)]
    pgm: Option<PathBuf>,
}

#[derive(Args)]
struct ChartArgs {
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long)]
    dataset: PathBuf,
    /// Feature file [default: computed from the dataset].
    #[arg(long)]
    features: Option<PathBuf>,
    /// Output chart file.
    #[arg(long)]
    out: PathBuf,
    /// Also write the fitted model (PCA or network file).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Also write the chart as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Scatter plot SVG, affinely aligned to the ground truth.
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Training loss history (JSON) for network methods.
    #[arg(long)]
    train_report: Option<PathBuf>,
    /// Fraction of samples used for fitting.
    #[arg(long, default_value_t = 0.75)]
    split: f64,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    /// Chart dimension for PCA methods.
    #[arg(long, default_value_t = 2)]
    components: usize,
    #[arg(long, value_enum, default_value_t = SpcaLayout::Svector)]
    spca_layout: SpcaLayout,
    /// Signature truncation level when features are computed here.
    #[arg(long, default_value_t = sigchart::featurize::DEFAULT_LEVEL)]
    level: usize,
    /// Neighbours per node for the geodesic training target.
    #[arg(long, default_value_t = 10)]
    geodesic_k: usize,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    /// Pairs per optimization step (50 for the full scene, 500 for compact datasets).
    #[arg(long, default_value_t = 50)]
    batch: usize,
    /// Adam learning rate (1e-4 for the full scene, 1e-3 for compact datasets).
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    /// Network initialization and pair-sampling seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// conv (default) or dense.
    #[arg(long, value_parser = serde_enum::<Architecture>, default_value = "conv")]
    architecture: Architecture,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    chart: PathBuf,
    /// Dataset with ground truth.
    #[arg(long)]
    dataset: PathBuf,
    /// Output report (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    split: Split,
    /// Training fraction used when the chart was fitted.
    #[arg(long, default_value_t = 0.75)]
    split_fraction: f64,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    /// Neighbourhood size for trustworthiness and continuity.
    #[arg(long, default_value_t = sigchart::eval::DEFAULT_NEIGHBORHOOD)]
    k: usize,
    /// Anchors per affine-alignment trial.
    #[arg(long, default_value_t = sigchart::eval::DEFAULT_ANCHORS)]
    anchors: usize,
    #[arg(long, default_value_t = sigchart::eval::DEFAULT_TRIALS)]
    trials: usize,
    /// Anchor-draw seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PipelineArgs {
    /// Directory for all artifacts.
    #[arg(long)]
    out_dir: PathBuf,
    /// Run configuration (TOML) [default: desk preset].
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated methods [default: from config].
    #[arg(long, value_enum, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Overrides the scene, training and anchor-draw seeds.
    #[arg(long)]
    seed: Option<u64>,
}

fn dataset_hash(path: &std::path::Path) -> Result<String> {
    Ok(datastore::file_hash(path)?)
}

fn run_synth(a: SynthArgs) -> Result<()> {
    let mut scene = match &a.config {
        Some(p) => RunConfig::load(p)?.scene,
        None => a.preset.scene(),
    };
    if let Some(v) = a.samples {
        scene.samples = v;
    }
    if let Some(v) = a.seed {
        scene.seed = v;
    }
    if let Some(v) = a.trajectory {
        scene.trajectory = v;
    }
    if let Some(v) = a.bs_layout {
        scene.bs_layout = v;
    }
    if let Some(v) = a.n_bs {
        scene.n_bs = v;
    }
    if let Some(v) = a.n_taps {
        scene.n_taps = v;
    }
    if let Some(v) = a.scatterers {
        scene.n_scatterers = v;
    }
    if let Some(v) = a.noise_std {
        scene.noise_std = v;
    }
    scene.validate()?;
    let ds = commands::synth(&scene)?;
    datastore::save_dataset(&a.out, &ds)?;
    println!(
        "wrote {}: D = {}, N_b = {}, N = {}",
        a.out.display(),
        ds.len(),
        ds.n_bs(),
        ds.n_taps()
    );
    Ok(())
}

fn run_import(a: ImportArgs) -> Result<()> {
    let layout: LayoutFile = load_toml(&a.layout)?;
    let truth = match (&a.truth, &layout.truth) {
        (Some(p), Some(l)) => Some((p.as_path(), l)),
        (Some(_), None) => return Err(CliError::Config("--truth given but the layout has no [truth] table".into())),
        _ => None,
    };
    let ds = datastore::import_csv(&a.cir, truth, &layout.cir)?;
    datastore::save_dataset(&a.out, &ds)?;
    println!("wrote {}: D = {}, N_b = {}, N = {}", a.out.display(), ds.len(), ds.n_bs(), ds.n_taps());
    Ok(())
}

fn run_featurize(a: FeaturizeArgs) -> Result<()> {
    if a.level < 2 {
        return Err(CliError::Config("--level must be at least 2".into()));
    }
    let ds = datastore::load_dataset(&a.dataset)?;
    let fs = commands::featurize(&ds, &dataset_hash(&a.dataset)?, a.level)?;
    datastore::save_features(&a.out, &fs)?;
    println!("{}", commands::reduction_line(ds.n_bs(), ds.n_taps(), a.level));
    println!("wrote {}", a.out.display());
    Ok(())
}

fn run_dist(a: DistArgs) -> Result<()> {
    let ds = a.dataset.as_ref().map(|p| datastore::load_dataset(p)).transpose()?;
    let fs = a.features.as_ref().map(|p| datastore::load_features(p)).transpose()?;
    if let (Some(fs), Some(p)) = (&fs, &a.dataset) {
        commands::check_features(fs, &dataset_hash(p)?)?;
    }
    let m = commands::distance_matrix(a.metric, ds.as_ref(), fs.as_ref(), a.k, a.base)?;
    let m = if a.raw { m } else { sigchart::distances::normalize_matrix(&m)? };
    let hash = datastore::config_hash(&(a.metric, a.k, a.base, a.raw));
    datastore::save_matrix(&a.out, &m, &hash)?;
    let k = (a.metric == DistMetric::Geodesic).then_some(a.k);
    commands::write_heatmaps(&m, a.heatmap.as_deref(), a.pgm.as_deref(), &commands::metric_title(m.metric(), k))?;
    println!("wrote {} ({} × {})", a.out.display(), m.size(), m.size());
    Ok(())
}

fn run_chart(a: ChartArgs) -> Result<()> {
    config::validate_split(a.split)?;
    let ds = datastore::load_dataset(&a.dataset)?;
    let ds_hash = dataset_hash(&a.dataset)?;
    let fs = match &a.features {
        Some(p) => {
            let fs = datastore::load_features(p)?;
            commands::check_features(&fs, &ds_hash)?;
            fs
        }
        None => commands::featurize(&ds, &ds_hash, a.level)?,
    };
    let train = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        learning_rate: a.lr,
        seed: a.seed,
        architecture: a.architecture,
        out_dim: 2,
        distance_source: match a.method {
            Method::Fssn => DistanceSource::Signature,
            _ => DistanceSource::CirGeodesic,
        },
    };
    train.validate()?;
    let params = ChartParams {
        method: a.method,
        split: a.split,
        split_seed: a.split_seed,
        components: a.components,
        spca_layout: a.spca_layout,
        geodesic_k: a.geodesic_k,
        train,
        level: fs.level,
    };
    let out = commands::make_chart(&ds, &fs, &ds_hash, &params)?;
    datastore::save_chart(&a.out, &out.chart)?;
    if let Some(p) = &a.csv {
        datastore::export_chart_csv(p, &out.chart)?;
    }
    if let Some(p) = &a.model {
        match &out.model {
            Model::Pca(m) => datastore::save_pca(p, m, &out.chart.provenance.config_hash)?,
            Model::Network(n) => datastore::save_network(p, n)?,
        }
    }
    if let (Some(p), Some(r)) = (&a.train_report, &out.train_report) {
        let text = serde_json::to_string_pretty(r).map_err(|e| CliError::Data(e.to_string()))?;
        datastore::write_atomic(p, text.as_bytes())?;
    }
    if let Some(p) = &a.plot {
        commands::write_chart_plot(p, &out.chart, ds.truth.as_ref())?;
    }
    if let Some(r) = &out.train_report {
        println!("training loss: initial {:.6}, final {:.6}", r.initial_loss, r.final_loss);
    }
    println!("wrote {} ({} points, method {})", a.out.display(), out.chart.len(), a.method.name());
    Ok(())
}

fn run_eval(a: EvalArgs) -> Result<()> {
    config::validate_split(a.split_fraction)?;
    let chart = datastore::load_chart(&a.chart)?;
    let ds = datastore::load_dataset(&a.dataset)?;
    let indices = commands::split_indices(ds.len(), a.split, a.split_fraction, a.split_seed);
    let cfg = EvalConfig { k: a.k, anchors: a.anchors, trials: a.trials, seed: a.seed };
    let report = commands::evaluate_chart(&chart, &ds, &dataset_hash(&a.dataset)?, &indices, a.split, &cfg)?;
    if let Some(p) = &a.out {
        datastore::save_report(p, &report)?;
    }
    print!("{}", commands::report_table(std::slice::from_ref(&report)));
    Ok(())
}

fn run_pipeline(a: PipelineArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = a.methods {
        cfg.pipeline.methods = m;
    }
    if let Some(s) = a.seed {
        cfg.scene.seed = s;
        cfg.train.seed = s;
        cfg.eval.seed = s;
    }
    cfg.validate()?;
    let summary = pipeline::run(&cfg, &a.out_dir)?;
    print!("{summary}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if cli.progress {
        commands::enable_progress();
    }
    let result = match cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Import(a) => run_import(a),
        Command::Featurize(a) => run_featurize(a),
        Command::Dist(a) => run_dist(a),
        Command::Chart(a) => run_chart(a),
        Command::Eval(a) => run_eval(a),
        Command::Pipeline(a) => run_pipeline(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
