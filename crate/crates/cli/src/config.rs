//! Pipeline configuration file (TOML). Unknown keys are rejected.

use std::path::Path;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use sigchart::charting::TrainConfig;
use sigchart::eval::EvalConfig;
use sigchart::featurize::FeatureConfig;
use sigchart::synthgen::SceneConfig;

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// PCA on s-vectors or vectorized signature maps.
    Spca,
    /// PCA on CIR magnitudes.
    Cirpca,
    /// Siamese network on signature maps, trained on signature distances.
    Fssn,
    /// Siamese network on signature maps, trained on CIR geodesic distances.
    Pssn,
    /// Siamese network on CIR magnitudes, trained on CIR geodesic distances.
    Cirsia,
}

impl Method {
    /// Pipeline default; CIR-Siamese trains on full CIR maps and is opt-in.
    pub const DEFAULT: [Method; 4] = [Method::Spca, Method::Cirpca, Method::Fssn, Method::Pssn];

    pub fn name(self) -> &'static str {
        match self {
            Method::Spca => "spca",
            Method::Cirpca => "cirpca",
            Method::Fssn => "fssn",
            Method::Pssn => "pssn",
            Method::Cirsia => "cirsia",
        }
    }
}

/// Input layout for SPCA.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SpcaLayout {
    Svector,
    VectorizedMap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub methods: Vec<Method>,
    /// Fraction of samples used for fitting.
    pub split: f64,
    pub split_seed: u64,
    /// Neighbours per node of the k-NN graph for geodesic distances.
    pub geodesic_k: usize,
    pub spca_layout: SpcaLayout,
    pub components: usize,
    pub plots: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            methods: Method::DEFAULT.to_vec(),
            split: 0.75,
            split_seed: 0,
            geodesic_k: 10,
            spca_layout: SpcaLayout::Svector,
            components: 2,
            plots: true,
        }
    }
}

/// Base scene parameters that a `[scene]` table overrides key by key.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 8 base stations, 64 taps, 1000 samples.
    #[default]
    Desk,
    /// 18 base stations, 256 taps, 8000 samples.
    Full,
}

impl Preset {
    pub fn scene(self) -> SceneConfig {
        match self {
            Preset::Desk => SceneConfig::desk(),
            Preset::Full => SceneConfig::default(),
        }
    }
}

/// Overlays the keys of `table` on a preset scene; unknown keys are errors.
pub fn scene_from_table(preset: Preset, table: toml::Table) -> Result<SceneConfig> {
    let base = toml::Table::try_from(preset.scene()).map_err(|e| CliError::Config(e.to_string()))?;
    let mut merged = base;
    merged.extend(table);
    merged.try_into().map_err(|e: toml::de::Error| CliError::Config(format!("[scene]: {e}")))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRunConfig {
    #[serde(default)]
    preset: Preset,
    #[serde(default)]
    scene: toml::Table,
    #[serde(default)]
    features: FeatureConfig,
    #[serde(default)]
    train: TrainConfig,
    #[serde(default)]
    eval: EvalConfig,
    #[serde(default)]
    pipeline: PipelineConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub scene: SceneConfig,
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub pipeline: PipelineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::desk(),
            features: FeatureConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            pipeline: PipelineConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawRunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let cfg = Self {
            scene: scene_from_table(raw.preset, raw.scene)?,
            features: raw.features,
            train: raw.train,
            eval: raw.eval,
            pipeline: raw.pipeline,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.train.validate()?;
        validate_split(self.pipeline.split)?;
        if self.pipeline.geodesic_k == 0 {
            return Err(CliError::Config("geodesic_k must be positive".into()));
        }
        if self.pipeline.components == 0 {
            return Err(CliError::Config("components must be positive".into()));
        }
        if self.features.level < 2 {
            return Err(CliError::Config("features.level must be at least 2".into()));
        }
        if self.pipeline.methods.is_empty() {
            return Err(CliError::Config("pipeline.methods is empty".into()));
        }
        Ok(())
    }
}

pub fn validate_split(split: f64) -> Result<()> {
    if split > 0.0 && split <= 1.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("split fraction {split} must lie in (0, 1]")))
    }
}

/// Loads a TOML file into any deserializable configuration type.
pub fn load_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_desk_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.scene.samples, 1000);
        assert_eq!(cfg.train.epochs, 50);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::parse("bogus = 1"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::parse("[scene]\nhall_size = [1, 2]"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::parse("[train]\nepoch = 3"), Err(CliError::Config(_))));
    }

    #[test]
    fn partial_sections_and_validation() {
        let cfg = RunConfig::parse(
            "[scene]\nsamples = 50\ntrajectory = \"s-curve\"\n[pipeline]\nmethods = [\"spca\", \"fssn\"]\nsplit = 0.5\n",
        )
        .unwrap();
        assert_eq!(cfg.scene.samples, 50);
        assert_eq!(cfg.scene.n_bs, 8);
        assert_eq!(cfg.pipeline.methods, vec![Method::Spca, Method::Fssn]);
        assert!(RunConfig::parse("[pipeline]\nsplit = 1.5").is_err());
        assert!(RunConfig::parse("[train]\nlearning_rate = 0.0").is_err());
        let full = RunConfig::parse("preset = \"full\"\n[scene]\nseed = 4").unwrap();
        assert_eq!((full.scene.n_bs, full.scene.n_taps, full.scene.seed), (18, 256, 4));
    }
}
