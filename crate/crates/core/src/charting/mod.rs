//! Charting: PCA on signature features and Siamese networks trained to
//! reproduce a pairwise distance matrix.

pub mod network;
pub mod pca;
pub mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use network::{Architecture, Layer, Mode, Network, Shape};
pub use pca::{spca_fit, spca_transform, symmetric_eigen, FeatureLayout, PcaInput, PcaModel};
pub use train::{embed, siamese_loss, train_siamese, Adam, DistanceSource, InputMaps, TrainConfig, TrainReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChartError {
    #[error("empty input")]
    Empty,
    #[error("shape mismatch: got {got}, expected {expected}")]
    ShapeMismatch { got: usize, expected: usize },
    #[error("cannot keep {requested} components of a {dim}-dimensional feature")]
    InvalidComponents { requested: usize, dim: usize },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("model was fit on {model:?} features, got {input:?}")]
    LayoutMismatch { model: FeatureLayout, input: FeatureLayout },
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("pair set is empty")]
    EmptyPairs,
    #[error("non-finite loss or parameters at epoch {epoch}, step {step} (batch pairs {pairs:?})")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        pairs: Vec<(usize, usize)>,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: String,
    pub config_hash: String,
    /// Hash of the dataset file the chart was computed from.
    pub dataset_hash: String,
}

/// One chart point per sample, `dim` coordinates each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub dim: usize,
    pub coords: Vec<f64>,
    pub provenance: Provenance,
}

impl Chart {
    pub fn new(dim: usize, coords: Vec<f64>, method: &str) -> Result<Self, ChartError> {
        if dim == 0 || coords.len() % dim != 0 {
            return Err(ChartError::ShapeMismatch { got: coords.len(), expected: dim });
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(ChartError::NonFinite);
        }
        Ok(Self {
            dim,
            coords,
            provenance: Provenance {
                method: method.to_string(),
                config_hash: String::new(),
                dataset_hash: String::new(),
            },
        })
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
}
