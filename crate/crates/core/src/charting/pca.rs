//! PCA charting with a hand-written symmetric eigensolver.

use serde::{Deserialize, Serialize};

use crate::distances::{MagnitudeMap, SVector};
use crate::featurize::SignatureMap;

use super::{Chart, ChartError};

/// Off-diagonal Frobenius norm, relative to the full norm, at which the
/// Jacobi sweep stops.
pub const JACOBI_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Eigendecomposition of a symmetric `n × n` row-major matrix by cyclic
/// Jacobi rotations. Returns eigenvalues in descending order and the matching
/// unit eigenvectors as rows.
pub fn symmetric_eigen(matrix: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(matrix.len(), n * n, "matrix is not n × n");
    let mut a = matrix.to_vec();
    // v holds eigenvectors as rows: v[k*n + i] is component i of vector k.
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let total: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if total > 0.0 {
        for _ in 0..MAX_SWEEPS {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i * n + j].powi(2))
                .sum::<f64>()
                .sqrt();
            if off <= JACOBI_TOL * total {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[p * n + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k * n + p], a[k * n + q]);
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let (vpk, vqk) = (v[p * n + k], v[q * n + k]);
                        v[p * n + k] = c * vpk - s * vqk;
                        v[q * n + k] = s * vpk + c * vqk;
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order
        .iter()
        .flat_map(|&i| v[i * n..(i + 1) * n].iter().copied())
        .collect();
    (values, vectors)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureLayout {
    Svector,
    VectorizedMap,
    CirMagnitude,
}

impl FeatureLayout {
    pub fn code(self) -> u8 {
        match self {
            Self::Svector => 0,
            Self::VectorizedMap => 1,
            Self::CirMagnitude => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        [Self::Svector, Self::VectorizedMap, Self::CirMagnitude]
            .into_iter()
            .find(|l| l.code() == code)
    }
}

/// A feature vector usable as PCA input.
pub trait PcaInput {
    const LAYOUT: FeatureLayout;
    fn features(&self) -> &[f64];
}

impl PcaInput for SVector {
    const LAYOUT: FeatureLayout = FeatureLayout::Svector;
    fn features(&self) -> &[f64] {
        &self.values
    }
}

impl PcaInput for SignatureMap {
    const LAYOUT: FeatureLayout = FeatureLayout::VectorizedMap;
    fn features(&self) -> &[f64] {
        &self.values
    }
}

impl PcaInput for MagnitudeMap {
    const LAYOUT: FeatureLayout = FeatureLayout::CirMagnitude;
    fn features(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub layout: FeatureLayout,
    pub dim: usize,
    pub mean: Vec<f64>,
    /// `n_components × dim`, row-major, orthonormal rows.
    pub components: Vec<f64>,
    /// Every eigenvalue of the sample covariance, descending.
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.components.len() / self.dim
        }
    }

    pub fn component(&self, k: usize) -> &[f64] {
        &self.components[k * self.dim..(k + 1) * self.dim]
    }

    /// Fits on `n` rows of length `dim` stored contiguously.
    pub fn fit_rows(
        data: &[f64],
        dim: usize,
        n_components: usize,
        layout: FeatureLayout,
    ) -> Result<Self, ChartError> {
        if dim == 0 || data.is_empty() {
            return Err(ChartError::Empty);
        }
        if data.len() % dim != 0 {
            return Err(ChartError::ShapeMismatch { got: data.len() % dim, expected: 0 });
        }
        if n_components == 0 || n_components > dim {
            return Err(ChartError::InvalidComponents { requested: n_components, dim });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ChartError::NonFinite);
        }
        let n = data.len() / dim;
        let mut mean = vec![0.0; dim];
        for row in data.chunks(dim) {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let centered: Vec<f64> = data
            .chunks(dim)
            .flat_map(|row| row.iter().zip(&mean).map(|(x, m)| x - m))
            .collect();

        let (eigenvalues, components) = if dim <= n {
            let mut cov = vec![0.0; dim * dim];
            for row in centered.chunks(dim) {
                for i in 0..dim {
                    let ri = row[i];
                    for j in i..dim {
                        cov[i * dim + j] += ri * row[j];
                    }
                }
            }
            for i in 0..dim {
                for j in i..dim {
                    let c = cov[i * dim + j] / n as f64;
                    cov[i * dim + j] = c;
                    cov[j * dim + i] = c;
                }
            }
            let (values, vectors) = symmetric_eigen(&cov, dim);
            (values, vectors[..n_components * dim].to_vec())
        } else {
            // Fewer samples than dimensions: decompose the n × n Gram matrix
            // and map its eigenvectors back through the data.
            let mut gram = vec![0.0; n * n];
            for i in 0..n {
                let ri = &centered[i * dim..(i + 1) * dim];
                for j in i..n {
                    let g = ri.iter().zip(&centered[j * dim..(j + 1) * dim]).map(|(a, b)| a * b).sum::<f64>()
                        / n as f64;
                    gram[i * n + j] = g;
                    gram[j * n + i] = g;
                }
            }
            let (mut values, vectors) = symmetric_eigen(&gram, n);
            values.resize(dim, 0.0);
            let mut components = Vec::with_capacity(n_components * dim);
            for k in 0..n_components {
                let mut comp = vec![0.0; dim];
                if k < n {
                    for (i, row) in centered.chunks(dim).enumerate() {
                        let u = vectors[k * n + i];
                        comp.iter_mut().zip(row).for_each(|(c, x)| *c += u * x);
                    }
                }
                let norm = comp.iter().map(|c| c * c).sum::<f64>().sqrt();
                if norm > 1e-12 * values[0].abs().sqrt().max(1e-300) {
                    comp.iter_mut().for_each(|c| *c /= norm);
                } else {
                    comp = orthonormal_complement(&components, dim);
                }
                components.extend(comp);
            }
            (values, components)
        };
        Ok(Self {
            layout,
            dim,
            mean,
            components,
            eigenvalues,
        })
    }

    pub fn fit<T: PcaInput>(items: &[T], n_components: usize) -> Result<Self, ChartError> {
        let dim = items.first().ok_or(ChartError::Empty)?.features().len();
        let mut data = Vec::with_capacity(items.len() * dim);
        for item in items {
            let f = item.features();
            if f.len() != dim {
                return Err(ChartError::ShapeMismatch { got: f.len(), expected: dim });
            }
            data.extend_from_slice(f);
        }
        Self::fit_rows(&data, dim, n_components, T::LAYOUT)
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_components())
            .map(|k| {
                self.component(k)
                    .iter()
                    .zip(x.iter().zip(&self.mean))
                    .map(|(c, (xi, m))| c * (xi - m))
                    .sum()
            })
            .collect()
    }

    pub fn transform_rows(&self, data: &[f64], layout: FeatureLayout) -> Result<Chart, ChartError> {
        if layout != self.layout {
            return Err(ChartError::LayoutMismatch { model: self.layout, input: layout });
        }
        if data.len() % self.dim != 0 {
            return Err(ChartError::ShapeMismatch { got: data.len() % self.dim, expected: 0 });
        }
        let coords = data.chunks(self.dim).flat_map(|row| self.project(row)).collect();
        Chart::new(self.n_components(), coords, "pca")
    }

    pub fn transform<T: PcaInput>(&self, items: &[T]) -> Result<Chart, ChartError> {
        let mut data = Vec::with_capacity(items.len() * self.dim);
        for item in items {
            let f = item.features();
            if f.len() != self.dim {
                return Err(ChartError::ShapeMismatch { got: f.len(), expected: self.dim });
            }
            data.extend_from_slice(f);
        }
        let mut chart = self.transform_rows(&data, T::LAYOUT)?;
        chart.provenance.method = match T::LAYOUT {
            FeatureLayout::CirMagnitude => "cir-pca",
            _ => "spca",
        }
        .to_string();
        Ok(chart)
    }
}

/// A unit vector orthogonal to the given rows (Gram–Schmidt on the
/// standard basis).
fn orthonormal_complement(rows: &[f64], dim: usize) -> Vec<f64> {
    for e in 0..dim {
        let mut v = vec![0.0; dim];
        v[e] = 1.0;
        for row in rows.chunks(dim) {
            let dot: f64 = row.iter().zip(&v).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(row).for_each(|(x, r)| *x -= dot * r);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
    vec![0.0; dim]
}

pub fn spca_fit<T: PcaInput>(items: &[T], n_components: usize) -> Result<PcaModel, ChartError> {
    PcaModel::fit(items, n_components)
}

pub fn spca_transform<T: PcaInput>(model: &PcaModel, items: &[T]) -> Result<Chart, ChartError> {
    model.transform(items)
}
