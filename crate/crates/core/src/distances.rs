//! Pairwise dissimilarities: the closed-form signature distance, CIR
//! magnitude distances, and geodesic distances on k-NN graphs.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::featurize::{normalize_energy, validate_times, CirSample, FeatureConfig, FeatureError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistanceError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("pairwise matrices need at least 2 items, got {0}")]
    TooFewItems(usize),
    #[error("cannot normalize an all-zero distance matrix")]
    AllZero,
    #[error("neighbourhood size {k} out of range for {size} points")]
    InvalidK { k: usize, size: usize },
    #[error("invalid tap powers or times: {0}")]
    InvalidInput(&'static str),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// Closed-form signature feature of one CIR row from its energy-normalized
/// tap powers `p_1..p_N` and tap times `t_1..t_N` (`t_0 = 0` is implicit):
///
/// `s = 1/12 Σ_n p_n (t_N² + 2t_n² + 2t_{n-1}² + 2 t_n t_{n-1} − 3 t_N (t_n + t_{n-1}))`
///
/// This equals the log-signature coordinate of the Lyndon word `[1,2,2]`
/// (one energy increment, two time increments) of the augmented CSE path.
pub fn s_feature(powers: &[f64], times: &[f64]) -> Result<f64, DistanceError> {
    if powers.len() != times.len() {
        return Err(DistanceError::LengthMismatch(powers.len(), times.len()));
    }
    if powers.is_empty() {
        return Err(DistanceError::InvalidInput("empty CIR"));
    }
    if powers.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(DistanceError::InvalidInput("tap powers must be finite and nonnegative"));
    }
    validate_times(times)?;
    let t_end = times[times.len() - 1];
    let mut prev = 0.0;
    let mut acc = 0.0;
    for (&p, &t) in powers.iter().zip(times) {
        acc += p
            * (t_end * t_end + 2.0 * t * t + 2.0 * prev * prev + 2.0 * t * prev
                - 3.0 * t_end * (t + prev));
        prev = t;
    }
    Ok(acc / 12.0)
}

/// Per-sample vector of [`s_feature`] values, one per base station.
#[derive(Clone, Debug, PartialEq)]
pub struct SVector {
    pub values: Vec<f64>,
    pub sample_id: u64,
}

/// Computes the s-vector of a sample with the same energy normalization and
/// time grid used for its signature map.
pub fn svector(sample: &CirSample, config: &FeatureConfig) -> Result<SVector, DistanceError> {
    let mut values = Vec::with_capacity(sample.n_bs());
    for (bs, cir) in sample.per_bs.iter().enumerate() {
        let normalized = normalize_energy(cir).map_err(|_| FeatureError::DegenerateRow {
            sample_id: sample.sample_id,
            bs,
        })?;
        values.push(s_feature(&normalized.powers(), &config.times_for(cir))?);
    }
    Ok(SVector {
        values,
        sample_id: sample.sample_id,
    })
}

pub fn svectors(samples: &[CirSample], config: &FeatureConfig) -> Result<Vec<SVector>, DistanceError> {
    samples.par_iter().map(|s| svector(s, config)).collect()
}

/// `ℓ¹` distance between s-vectors.
pub fn signature_distance(a: &SVector, b: &SVector) -> Result<f64, DistanceError> {
    if a.values.len() != b.values.len() {
        return Err(DistanceError::LengthMismatch(a.values.len(), b.values.len()));
    }
    Ok(l1(&a.values, &b.values))
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `n_bs × n_taps` matrix of CIR tap magnitudes, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MagnitudeMap {
    pub n_bs: usize,
    pub n_taps: usize,
    pub values: Vec<f64>,
}

pub fn cir_magnitude(sample: &CirSample) -> MagnitudeMap {
    MagnitudeMap {
        n_bs: sample.n_bs(),
        n_taps: sample.n_taps(),
        values: sample
            .per_bs
            .iter()
            .flat_map(|cir| cir.taps.iter().map(|h| h.norm()))
            .collect(),
    }
}

/// Frobenius distance between CIR magnitude matrices.
pub fn cir_euclidean(a: &MagnitudeMap, b: &MagnitudeMap) -> Result<f64, DistanceError> {
    if (a.n_bs, a.n_taps) != (b.n_bs, b.n_taps) || a.values.len() != b.values.len() {
        return Err(DistanceError::ShapeMismatch((a.n_bs, a.n_taps), (b.n_bs, b.n_taps)));
    }
    Ok(l2(&a.values, &b.values))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricTag {
    Signature,
    CirEuclidean,
    Geodesic,
    TrueLocation,
    Chart,
}

impl MetricTag {
    pub fn code(self) -> u8 {
        match self {
            MetricTag::Signature => 1,
            MetricTag::CirEuclidean => 2,
            MetricTag::Geodesic => 3,
            MetricTag::TrueLocation => 4,
            MetricTag::Chart => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            1 => MetricTag::Signature,
            2 => MetricTag::CirEuclidean,
            3 => MetricTag::Geodesic,
            4 => MetricTag::TrueLocation,
            5 => MetricTag::Chart,
            _ => return None,
        })
    }
}

/// Dense symmetric `size × size` distance matrix with zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseMatrix {
    size: usize,
    metric: MetricTag,
    data: Vec<f64>,
}

impl PairwiseMatrix {
    /// Wraps raw row-major data after checking the matrix invariants.
    pub fn from_raw(size: usize, metric: MetricTag, data: Vec<f64>) -> Result<Self, DistanceError> {
        if data.len() != size * size {
            return Err(DistanceError::LengthMismatch(data.len(), size * size));
        }
        for i in 0..size {
            if data[i * size + i] != 0.0 {
                return Err(DistanceError::InvalidInput("nonzero diagonal"));
            }
            for j in (i + 1)..size {
                let v = data[i * size + j];
                if !(v >= 0.0) || !v.is_finite() || v != data[j * size + i] {
                    return Err(DistanceError::InvalidInput(
                        "entries must be finite, nonnegative and symmetric",
                    ));
                }
            }
        }
        Ok(Self { size, metric, data })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn metric(&self) -> MetricTag {
        self.metric
    }

    pub fn with_metric(mut self, metric: MetricTag) -> Self {
        self.metric = metric;
        self
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.size..(i + 1) * self.size]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Restriction to the given indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> PairwiseMatrix {
        let n = indices.len();
        let mut data = vec![0.0; n * n];
        for (a, &i) in indices.iter().enumerate() {
            for (b, &j) in indices.iter().enumerate() {
                data[a * n + b] = self.get(i, j);
            }
        }
        PairwiseMatrix {
            size: n,
            metric: self.metric,
            data,
        }
    }
}

/// Fills a pairwise matrix from a per-pair distance. Rows of the upper
/// triangle are computed in parallel; each entry depends on its pair only.
pub fn pairwise_matrix<T, F>(
    items: &[T],
    metric: MetricTag,
    dist: F,
) -> Result<PairwiseMatrix, DistanceError>
where
    T: Sync,
    F: Fn(&T, &T) -> f64 + Sync,
{
    let n = items.len();
    if n < 2 {
        return Err(DistanceError::TooFewItems(n));
    }
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| ((i + 1)..n).map(|j| dist(&items[i], &items[j])).collect())
        .collect();
    let mut data = vec![0.0; n * n];
    for (i, row) in upper.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let j = i + 1 + off;
            data[i * n + j] = v;
            data[j * n + i] = v;
        }
    }
    Ok(PairwiseMatrix {
        size: n,
        metric,
        data,
    })
}

pub fn signature_matrix(svectors: &[SVector]) -> Result<PairwiseMatrix, DistanceError> {
    if let Some(first) = svectors.first() {
        let width = first.values.len();
        if let Some(bad) = svectors.iter().find(|s| s.values.len() != width) {
            return Err(DistanceError::LengthMismatch(bad.values.len(), width));
        }
    }
    pairwise_matrix(svectors, MetricTag::Signature, |a, b| l1(&a.values, &b.values))
}

pub fn cir_euclidean_matrix(maps: &[MagnitudeMap]) -> Result<PairwiseMatrix, DistanceError> {
    if let Some(first) = maps.first() {
        if let Some(bad) = maps
            .iter()
            .find(|m| (m.n_bs, m.n_taps) != (first.n_bs, first.n_taps))
        {
            return Err(DistanceError::ShapeMismatch(
                (bad.n_bs, bad.n_taps),
                (first.n_bs, first.n_taps),
            ));
        }
    }
    pairwise_matrix(maps, MetricTag::CirEuclidean, |a, b| l2(&a.values, &b.values))
}

/// Euclidean distances between the rows of a row-major point set.
pub fn euclidean_matrix(
    coords: &[f64],
    dim: usize,
    metric: MetricTag,
) -> Result<PairwiseMatrix, DistanceError> {
    let rows: Vec<&[f64]> = coords.chunks_exact(dim).collect();
    pairwise_matrix(&rows, metric, |a, b| l2(a, b))
}

/// Divides every entry by the largest one.
pub fn normalize_matrix(m: &PairwiseMatrix) -> Result<PairwiseMatrix, DistanceError> {
    let max = m.max();
    if !(max > 0.0) {
        return Err(DistanceError::AllZero);
    }
    let data = m
        .data
        .iter()
        .map(|&v| if v == max { 1.0 } else { v / max })
        .collect();
    Ok(PairwiseMatrix {
        size: m.size,
        metric: m.metric,
        data,
    })
}

/// Symmetric k-nearest-neighbour graph over a base distance matrix.
#[derive(Clone, Debug)]
pub struct KnnGraph<'a> {
    base: &'a PairwiseMatrix,
    k: usize,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl<'a> KnnGraph<'a> {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn base(&self) -> &'a PairwiseMatrix {
        self.base
    }

    /// Neighbours of `i` with edge weights, sorted by neighbour index.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    /// Connected-component label per node, labels in order of first node.
    pub fn components(&self) -> Vec<usize> {
        connected_components(&self.adjacency)
    }
}

fn connected_components(adjacency: &[Vec<(usize, f64)>]) -> Vec<usize> {
    let n = adjacency.len();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        label[start] = next;
        while let Some(u) = stack.pop() {
            for &(v, _) in &adjacency[u] {
                if label[v] == usize::MAX {
                    label[v] = next;
                    stack.push(v);
                }
            }
        }
        next += 1;
    }
    label
}

/// Keeps an edge when either endpoint has the other among its `k` nearest
/// neighbours; ties go to the smaller index.
pub fn knn_graph(m: &PairwiseMatrix, k: usize) -> Result<KnnGraph<'_>, DistanceError> {
    let n = m.size;
    if k == 0 || k >= n {
        return Err(DistanceError::InvalidK { k, size: n });
    }
    let chosen: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = m.row(i);
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
            others.truncate(k);
            others
        })
        .collect();
    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, nbrs) in chosen.iter().enumerate() {
        for &j in nbrs {
            adjacency[i].push((j, m.get(i, j)));
            adjacency[j].push((i, m.get(i, j)));
        }
    }
    for list in &mut adjacency {
        list.sort_by_key(|&(j, _)| j);
        list.dedup_by_key(|&mut (j, _)| j);
    }
    Ok(KnnGraph {
        base: m,
        k,
        adjacency,
    })
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra(adjacency: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adjacency.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapEntry {
        dist: 0.0,
        node: source,
    });
    while let Some(HeapEntry { dist: d, node: u }) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &adjacency[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(HeapEntry { dist: nd, node: v });
            }
        }
    }
    dist
}

/// Adds, for every pair of components, the single shortest base-metric edge
/// between them. Returns the added edges.
fn bridge_components(
    adjacency: &mut [Vec<(usize, f64)>],
    base: &PairwiseMatrix,
) -> Vec<(usize, usize, f64)> {
    let label = connected_components(adjacency);
    let n_comp = label.iter().copied().max().map_or(0, |m| m + 1);
    if n_comp <= 1 {
        return Vec::new();
    }
    let n = adjacency.len();
    let mut best: HashMap<(usize, usize), (f64, usize, usize)> = HashMap::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (label[i], label[j]);
            if a == b {
                continue;
            }
            let key = (a.min(b), a.max(b));
            let d = base.get(i, j);
            let entry = best.entry(key).or_insert((d, i, j));
            if d < entry.0 {
                *entry = (d, i, j);
            }
        }
    }
    let mut edges: Vec<(usize, usize, f64)> = best.into_values().map(|(d, i, j)| (i, j, d)).collect();
    edges.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    for &(i, j, d) in &edges {
        adjacency[i].push((j, d));
        adjacency[j].push((i, d));
    }
    edges
}

/// All-pairs shortest-path distances on the k-NN graph. Disconnected
/// components are first joined by their shortest inter-component base edge.
/// The result is symmetrized with the smaller of the two directed values.
pub fn geodesic_all_pairs(graph: &KnnGraph<'_>) -> PairwiseMatrix {
    let mut adjacency = graph.adjacency.clone();
    let bridges = bridge_components(&mut adjacency, graph.base);
    if !bridges.is_empty() {
        log::warn!(
            "k-NN graph (k={}) was disconnected; added {} bridging edges",
            graph.k,
            bridges.len()
        );
    }
    let n = adjacency.len();
    let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|s| dijkstra(&adjacency, s)).collect();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = rows[i][j].min(rows[j][i]);
            data[i * n + j] = v;
            data[j * n + i] = v;
        }
    }
    PairwiseMatrix {
        size: n,
        metric: MetricTag::Geodesic,
        data,
    }
}

/// k-NN geodesic distances over a base matrix.
pub fn geodesic_matrix(base: &PairwiseMatrix, k: usize) -> Result<PairwiseMatrix, DistanceError> {
    Ok(geodesic_all_pairs(&knn_graph(base, k)?))
}

/// Frobenius distance between two matrices after each is scaled to max 1,
/// divided by the matrix size.
pub fn normalized_frobenius(a: &PairwiseMatrix, b: &PairwiseMatrix) -> Result<f64, DistanceError> {
    if a.size != b.size {
        return Err(DistanceError::LengthMismatch(a.size, b.size));
    }
    let (na, nb) = (normalize_matrix(a)?, normalize_matrix(b)?);
    Ok(l2(&na.data, &nb.data) / a.size as f64)
}
