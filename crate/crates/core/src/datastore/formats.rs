use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::binary::{Reader, Writer};
use super::{read_file, write_atomic, DataError, FORMAT_VERSION};
use crate::charting::{Chart, FeatureLayout, Layer, Network, PcaModel, Provenance, Shape};
use crate::distances::{MetricTag, PairwiseMatrix, SVector};
use crate::eval::{EvalReport, GroundTruth};
use crate::featurize::{Cir, CirSample, NormalizationStats, SignatureMap};

pub const DATASET_MAGIC: &[u8; 4] = b"SGCH";
pub const FEATURES_MAGIC: &[u8; 4] = b"SGFT";
pub const MATRIX_MAGIC: &[u8; 4] = b"SGMX";
pub const CHART_MAGIC: &[u8; 4] = b"SGCR";
pub const PCA_MAGIC: &[u8; 4] = b"SGPC";
pub const NETWORK_MAGIC: &[u8; 4] = b"SGNN";

const DTYPE_F64: u8 = 1;

/// CIRs for `D` samples with a common `N_b × N` shape.
#[derive(Clone, Debug, PartialEq)]
pub struct CirDataset {
    pub samples: Vec<CirSample>,
    pub truth: Option<GroundTruth>,
    /// Time grid shared by every CIR.
    pub times: Option<Vec<f64>>,
    pub config_hash: String,
}

impl CirDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_bs(&self) -> usize {
        self.samples.first().map_or(0, |s| s.n_bs())
    }

    pub fn n_taps(&self) -> usize {
        self.samples.first().map_or(0, |s| s.n_taps())
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let (nb, n) = (self.n_bs(), self.n_taps());
        for (i, s) in self.samples.iter().enumerate() {
            if s.n_bs() != nb || s.per_bs.iter().any(|c| c.len() != n) {
                return Err(DataError::CountMismatch {
                    offset: 0,
                    detail: format!("sample {i} is not {nb} × {n}"),
                });
            }
        }
        if let Some(t) = &self.truth {
            if t.len() != self.len() {
                return Err(DataError::CountMismatch {
                    offset: 0,
                    detail: format!("{} truth rows for {} samples", t.len(), self.len()),
                });
            }
        }
        if let Some(t) = &self.times {
            if t.len() != n {
                return Err(DataError::CountMismatch {
                    offset: 0,
                    detail: format!("{} time points for {n} taps", t.len()),
                });
            }
        }
        Ok(())
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> CirDataset {
        CirDataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            truth: self.truth.as_ref().map(|t| t.subset(indices)),
            times: self.times.clone(),
            config_hash: self.config_hash.clone(),
        }
    }
}

pub fn encode_dataset(ds: &CirDataset) -> Result<Vec<u8>, DataError> {
    ds.validate()?;
    let mut w = Writer::with_header(DATASET_MAGIC);
    w.u8(DTYPE_F64);
    w.u8(ds.truth.is_some() as u8 | (ds.times.is_some() as u8) << 1);
    w.usize(ds.len());
    w.usize(ds.n_bs());
    w.usize(ds.n_taps());
    w.u32(ds.truth.as_ref().map_or(0, |t| t.dim as u32));
    w.u32(0);
    w.str(&ds.config_hash);
    for s in &ds.samples {
        for cir in &s.per_bs {
            for t in &cir.taps {
                w.f64s(&[t.re, t.im]);
            }
        }
    }
    for s in &ds.samples {
        w.u64(s.sample_id);
    }
    if let Some(t) = &ds.truth {
        w.f64s(&t.coords);
    }
    if let Some(t) = &ds.times {
        w.f64s(t);
    }
    Ok(w.buf)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<CirDataset, DataError> {
    let mut r = Reader::open(bytes, DATASET_MAGIC)?;
    let at = r.pos;
    let dtype = r.u8()?;
    if dtype != DTYPE_F64 {
        return Err(DataError::Invalid { offset: at, detail: format!("unsupported dtype {dtype}") });
    }
    let flags = r.u8()?;
    let (d, nb, n) = (r.usize()?, r.usize()?, r.usize()?);
    let truth_dim = r.u32()? as usize;
    r.u32()?;
    let config_hash = r.str()?;
    let total = r.product(&[d, nb, n, 2])?;
    let raw = r.f64s(total)?;
    let ids = r.u64s(d)?;
    let truth = if flags & 1 != 0 {
        let at = r.pos;
        let coords = r.f64s(r.product(&[d, truth_dim])?)?;
        Some(GroundTruth::new(truth_dim, coords).map_err(|e| DataError::Invalid { offset: at, detail: e.to_string() })?)
    } else {
        None
    };
    let times = if flags & 2 != 0 { Some(r.f64s(n)?) } else { None };
    r.finish()?;
    let per_sample = nb * n * 2;
    let samples = (0..d)
        .map(|i| CirSample {
            per_bs: (0..nb)
                .map(|b| {
                    let base = i * per_sample + b * n * 2;
                    Cir::new(raw[base..base + 2 * n].chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect())
                })
                .collect(),
            sample_id: ids[i],
        })
        .collect();
    Ok(CirDataset { samples, truth, times, config_hash })
}

pub fn save_dataset(path: &Path, ds: &CirDataset) -> Result<(), DataError> {
    write_atomic(path, &encode_dataset(ds)?)
}

pub fn load_dataset(path: &Path) -> Result<CirDataset, DataError> {
    decode_dataset(&read_file(path)?)
}

/// Signature maps of a dataset, optionally normalized, with the s-vectors
/// computed alongside them.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    pub level: usize,
    pub maps: Vec<SignatureMap>,
    pub svectors: Option<Vec<SVector>>,
    /// Statistics applied to `maps`, if any.
    pub normalization: Option<NormalizationStats>,
    pub config_hash: String,
    pub dataset_hash: String,
}

pub fn encode_features(fs: &FeatureSet) -> Result<Vec<u8>, DataError> {
    let nb = fs.maps.first().map_or(0, |m| m.n_bs);
    let l = fs.maps.first().map_or(0, |m| m.n_features);
    if fs.maps.iter().any(|m| m.n_bs != nb || m.n_features != l || m.values.len() != nb * l) {
        return Err(DataError::CountMismatch { offset: 0, detail: "signature maps differ in shape".into() });
    }
    if let Some(sv) = &fs.svectors {
        if sv.len() != fs.maps.len() || sv.iter().any(|s| s.values.len() != nb) {
            return Err(DataError::CountMismatch { offset: 0, detail: "s-vectors do not match maps".into() });
        }
    }
    let mut w = Writer::with_header(FEATURES_MAGIC);
    w.u8(fs.normalization.is_some() as u8 | (fs.svectors.is_some() as u8) << 1);
    w.u8(0);
    w.u32(fs.level as u32);
    w.usize(fs.maps.len());
    w.usize(nb);
    w.usize(l);
    w.str(&fs.config_hash);
    w.str(&fs.dataset_hash);
    for m in &fs.maps {
        w.f64s(&m.values);
    }
    for m in &fs.maps {
        w.u64(m.sample_id);
    }
    if let Some(st) = &fs.normalization {
        w.f64s(&st.mean);
        w.f64s(&st.std);
    }
    if let Some(sv) = &fs.svectors {
        for s in sv {
            w.f64s(&s.values);
        }
    }
    Ok(w.buf)
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureSet, DataError> {
    let mut r = Reader::open(bytes, FEATURES_MAGIC)?;
    let flags = r.u8()?;
    r.u8()?;
    let level = r.u32()? as usize;
    let (d, nb, l) = (r.usize()?, r.usize()?, r.usize()?);
    let config_hash = r.str()?;
    let dataset_hash = r.str()?;
    let values = r.f64s(r.product(&[d, nb, l])?)?;
    let ids = r.u64s(d)?;
    let normalization = if flags & 1 != 0 {
        let per = r.product(&[nb, l])?;
        Some(NormalizationStats { n_bs: nb, n_features: l, mean: r.f64s(per)?, std: r.f64s(per)? })
    } else {
        None
    };
    let sv = if flags & 2 != 0 { Some(r.f64s(r.product(&[d, nb])?)?) } else { None };
    r.finish()?;
    let per = nb * l;
    let maps = (0..d)
        .map(|i| SignatureMap {
            n_bs: nb,
            n_features: l,
            values: values[i * per..(i + 1) * per].to_vec(),
            sample_id: ids[i],
        })
        .collect();
    let svectors = sv.map(|sv| {
        (0..d)
            .map(|i| SVector { values: sv[i * nb..(i + 1) * nb].to_vec(), sample_id: ids[i] })
            .collect()
    });
    Ok(FeatureSet { level, maps, svectors, normalization, config_hash, dataset_hash })
}

pub fn save_features(path: &Path, fs: &FeatureSet) -> Result<(), DataError> {
    write_atomic(path, &encode_features(fs)?)
}

pub fn load_features(path: &Path) -> Result<FeatureSet, DataError> {
    decode_features(&read_file(path)?)
}

pub fn encode_matrix(m: &PairwiseMatrix, config_hash: &str) -> Vec<u8> {
    let mut w = Writer::with_header(MATRIX_MAGIC);
    w.u8(m.metric().code());
    w.u8(0);
    w.usize(m.size());
    w.str(config_hash);
    w.f64s(m.data());
    w.buf
}

pub fn decode_matrix(bytes: &[u8]) -> Result<(PairwiseMatrix, String), DataError> {
    let mut r = Reader::open(bytes, MATRIX_MAGIC)?;
    let at = r.pos;
    let code = r.u8()?;
    let metric = MetricTag::from_code(code)
        .ok_or_else(|| DataError::Invalid { offset: at, detail: format!("unknown metric code {code}") })?;
    r.u8()?;
    let size = r.usize()?;
    let hash = r.str()?;
    let at = r.pos;
    let data = r.f64s(r.product(&[size, size])?)?;
    r.finish()?;
    let m = PairwiseMatrix::from_raw(size, metric, data)
        .map_err(|e| DataError::Invalid { offset: at, detail: e.to_string() })?;
    Ok((m, hash))
}

pub fn save_matrix(path: &Path, m: &PairwiseMatrix, config_hash: &str) -> Result<(), DataError> {
    write_atomic(path, &encode_matrix(m, config_hash))
}

pub fn load_matrix(path: &Path) -> Result<(PairwiseMatrix, String), DataError> {
    decode_matrix(&read_file(path)?)
}

pub fn encode_chart(chart: &Chart) -> Vec<u8> {
    let mut w = Writer::with_header(CHART_MAGIC);
    w.u32(chart.dim as u32);
    w.usize(chart.len());
    w.str(&chart.provenance.method);
    w.str(&chart.provenance.config_hash);
    w.str(&chart.provenance.dataset_hash);
    w.f64s(&chart.coords);
    w.buf
}

pub fn decode_chart(bytes: &[u8]) -> Result<Chart, DataError> {
    let mut r = Reader::open(bytes, CHART_MAGIC)?;
    let dim = r.u32()? as usize;
    let n = r.usize()?;
    let method = r.str()?;
    let config_hash = r.str()?;
    let dataset_hash = r.str()?;
    let at = r.pos;
    let coords = r.f64s(r.product(&[n, dim])?)?;
    r.finish()?;
    let mut chart = Chart::new(dim, coords, &method).map_err(|e| DataError::Invalid { offset: at, detail: e.to_string() })?;
    chart.provenance = Provenance { method, config_hash, dataset_hash };
    Ok(chart)
}

pub fn save_chart(path: &Path, chart: &Chart) -> Result<(), DataError> {
    write_atomic(path, &encode_chart(chart))
}

pub fn load_chart(path: &Path) -> Result<Chart, DataError> {
    decode_chart(&read_file(path)?)
}

/// One row per sample; columns `x0, x1, …`.
pub fn export_chart_csv(path: &Path, chart: &Chart) -> Result<(), DataError> {
    let mut out = (0..chart.dim).map(|k| format!("x{k}")).collect::<Vec<_>>().join(",");
    out.push('\n');
    for i in 0..chart.len() {
        let row: Vec<String> = chart.point(i).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn encode_pca(model: &PcaModel, config_hash: &str) -> Vec<u8> {
    let mut w = Writer::with_header(PCA_MAGIC);
    w.u8(model.layout.code());
    w.u8(0);
    w.usize(model.dim);
    w.usize(model.n_components());
    w.str(config_hash);
    w.f64s(&model.mean);
    w.f64s(&model.components);
    w.f64_vec(&model.eigenvalues);
    w.buf
}

pub fn decode_pca(bytes: &[u8]) -> Result<(PcaModel, String), DataError> {
    let mut r = Reader::open(bytes, PCA_MAGIC)?;
    let at = r.pos;
    let code = r.u8()?;
    let layout = FeatureLayout::from_code(code)
        .ok_or_else(|| DataError::Invalid { offset: at, detail: format!("unknown layout code {code}") })?;
    r.u8()?;
    let dim = r.usize()?;
    let nc = r.usize()?;
    let hash = r.str()?;
    let mean = r.f64s(dim)?;
    let components = r.f64s(r.product(&[nc, dim])?)?;
    let eigenvalues = r.f64_vec()?;
    r.finish()?;
    Ok((PcaModel { layout, dim, mean, components, eigenvalues }, hash))
}

pub fn save_pca(path: &Path, model: &PcaModel, config_hash: &str) -> Result<(), DataError> {
    write_atomic(path, &encode_pca(model, config_hash))
}

pub fn load_pca(path: &Path) -> Result<(PcaModel, String), DataError> {
    decode_pca(&read_file(path)?)
}

/// A trained network with the feature normalization it expects.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkFile {
    pub network: Network,
    pub normalization: Option<NormalizationStats>,
    pub config_hash: String,
}

const LAYER_CONV: u8 = 0;
const LAYER_BN: u8 = 1;
const LAYER_RELU: u8 = 2;
const LAYER_POOL: u8 = 3;
const LAYER_DENSE: u8 = 4;

pub fn encode_network(file: &NetworkFile) -> Vec<u8> {
    let net = &file.network;
    let mut w = Writer::with_header(NETWORK_MAGIC);
    w.usize(net.input.channels);
    w.usize(net.input.height);
    w.usize(net.input.width);
    w.u32(net.layers.len() as u32);
    w.str(&file.config_hash);
    for layer in &net.layers {
        match layer {
            Layer::Conv2d { in_channels, out_channels, kernel, weight, bias } => {
                w.u8(LAYER_CONV);
                w.usize(*in_channels);
                w.usize(*out_channels);
                w.usize(kernel.0);
                w.usize(kernel.1);
                w.f64s(weight);
                w.f64s(bias);
            }
            Layer::BatchNorm2d { channels, gamma, beta, running_mean, running_var } => {
                w.u8(LAYER_BN);
                w.usize(*channels);
                for v in [gamma, beta, running_mean, running_var] {
                    w.f64s(v);
                }
            }
            Layer::Relu => w.u8(LAYER_RELU),
            Layer::ChannelMeanPool => w.u8(LAYER_POOL),
            Layer::Dense { inputs, outputs, weight, bias } => {
                w.u8(LAYER_DENSE);
                w.usize(*inputs);
                w.usize(*outputs);
                w.f64s(weight);
                w.f64s(bias);
            }
        }
    }
    match &file.normalization {
        Some(st) => {
            w.u8(1);
            w.usize(st.n_bs);
            w.usize(st.n_features);
            w.f64s(&st.mean);
            w.f64s(&st.std);
        }
        None => w.u8(0),
    }
    w.buf
}

pub fn decode_network(bytes: &[u8]) -> Result<NetworkFile, DataError> {
    let mut r = Reader::open(bytes, NETWORK_MAGIC)?;
    let input = Shape::new(r.usize()?, r.usize()?, r.usize()?);
    let n_layers = r.u32()? as usize;
    let config_hash = r.str()?;
    let mut layers = Vec::new();
    for _ in 0..n_layers {
        let at = r.pos;
        let layer = match r.u8()? {
            LAYER_CONV => {
                let (i, o, kh, kw) = (r.usize()?, r.usize()?, r.usize()?, r.usize()?);
                Layer::Conv2d {
                    in_channels: i,
                    out_channels: o,
                    kernel: (kh, kw),
                    weight: r.f64s(r.product(&[o, i, kh, kw])?)?,
                    bias: r.f64s(o)?,
                }
            }
            LAYER_BN => {
                let c = r.usize()?;
                Layer::BatchNorm2d {
                    channels: c,
                    gamma: r.f64s(c)?,
                    beta: r.f64s(c)?,
                    running_mean: r.f64s(c)?,
                    running_var: r.f64s(c)?,
                }
            }
            LAYER_RELU => Layer::Relu,
            LAYER_POOL => Layer::ChannelMeanPool,
            LAYER_DENSE => {
                let (i, o) = (r.usize()?, r.usize()?);
                Layer::Dense { inputs: i, outputs: o, weight: r.f64s(r.product(&[i, o])?)?, bias: r.f64s(o)? }
            }
            kind => return Err(DataError::Invalid { offset: at, detail: format!("unknown layer kind {kind}") }),
        };
        layers.push(layer);
    }
    let normalization = if r.u8()? == 1 {
        let (nb, l) = (r.usize()?, r.usize()?);
        let per = r.product(&[nb, l])?;
        Some(NormalizationStats { n_bs: nb, n_features: l, mean: r.f64s(per)?, std: r.f64s(per)? })
    } else {
        None
    };
    r.finish()?;
    let network = Network::new(input, layers).map_err(|e| DataError::Invalid { offset: 6, detail: e.to_string() })?;
    Ok(NetworkFile { network, normalization, config_hash })
}

pub fn save_network(path: &Path, file: &NetworkFile) -> Result<(), DataError> {
    write_atomic(path, &encode_network(file))
}

pub fn load_network(path: &Path) -> Result<NetworkFile, DataError> {
    decode_network(&read_file(path)?)
}

#[derive(Serialize, Deserialize)]
struct ReportFile {
    format_version: u16,
    #[serde(flatten)]
    report: EvalReport,
}

pub fn encode_report(report: &EvalReport) -> String {
    let file = ReportFile { format_version: FORMAT_VERSION, report: report.clone() };
    let mut s = serde_json::to_string_pretty(&file).expect("report serializes");
    s.push('\n');
    s
}

pub fn decode_report(text: &str) -> Result<EvalReport, DataError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| DataError::Json(e.to_string()))?;
    let found = value.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0);
    if found != FORMAT_VERSION as u64 {
        return Err(DataError::UnsupportedVersion { found: found as u16, supported: FORMAT_VERSION });
    }
    let file: ReportFile = serde_json::from_value(value).map_err(|e| DataError::Json(e.to_string()))?;
    Ok(file.report)
}

pub fn save_report(path: &Path, report: &EvalReport) -> Result<(), DataError> {
    write_atomic(path, encode_report(report).as_bytes())
}

pub fn load_report(path: &Path) -> Result<EvalReport, DataError> {
    let bytes = read_file(path)?;
    decode_report(&String::from_utf8_lossy(&bytes))
}
