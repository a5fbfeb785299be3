//! CSV interchange for externally measured CIR datasets.
//!
//! Leading zero taps (for example time-of-arrival alignment baked into a
//! public dataset) are carried through unchanged.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{write_atomic, CirDataset, DataError};
use crate::eval::GroundTruth;
use crate::featurize::{Cir, CirSample};

/// Column mapping of a CIR CSV file. Column indices are 0-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CsvLayout {
    /// One row per `(sample, bs, tap)`. Missing taps are zero.
    Long {
        sample: usize,
        bs: usize,
        tap: usize,
        re: usize,
        /// Absent for real-valued data.
        im: Option<usize>,
        header: bool,
    },
    /// One row per sample: `n_bs · n_taps` values starting at `first_value`,
    /// BS-major, each tap as `re, im` (or `re` alone when `real_only`).
    Wide {
        n_bs: usize,
        n_taps: usize,
        sample: Option<usize>,
        first_value: usize,
        real_only: bool,
        header: bool,
    },
}

/// Column mapping of a ground-truth CSV file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthLayout {
    /// Sample id column; rows are matched to samples in order when absent.
    pub sample: Option<usize>,
    pub coords: Vec<usize>,
    pub header: bool,
}

fn csv_error(row: usize, detail: impl Into<String>) -> DataError {
    DataError::Csv { row, detail: detail.into() }
}

fn open_reader(path: &Path, header: bool) -> Result<csv::Reader<std::fs::File>, DataError> {
    csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => DataError::Io { path: path.to_path_buf(), source: io },
            other => csv_error(0, format!("{other:?}")),
        })
}

struct Row {
    line: usize,
    record: csv::StringRecord,
}

impl Row {
    fn field(&self, col: usize) -> Result<&str, DataError> {
        self.record
            .get(col)
            .ok_or_else(|| csv_error(self.line, format!("ragged row: {} columns, column {col} required", self.record.len())))
    }

    fn float(&self, col: usize) -> Result<f64, DataError> {
        let s = self.field(col)?;
        let v: f64 = s
            .parse()
            .map_err(|_| csv_error(self.line, format!("column {col}: {s:?} is not a number")))?;
        if !v.is_finite() {
            return Err(csv_error(self.line, format!("column {col}: non-finite value {s}")));
        }
        Ok(v)
    }

    fn index(&self, col: usize) -> Result<u64, DataError> {
        let s = self.field(col)?;
        s.parse::<u64>()
            .or_else(|_| match s.parse::<f64>() {
                Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < u64::MAX as f64 => Ok(v as u64),
                _ => Err(()),
            })
            .map_err(|_| csv_error(self.line, format!("column {col}: {s:?} is not a nonnegative integer")))
    }
}

fn rows(path: &Path, header: bool) -> Result<Vec<Row>, DataError> {
    let mut reader = open_reader(path, header)?;
    let mut out = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            csv_error(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        out.push(Row { line, record });
    }
    Ok(out)
}

fn read_long(rows: &[Row], sample: usize, bs: usize, tap: usize, re: usize, im: Option<usize>) -> Result<(Vec<u64>, Vec<CirSample>), DataError> {
    let mut entries: BTreeMap<u64, BTreeMap<(usize, usize), Complex64>> = BTreeMap::new();
    let (mut nb, mut n) = (0, 0);
    for row in rows {
        let id = row.index(sample)?;
        let b = row.index(bs)? as usize;
        let t = row.index(tap)? as usize;
        let value = Complex64::new(row.float(re)?, im.map(|c| row.float(c)).transpose()?.unwrap_or(0.0));
        if entries.entry(id).or_default().insert((b, t), value).is_some() {
            return Err(csv_error(row.line, format!("duplicate entry for sample {id}, bs {b}, tap {t}")));
        }
        nb = nb.max(b + 1);
        n = n.max(t + 1);
    }
    let ids: Vec<u64> = entries.keys().copied().collect();
    let samples = entries
        .into_iter()
        .map(|(id, taps)| {
            let mut per_bs = vec![vec![Complex64::new(0.0, 0.0); n]; nb];
            for ((b, t), v) in taps {
                per_bs[b][t] = v;
            }
            CirSample { per_bs: per_bs.into_iter().map(Cir::new).collect(), sample_id: id }
        })
        .collect();
    Ok((ids, samples))
}

fn read_wide(
    rows: &[Row],
    n_bs: usize,
    n_taps: usize,
    sample: Option<usize>,
    first_value: usize,
    real_only: bool,
) -> Result<(Vec<u64>, Vec<CirSample>), DataError> {
    let per_tap = if real_only { 1 } else { 2 };
    let width = first_value + n_bs * n_taps * per_tap;
    let mut ids = Vec::with_capacity(rows.len());
    let mut samples = Vec::with_capacity(rows.len());
    for (k, row) in rows.iter().enumerate() {
        if row.record.len() < width {
            return Err(csv_error(row.line, format!("ragged row: {} columns, {width} required", row.record.len())));
        }
        let id = match sample {
            Some(c) => row.index(c)?,
            None => k as u64,
        };
        let mut per_bs = Vec::with_capacity(n_bs);
        for b in 0..n_bs {
            let mut taps = Vec::with_capacity(n_taps);
            for t in 0..n_taps {
                let col = first_value + (b * n_taps + t) * per_tap;
                let im = if real_only { 0.0 } else { row.float(col + 1)? };
                taps.push(Complex64::new(row.float(col)?, im));
            }
            per_bs.push(Cir::new(taps));
        }
        ids.push(id);
        samples.push(CirSample { per_bs, sample_id: id });
    }
    Ok((ids, samples))
}

fn read_truth(path: &Path, layout: &TruthLayout, ids: &[u64]) -> Result<GroundTruth, DataError> {
    let rows = rows(path, layout.header)?;
    let dim = layout.coords.len();
    if dim == 0 {
        return Err(csv_error(0, "truth layout lists no coordinate columns"));
    }
    let mut by_id: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    let mut ordered = Vec::new();
    for (k, row) in rows.iter().enumerate() {
        let coords = layout.coords.iter().map(|&c| row.float(c)).collect::<Result<Vec<_>, _>>()?;
        match layout.sample {
            Some(c) => {
                let id = row.index(c)?;
                if by_id.insert(id, coords).is_some() {
                    return Err(csv_error(row.line, format!("duplicate truth for sample {id}")));
                }
            }
            None => {
                if k >= ids.len() {
                    return Err(csv_error(row.line, format!("more truth rows than the {} samples", ids.len())));
                }
                ordered.extend(coords);
            }
        }
    }
    if layout.sample.is_some() {
        for id in ids {
            let c = by_id.get(id).ok_or_else(|| csv_error(0, format!("no truth row for sample {id}")))?;
            ordered.extend_from_slice(c);
        }
    } else if ordered.len() != ids.len() * dim {
        return Err(csv_error(0, format!("{} truth rows for {} samples", ordered.len() / dim, ids.len())));
    }
    GroundTruth::new(dim, ordered).map_err(|e| csv_error(0, e.to_string()))
}

/// Reads a CIR CSV (and optionally its ground truth) into a dataset.
pub fn import_csv(
    cir_path: &Path,
    truth: Option<(&Path, &TruthLayout)>,
    layout: &CsvLayout,
) -> Result<CirDataset, DataError> {
    let header = match layout {
        CsvLayout::Long { header, .. } | CsvLayout::Wide { header, .. } => *header,
    };
    let rows = rows(cir_path, header)?;
    if rows.is_empty() {
        return Err(csv_error(0, "no data rows"));
    }
    let (ids, samples) = match *layout {
        CsvLayout::Long { sample, bs, tap, re, im, .. } => read_long(&rows, sample, bs, tap, re, im)?,
        CsvLayout::Wide { n_bs, n_taps, sample, first_value, real_only, .. } => {
            read_wide(&rows, n_bs, n_taps, sample, first_value, real_only)?
        }
    };
    let truth = truth.map(|(p, l)| read_truth(p, l, &ids)).transpose()?;
    let ds = CirDataset { samples, truth, times: None, config_hash: String::new() };
    ds.validate()?;
    Ok(ds)
}

fn csv_line(cells: Vec<String>) -> String {
    let mut s = cells.join(",");
    s.push('\n');
    s
}

fn place(width: usize, entries: &[(usize, String)]) -> Vec<String> {
    let mut cells = vec![String::new(); width];
    for (c, v) in entries {
        cells[*c] = v.clone();
    }
    cells
}

/// Writes a dataset in the given layout; the inverse of [`import_csv`].
pub fn export_csv(
    ds: &CirDataset,
    cir_path: &Path,
    truth: Option<(&Path, &TruthLayout)>,
    layout: &CsvLayout,
) -> Result<(), DataError> {
    let mut out = String::new();
    match *layout {
        CsvLayout::Long { sample, bs, tap, re, im, header } => {
            let mut names = vec![(sample, "sample"), (bs, "bs"), (tap, "tap"), (re, "re")];
            names.extend(im.map(|c| (c, "im")));
            let width = names.iter().map(|n| n.0).max().unwrap_or(0) + 1;
            if header {
                out.push_str(&csv_line(place(width, &names.iter().map(|(c, n)| (*c, n.to_string())).collect::<Vec<_>>())));
            }
            for s in &ds.samples {
                for (b, cir) in s.per_bs.iter().enumerate() {
                    for (t, v) in cir.taps.iter().enumerate() {
                        let mut e = vec![
                            (sample, s.sample_id.to_string()),
                            (bs, b.to_string()),
                            (tap, t.to_string()),
                            (re, v.re.to_string()),
                        ];
                        e.extend(im.map(|c| (c, v.im.to_string())));
                        out.push_str(&csv_line(place(width, &e)));
                    }
                }
            }
        }
        CsvLayout::Wide { n_bs, n_taps, sample, first_value, real_only, header } => {
            if ds.n_bs() != n_bs || ds.n_taps() != n_taps {
                return Err(DataError::CountMismatch {
                    offset: 0,
                    detail: format!("dataset is {} × {}, layout expects {n_bs} × {n_taps}", ds.n_bs(), ds.n_taps()),
                });
            }
            let per_tap = if real_only { 1 } else { 2 };
            let width = (first_value + n_bs * n_taps * per_tap).max(sample.map_or(0, |c| c + 1));
            if header {
                let mut e: Vec<(usize, String)> = sample.map(|c| (c, "sample".to_string())).into_iter().collect();
                for b in 0..n_bs {
                    for t in 0..n_taps {
                        let col = first_value + (b * n_taps + t) * per_tap;
                        e.push((col, format!("re_{b}_{t}")));
                        if !real_only {
                            e.push((col + 1, format!("im_{b}_{t}")));
                        }
                    }
                }
                out.push_str(&csv_line(place(width, &e)));
            }
            for s in &ds.samples {
                let mut e: Vec<(usize, String)> = sample.map(|c| (c, s.sample_id.to_string())).into_iter().collect();
                for (b, cir) in s.per_bs.iter().enumerate() {
                    for (t, v) in cir.taps.iter().enumerate() {
                        let col = first_value + (b * n_taps + t) * per_tap;
                        e.push((col, v.re.to_string()));
                        if !real_only {
                            e.push((col + 1, v.im.to_string()));
                        }
                    }
                }
                out.push_str(&csv_line(place(width, &e)));
            }
        }
    }
    write_atomic(cir_path, out.as_bytes())?;

    if let Some((path, tl)) = truth {
        let t = ds.truth.as_ref().ok_or_else(|| DataError::CountMismatch {
            offset: 0,
            detail: "dataset has no ground truth to export".into(),
        })?;
        if tl.coords.len() != t.dim {
            return Err(DataError::CountMismatch {
                offset: 0,
                detail: format!("truth layout has {} columns, truth has dimension {}", tl.coords.len(), t.dim),
            });
        }
        let width = tl.coords.iter().chain(tl.sample.iter()).max().unwrap_or(&0) + 1;
        let mut text = String::new();
        if tl.header {
            let mut e: Vec<(usize, String)> = tl.sample.map(|c| (c, "sample".to_string())).into_iter().collect();
            e.extend(tl.coords.iter().enumerate().map(|(k, &c)| (c, format!("x{k}"))));
            text.push_str(&csv_line(place(width, &e)));
        }
        for (i, s) in ds.samples.iter().enumerate() {
            let mut e: Vec<(usize, String)> = tl.sample.map(|c| (c, s.sample_id.to_string())).into_iter().collect();
            e.extend(tl.coords.iter().zip(t.point(i)).map(|(&c, v)| (c, v.to_string())));
            text.push_str(&csv_line(place(width, &e)));
        }
        write_atomic(path, text.as_bytes())?;
    }
    Ok(())
}
