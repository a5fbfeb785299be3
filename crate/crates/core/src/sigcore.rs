//! Truncated tensor algebra, path signatures and Lyndon-basis log-signatures.
//!
//! A signature truncated at level `K` over `R^d` is stored densely: level `k`
//! holds `d^k` coefficients indexed row-major by the multi-index
//! `(i_1, ..., i_k)` with `i_1` the most significant letter. The level-0
//! coefficient of a group-like element is always 1 and is never stored.
//!
//! Log-signatures are expressed in the Lyndon basis of the free Lie algebra.
//! Each Lyndon word `w` carries its standard bracketing `P_w`, whose
//! expansion in the tensor algebra is `w` plus words strictly greater than `w`
//! (lexicographically, same length). Projection from the tensor logarithm to
//! Lyndon coordinates is therefore a forward substitution, precomputed once
//! per `(d, K)` and shared through a process-wide cache.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SigError {
    #[error("path needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("point {index} has {got} coordinates, expected {expected}")]
    PointDimension {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("non-finite coordinate in point {0}")]
    NonFinite(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("truncation level mismatch: {0} vs {1}")]
    LevelMismatch(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

/// A word over the alphabet `{1..d}`; letters are stored 1-based.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word(pub Vec<usize>);

impl Word {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn letters(&self) -> &[usize] {
        &self.0
    }

    /// Row-major offset of this word within its level of a dense tensor.
    pub fn tensor_index(&self, dim: usize) -> usize {
        self.0.iter().fold(0, |acc, &l| acc * dim + (l - 1))
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 && self.0.iter().any(|&x| x > 9) {
                write!(f, ",")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, "]")
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl From<&[usize]> for Word {
    fn from(letters: &[usize]) -> Self {
        Word(letters.to_vec())
    }
}

/// All Lyndon words over `{1..dim}` of length at most `level`, ordered by
/// length and then lexicographically.
///
/// Generation uses Duval's successor algorithm, which visits Lyndon words in
/// lexicographic order.
pub fn lyndon_words(dim: usize, level: usize) -> Vec<Word> {
    if dim == 0 || level == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut w: Vec<usize> = vec![0];
    loop {
        out.push(Word(w.iter().map(|&l| l + 1).collect()));
        // Duval: extend periodically to length `level`, strip trailing max
        // letters, increment the last one.
        let m = w.len();
        while w.len() < level {
            let c = w[w.len() - m];
            w.push(c);
        }
        while let Some(&last) = w.last() {
            if last == dim - 1 {
                w.pop();
            } else {
                break;
            }
        }
        match w.last_mut() {
            Some(last) => *last += 1,
            None => break,
        }
    }
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

fn pow(dim: usize, k: usize) -> usize {
    dim.pow(k as u32)
}

/// Dense element of the truncated tensor algebra, level 0 included.
#[derive(Clone, Debug, PartialEq)]
struct Tensor {
    dim: usize,
    levels: Vec<Vec<f64>>,
}

impl Tensor {
    fn zeros(dim: usize, level: usize) -> Self {
        let levels = (0..=level).map(|k| vec![0.0; pow(dim, k)]).collect();
        Self { dim, levels }
    }

    fn level(&self) -> usize {
        self.levels.len() - 1
    }

    fn mul(&self, other: &Tensor) -> Tensor {
        let dim = self.dim;
        let depth = self.level();
        let mut out = Tensor::zeros(dim, depth);
        for k in 0..=depth {
            let dst = &mut out.levels[k];
            for j in 0..=k {
                let a = &self.levels[j];
                let b = &other.levels[k - j];
                let stride = b.len();
                for (ia, &av) in a.iter().enumerate() {
                    if av == 0.0 {
                        continue;
                    }
                    let row = &mut dst[ia * stride..(ia + 1) * stride];
                    for (d, &bv) in row.iter_mut().zip(b) {
                        *d += av * bv;
                    }
                }
            }
        }
        out
    }

    fn scale_add(&mut self, other: &Tensor, alpha: f64) {
        for (dst, src) in self.levels.iter_mut().zip(&other.levels) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
    }

    fn identity(dim: usize, level: usize) -> Self {
        let mut t = Tensor::zeros(dim, level);
        t.levels[0][0] = 1.0;
        t
    }

    /// `exp(x)` for an element with zero scalar part; the series stops at
    /// the truncation level.
    fn exp(&self) -> Tensor {
        let depth = self.level();
        let mut result = Tensor::identity(self.dim, depth);
        let mut term = Tensor::identity(self.dim, depth);
        for m in 1..=depth {
            term = term.mul(self);
            result.scale_add(&term, 1.0 / factorial(m));
        }
        result
    }

    /// `log(1 + x)` for an element with zero scalar part.
    fn log1p(&self) -> Tensor {
        let depth = self.level();
        let mut result = Tensor::zeros(self.dim, depth);
        let mut power = self.clone();
        for m in 1..=depth {
            let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
            result.scale_add(&power, sign / m as f64);
            if m < depth {
                power = power.mul(self);
            }
        }
        result
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// A piecewise-linear path in `R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    dim: usize,
    coords: Vec<f64>,
}

impl Path {
    pub fn new(dim: usize, points: &[Vec<f64>]) -> Result<Self, SigError> {
        if dim == 0 {
            return Err(SigError::InvalidParameter("path dimension must be positive"));
        }
        let mut coords = Vec::with_capacity(points.len() * dim);
        for (index, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(SigError::PointDimension {
                    index,
                    got: p.len(),
                    expected: dim,
                });
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(dim, coords)
    }

    /// Builds a path from row-major coordinates, `dim` values per point.
    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self, SigError> {
        if dim == 0 {
            return Err(SigError::InvalidParameter("path dimension must be positive"));
        }
        if coords.len() % dim != 0 {
            return Err(SigError::PointDimension {
                index: coords.len() / dim,
                got: coords.len() % dim,
                expected: dim,
            });
        }
        let n = coords.len() / dim;
        if n < 2 {
            return Err(SigError::TooFewPoints(n));
        }
        if let Some(i) = coords.iter().position(|v| !v.is_finite()) {
            return Err(SigError::NonFinite(i / dim));
        }
        Ok(Self { dim, coords })
    }

    pub fn dim(&self) -> usize {
        self.dim
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

    pub fn increments(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (1..self.len()).map(move |i| {
            self.point(i)
                .iter()
                .zip(self.point(i - 1))
                .map(|(b, a)| b - a)
                .collect()
        })
    }
}

/// Signature truncated at `level`, levels `1..=level` stored densely.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedSignature {
    dim: usize,
    level: usize,
    tensors: Vec<Vec<f64>>,
}

impl TruncatedSignature {
    /// Signature of the constant path, the neutral element for
    /// [`chen_concat`].
    pub fn identity(dim: usize, level: usize) -> Self {
        Self {
            dim,
            level,
            tensors: (1..=level).map(|k| vec![0.0; pow(dim, k)]).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Coefficients of level `k` (1-based).
    pub fn tensor(&self, k: usize) -> &[f64] {
        &self.tensors[k - 1]
    }

    /// Coefficient `S_{i_1...i_k}` for a 1-based multi-index; the empty word
    /// gives the level-0 coefficient 1.
    pub fn coeff(&self, word: &[usize]) -> f64 {
        if word.is_empty() {
            return 1.0;
        }
        self.tensors[word.len() - 1][Word(word.to_vec()).tensor_index(self.dim)]
    }

    fn to_tensor(&self) -> Tensor {
        let mut levels = Vec::with_capacity(self.level + 1);
        levels.push(vec![1.0]);
        levels.extend(self.tensors.iter().cloned());
        Tensor {
            dim: self.dim,
            levels,
        }
    }

    fn from_tensor(t: Tensor) -> Self {
        let level = t.level();
        let mut levels = t.levels;
        levels.remove(0);
        Self {
            dim: t.dim,
            level,
            tensors: levels,
        }
    }

    /// In-place right multiplication by the exponential of a single segment
    /// increment: `self <- self ⊗ exp(delta)`.
    fn extend_by_segment(&mut self, delta: &[f64], scratch: &mut [Vec<f64>]) {
        let dim = self.dim;
        // scratch[m] = delta^{⊗m} / m!
        scratch[0][0] = 1.0;
        for m in 1..=self.level {
            let (prev, cur) = scratch.split_at_mut(m);
            let prev = &prev[m - 1];
            let cur = &mut cur[0];
            let inv = 1.0 / m as f64;
            for (i, &p) in prev.iter().enumerate() {
                for (j, &d) in delta.iter().enumerate() {
                    cur[i * dim + j] = p * d * inv;
                }
            }
        }
        // Descending levels so lower levels still hold their old values.
        for k in (1..=self.level).rev() {
            let (lower, upper) = self.tensors.split_at_mut(k - 1);
            let dst = &mut upper[0];
            for (d, s) in dst.iter_mut().zip(&scratch[k]) {
                *d += s;
            }
            for j in 1..k {
                let a = &lower[j - 1];
                let b = &scratch[k - j];
                let stride = b.len();
                for (ia, &av) in a.iter().enumerate() {
                    if av == 0.0 {
                        continue;
                    }
                    for (d, &bv) in dst[ia * stride..(ia + 1) * stride].iter_mut().zip(b) {
                        *d += av * bv;
                    }
                }
            }
        }
    }
}

/// Exact signature of the straight segment with the given displacement:
/// level `k` is `delta^{⊗k} / k!`.
pub fn segment_signature(delta: &[f64], level: usize) -> TruncatedSignature {
    let mut sig = TruncatedSignature::identity(delta.len(), level);
    let mut scratch = scratch_for(delta.len(), level);
    sig.extend_by_segment(delta, &mut scratch);
    sig
}

fn scratch_for(dim: usize, level: usize) -> Vec<Vec<f64>> {
    (0..=level).map(|k| vec![0.0; pow(dim, k)]).collect()
}

/// Truncated tensor product of two signatures (Chen's identity).
pub fn chen_concat(
    a: &TruncatedSignature,
    b: &TruncatedSignature,
) -> Result<TruncatedSignature, SigError> {
    if a.dim != b.dim {
        return Err(SigError::DimensionMismatch(a.dim, b.dim));
    }
    if a.level != b.level {
        return Err(SigError::LevelMismatch(a.level, b.level));
    }
    Ok(TruncatedSignature::from_tensor(
        a.to_tensor().mul(&b.to_tensor()),
    ))
}

/// Signature of the piecewise-linear interpolation of `path`.
pub fn path_signature(path: &Path, level: usize) -> TruncatedSignature {
    let mut sig = TruncatedSignature::identity(path.dim, level);
    let mut scratch = scratch_for(path.dim, level);
    for delta in path.increments() {
        sig.extend_by_segment(&delta, &mut scratch);
    }
    sig
}

/// Precomputed Lyndon basis for one `(dim, level)` pair.
#[derive(Debug)]
pub struct LyndonBasis {
    dim: usize,
    level: usize,
    words: Vec<Word>,
    /// Per level `k`: indices into `words` of the Lyndon words of length `k`
    /// (lexicographic), their tensor offsets, and the strictly lower
    /// triangular coefficients `P_{w_j}[w_i]`, `j < i`.
    blocks: Vec<LevelBlock>,
    /// Expanded bracket polynomials, one dense level-`|w|` vector per word.
    expansions: Vec<Vec<f64>>,
}

#[derive(Debug)]
struct LevelBlock {
    members: Vec<usize>,
    offsets: Vec<usize>,
    lower: Vec<Vec<f64>>,
}

impl LyndonBasis {
    fn build(dim: usize, level: usize) -> Self {
        let words = lyndon_words(dim, level);
        let index: HashMap<&Word, usize> = words.iter().enumerate().map(|(i, w)| (w, i)).collect();
        let mut expansions: Vec<Vec<f64>> = Vec::with_capacity(words.len());
        for w in &words {
            let k = w.len();
            if k == 1 {
                let mut e = vec![0.0; dim];
                e[w.0[0] - 1] = 1.0;
                expansions.push(e);
                continue;
            }
            // Standard factorization: v is the longest proper Lyndon suffix.
            let split = (1..k)
                .find(|&s| index.contains_key(&Word(w.0[s..].to_vec())))
                .expect("every Lyndon word of length > 1 has a proper Lyndon suffix");
            let u = &expansions[index[&Word(w.0[..split].to_vec())]];
            let v = &expansions[index[&Word(w.0[split..].to_vec())]];
            let mut e = vec![0.0; pow(dim, k)];
            let (lu, lv) = (u.len(), v.len());
            for (i, &a) in u.iter().enumerate() {
                for (j, &b) in v.iter().enumerate() {
                    e[i * lv + j] += a * b;
                }
            }
            for (j, &b) in v.iter().enumerate() {
                for (i, &a) in u.iter().enumerate() {
                    e[j * lu + i] -= b * a;
                }
            }
            expansions.push(e);
        }

        let mut blocks = Vec::with_capacity(level);
        for k in 1..=level {
            let members: Vec<usize> = (0..words.len()).filter(|&i| words[i].len() == k).collect();
            let offsets: Vec<usize> = members.iter().map(|&i| words[i].tensor_index(dim)).collect();
            let lower = (0..members.len())
                .map(|r| (0..r).map(|c| expansions[members[c]][offsets[r]]).collect())
                .collect();
            blocks.push(LevelBlock {
                members,
                offsets,
                lower,
            });
        }

        Self {
            dim,
            level,
            words,
            blocks,
            expansions,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    /// Dense tensor expansion of the bracket polynomial for `words()[i]`.
    pub fn expansion(&self, i: usize) -> &[f64] {
        &self.expansions[i]
    }

    fn project(&self, log: &Tensor) -> Vec<f64> {
        let mut coords = vec![0.0; self.words.len()];
        for (k, block) in self.blocks.iter().enumerate() {
            let lvl = &log.levels[k + 1];
            for r in 0..block.members.len() {
                let mut c = lvl[block.offsets[r]];
                for (col, &t) in block.lower[r].iter().enumerate() {
                    c -= coords[block.members[col]] * t;
                }
                coords[block.members[r]] = c;
            }
        }
        coords
    }

    fn expand(&self, coords: &[f64]) -> Tensor {
        let mut t = Tensor::zeros(self.dim, self.level);
        for (i, (w, &c)) in self.words.iter().zip(coords).enumerate() {
            if c == 0.0 {
                continue;
            }
            for (d, e) in t.levels[w.len()].iter_mut().zip(&self.expansions[i]) {
                *d += c * e;
            }
        }
        t
    }
}

type BasisCache = Mutex<HashMap<(usize, usize), Arc<LyndonBasis>>>;

/// Shared read-only basis for `(dim, level)`, built on first use.
pub fn lyndon_basis(dim: usize, level: usize) -> Arc<LyndonBasis> {
    static CACHE: OnceLock<BasisCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry((dim, level))
        .or_insert_with(|| Arc::new(LyndonBasis::build(dim, level)))
        .clone()
}

/// Log-signature coordinates in the Lyndon basis.
#[derive(Clone, Debug)]
pub struct LogSignature {
    basis: Arc<LyndonBasis>,
    coords: Vec<f64>,
}

impl LogSignature {
    pub fn dim(&self) -> usize {
        self.basis.dim
    }

    pub fn level(&self) -> usize {
        self.basis.level
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn basis(&self) -> &[Word] {
        &self.basis.words
    }

    /// Coordinate of a Lyndon word given with 1-based letters.
    pub fn coordinate(&self, word: &[usize]) -> Option<f64> {
        let w = Word(word.to_vec());
        self.basis
            .words
            .iter()
            .position(|b| *b == w)
            .map(|i| self.coords[i])
    }

    /// Coordinates of all words whose length lies in `range`, basis order.
    pub fn coords_with_lengths(&self, range: std::ops::RangeInclusive<usize>) -> Vec<f64> {
        self.basis
            .words
            .iter()
            .zip(&self.coords)
            .filter(|(w, _)| range.contains(&w.len()))
            .map(|(_, &c)| c)
            .collect()
    }

    /// The Lie element as a dense tensor series (zero scalar part).
    pub fn to_tensor_levels(&self) -> Vec<Vec<f64>> {
        let mut t = self.basis.expand(&self.coords);
        t.levels.remove(0);
        t.levels
    }

    /// Inverse of [`log_signature`]: the group-like element `exp(log S)`.
    pub fn exp(&self) -> TruncatedSignature {
        TruncatedSignature::from_tensor(self.basis.expand(&self.coords).exp())
    }
}

/// Logarithm of a signature projected onto the Lyndon basis.
pub fn log_signature(sig: &TruncatedSignature) -> LogSignature {
    let basis = lyndon_basis(sig.dim, sig.level);
    let mut x = sig.to_tensor();
    x.levels[0][0] = 0.0;
    let log = x.log1p();
    let coords = basis.project(&log);
    LogSignature { basis, coords }
}

/// Number of Lyndon words of each length `1..=level` over `dim` letters
/// (Witt's formula evaluated by enumeration).
pub fn lyndon_counts(dim: usize, level: usize) -> Vec<usize> {
    let words = lyndon_words(dim, level);
    (1..=level)
        .map(|k| words.iter().filter(|w| w.len() == k).count())
        .collect()
}
