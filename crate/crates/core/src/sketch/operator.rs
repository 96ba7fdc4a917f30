use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::{self, mix64, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SketchKind {
    Gaussian,
    Srht,
}

impl SketchKind {
    pub fn tag(self) -> u32 {
        match self {
            SketchKind::Gaussian => 1,
            SketchKind::Srht => 2,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            1 => Ok(SketchKind::Gaussian),
            2 => Ok(SketchKind::Srht),
            t => Err(Error::format(format!("unknown sketch kind {t}"))),
        }
    }
}

/// Columns are cached when the whole `k x d` table fits in this many bytes.
const CACHE_BUDGET_BYTES: usize = 64 << 20;

/// A `k x d` random map that is never stored unless it is small.
///
/// Column `l` (the image of the `l`-th basis vector) is a pure function of
/// `(kind, k, d, seed, l)`.
#[derive(Debug)]
pub struct SketchOperator {
    kind: SketchKind,
    k: usize,
    d: usize,
    seed: u64,
    /// SRHT: padded dimension and the sampled Hadamard rows, ascending.
    d_pad: usize,
    rows: Vec<usize>,
    cache: OnceLock<Vec<f64>>,
}

impl Clone for SketchOperator {
    fn clone(&self) -> Self {
        Self {
            kind: self.kind,
            k: self.k,
            d: self.d,
            seed: self.seed,
            d_pad: self.d_pad,
            rows: self.rows.clone(),
            cache: OnceLock::new(),
        }
    }
}

impl SketchOperator {
    pub fn new(kind: SketchKind, k: usize, d: usize, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("sketch size k must be at least 1"));
        }
        if d == 0 {
            return Err(Error::invalid("input dimension d must be at least 1"));
        }
        let (d_pad, rows) = match kind {
            SketchKind::Gaussian => (d, Vec::new()),
            SketchKind::Srht => {
                if k > d {
                    return Err(Error::invalid(format!("SRHT needs k <= d, got k={k}, d={d}")));
                }
                let d_pad = d.next_power_of_two();
                let mut rng = rng::stream(seed, Domain::SrhtRows, 0);
                let mut rows = rand::seq::index::sample(&mut rng, d_pad, k).into_vec();
                rows.sort_unstable();
                (d_pad, rows)
            }
        };
        Ok(Self { kind, k, d, seed, d_pad, rows, cache: OnceLock::new() })
    }

    pub fn gaussian(k: usize, d: usize, seed: u64) -> Result<Self> {
        Self::new(SketchKind::Gaussian, k, d, seed)
    }

    pub fn srht(k: usize, d: usize, seed: u64) -> Result<Self> {
        Self::new(SketchKind::Srht, k, d, seed)
    }

    pub fn kind(&self) -> SketchKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fingerprint(&self) -> u64 {
        fingerprint(self.kind, self.k, self.d, self.seed)
    }

    fn srht_sign(&self, l: usize) -> f64 {
        let h = mix64(rng::derive_seed(self.seed, Domain::SrhtSigns as u64) ^ l as u64);
        if h >> 63 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Writes column `row` of the operator into `out` (length `k`).
    fn generate_column(&self, row: usize, out: &mut [f64]) {
        let scale = 1.0 / (self.k as f64).sqrt();
        match self.kind {
            SketchKind::Gaussian => {
                let mut rng = rng::stream(self.seed, Domain::GaussianColumn, row as u64);
                for v in out.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = z * scale;
                }
            }
            SketchKind::Srht => {
                let s = self.srht_sign(row) * scale;
                for (v, &h) in out.iter_mut().zip(&self.rows) {
                    *v = if (h & row).count_ones() % 2 == 0 { s } else { -s };
                }
            }
        }
    }

    fn table(&self) -> Option<&[f64]> {
        if self.k.saturating_mul(self.d).saturating_mul(8) > CACHE_BUDGET_BYTES {
            return None;
        }
        let t = self.cache.get_or_init(|| {
            let mut t = vec![0.0; self.k * self.d];
            for (row, col) in t.chunks_mut(self.k).enumerate() {
                self.generate_column(row, col);
            }
            t
        });
        Some(t)
    }

    /// Column `row` of the operator.
    pub fn column(&self, row: usize) -> Result<Vec<f64>> {
        self.check_row(row)?;
        let mut out = vec![0.0; self.k];
        self.column_into(row, &mut out);
        Ok(out)
    }

    pub(crate) fn column_into(&self, row: usize, out: &mut [f64]) {
        match self.table() {
            Some(t) => out.copy_from_slice(&t[row * self.k..(row + 1) * self.k]),
            None => self.generate_column(row, out),
        }
    }

    /// Calls `f(t, value * Pi[t, row])` for every output coordinate `t`.
    pub(crate) fn for_each_term(&self, row: usize, value: f64, mut f: impl FnMut(usize, f64)) {
        match self.table() {
            Some(t) => {
                for (i, &p) in t[row * self.k..(row + 1) * self.k].iter().enumerate() {
                    f(i, value * p);
                }
            }
            None => {
                let mut col = vec![0.0; self.k];
                self.generate_column(row, &mut col);
                for (i, &p) in col.iter().enumerate() {
                    f(i, value * p);
                }
            }
        }
    }

    fn check_row(&self, row: usize) -> Result<()> {
        if row >= self.d {
            return Err(Error::IndexOutOfRange(format!("row {row} >= d = {}", self.d)));
        }
        Ok(())
    }

    /// `target += value * Pi[:, row]`.
    pub fn apply_column(&self, row: usize, value: f64, target: &mut [f64]) -> Result<()> {
        self.check_row(row)?;
        if target.len() != self.k {
            return Err(Error::dims(format!("target has length {}, k = {}", target.len(), self.k)));
        }
        if value == 0.0 {
            return Ok(());
        }
        self.for_each_term(row, value, |t, v| target[t] += v);
        Ok(())
    }

    /// `Pi x` for a dense length-`d` vector. SRHT uses a fast Walsh-Hadamard
    /// transform in `O(d log d)`; the result agrees with summing
    /// `apply_column` to rounding error but is not bitwise identical.
    pub fn apply_dense(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d {
            return Err(Error::dims(format!("vector has length {}, d = {}", x.len(), self.d)));
        }
        match self.kind {
            SketchKind::Gaussian => {
                let mut out = vec![0.0; self.k];
                let mut col = vec![0.0; self.k];
                for (row, &v) in x.iter().enumerate() {
                    if v != 0.0 {
                        self.column_into(row, &mut col);
                        for (o, p) in out.iter_mut().zip(&col) {
                            *o += v * p;
                        }
                    }
                }
                Ok(out)
            }
            SketchKind::Srht => {
                let mut buf = vec![0.0; self.d_pad];
                for (l, &v) in x.iter().enumerate() {
                    buf[l] = v * self.srht_sign(l);
                }
                fwht(&mut buf);
                let scale = 1.0 / (self.k as f64).sqrt();
                Ok(self.rows.iter().map(|&h| buf[h] * scale).collect())
            }
        }
    }

    /// The explicit `k x d` matrix. Intended for tests at small `d`.
    pub fn materialize(&self) -> DenseMatrix {
        let mut data = vec![0.0; self.k * self.d];
        let mut col = vec![0.0; self.k];
        for row in 0..self.d {
            self.column_into(row, &mut col);
            for t in 0..self.k {
                data[row * self.k + t] = col[t];
            }
        }
        DenseMatrix::from_col_major(self.k, self.d, data).expect("finite operator")
    }
}

pub(crate) fn fingerprint(kind: SketchKind, k: usize, d: usize, seed: u64) -> u64 {
    let mut h = mix64(kind.tag() as u64);
    for v in [k as u64, d as u64, seed] {
        h = mix64(h ^ v);
    }
    h
}

/// In-place unnormalized Walsh-Hadamard transform; `x.len()` must be a power of two.
pub fn fwht(x: &mut [f64]) {
    let n = x.len();
    debug_assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for block in x.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (u, v) = (*a, *b);
                *a = u + v;
                *b = u - v;
            }
        }
        h *= 2;
    }
}

/// A uniformly random unit vector in `R^d`; used by tests and generators.
pub fn random_unit_vector<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}
