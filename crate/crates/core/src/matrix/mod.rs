//! Dense matrices, the entry-stream model, and exact desk-scale oracles.

mod stream;

pub use stream::{
    dense_entries, reassemble, Entry, EntryStream, MatrixId, StreamDims, StreamFile,
};

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

/// Column-major dense matrix holding only finite values.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(format!(
                "{} values supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                value: data[pos],
                location: format!("({}, {})", pos % rows.max(1), pos / rows.max(1)),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row slices; handy in tests.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::dims("ragged rows"));
        }
        let mut data = vec![0.0; nrows * ncols];
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                data[j * nrows + i] = v;
            }
        }
        Self::from_col_major(nrows, ncols, data)
    }

    /// Panics if `f` produces a non-finite value.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                let v = f(i, j);
                assert!(v.is_finite(), "non-finite value {v} at ({i}, {j})");
                data.push(v);
            }
        }
        Self { rows, cols, data }
    }

    /// Matrix with i.i.d. standard normal entries drawn from `(seed, index)`.
    pub fn gaussian(rows: usize, cols: usize, seed: u64, index: u64) -> Self {
        let mut rng = rng::stream(seed, Domain::Generator, index);
        let data = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.rows + i] = v;
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn column_norms_sq(&self) -> Vec<f64> {
        (0..self.cols).map(|j| self.column(j).iter().map(|v| v * v).sum()).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::dims(format!("{:?} vs {:?}", self.shape(), other.shape())));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.rows, self.cols, &self.data)
    }

    /// Panics on non-finite input; nalgebra results from finite inputs are finite.
    pub fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        let data = m.as_slice().to_vec();
        assert!(data.iter().all(|v| v.is_finite()), "non-finite matrix");
        Self { rows, cols, data }
    }
}

/// `A^T B` for `A: d x n1`, `B: d x n2`.
pub fn exact_product(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows != b.rows {
        return Err(Error::dims(format!(
            "A has {} rows but B has {}",
            a.rows, b.rows
        )));
    }
    let p = a.to_nalgebra().tr_mul(&b.to_nalgebra());
    Ok(DenseMatrix::from_nalgebra(&p))
}

/// Thin singular value decomposition truncated to rank `r`.
#[derive(Clone, Debug)]
pub struct Svd {
    /// `rows x r`, orthonormal columns.
    pub u: DenseMatrix,
    /// Nonincreasing, nonnegative.
    pub s: Vec<f64>,
    /// `cols x r`, orthonormal columns.
    pub v: DenseMatrix,
}

impl Svd {
    /// `U diag(S) V^T`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let us = scale_columns(&self.u.to_nalgebra(), &self.s);
        DenseMatrix::from_nalgebra(&(us * self.v.to_nalgebra().transpose()))
    }
}

pub(crate) fn scale_columns(m: &DMatrix<f64>, s: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, &sj) in s.iter().enumerate() {
        out.column_mut(j).scale_mut(sj);
    }
    out
}

/// Best rank-`r` approximation from a full dense decomposition.
pub fn truncated_svd(m: &DenseMatrix, r: usize) -> Result<Svd> {
    let full = r.min(m.rows).min(m.cols);
    if r > full {
        return Err(Error::invalid(format!(
            "rank {r} exceeds min dimension of a {}x{} matrix",
            m.rows, m.cols
        )));
    }
    let (u, s, v) = dense_svd(&m.to_nalgebra());
    let u = u.columns(0, r).into_owned();
    let v = v.columns(0, r).into_owned();
    Ok(Svd {
        u: DenseMatrix::from_nalgebra(&u),
        s: s[..r].to_vec(),
        v: DenseMatrix::from_nalgebra(&v),
    })
}

/// Full thin SVD sorted by nonincreasing singular value: `(U, s, V)`.
pub(crate) fn dense_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (rows, cols) = m.shape();
    let p = rows.min(cols);
    if p == 0 {
        return (DMatrix::zeros(rows, 0), Vec::new(), DMatrix::zeros(cols, 0));
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let s = order.iter().map(|&i| svd.singular_values[i].max(0.0)).collect();
    let u = DMatrix::from_fn(rows, p, |i, j| u[(i, order[j])]);
    let v = DMatrix::from_fn(cols, p, |i, j| v_t[(order[j], i)]);
    (u, s, v)
}

/// A `rows x cols` matrix with orthonormal columns spanning a uniformly random
/// subspace, from the QR factorization of a seeded Gaussian matrix.
pub fn orthonormal_columns(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    assert!(cols <= rows, "cannot fit {cols} orthonormal columns in R^{rows}");
    let g = DenseMatrix::gaussian(rows, cols, seed, 0x0e7).to_nalgebra();
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut q = q.columns(0, cols).into_owned();
    // Fix signs so the distribution is Haar rather than QR-convention biased.
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    DenseMatrix::from_nalgebra(&q)
}

/// Singular values only, nonincreasing.
pub fn singular_values(m: &DenseMatrix) -> Vec<f64> {
    if m.rows == 0 || m.cols == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.to_nalgebra().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub const SPECTRAL_TOL: f64 = 1e-9;
pub const SPECTRAL_MAX_ITERS: usize = 10_000;

/// Largest singular value by power iteration on `M^T M` from a fixed-seed
/// start. Stops once the estimate changes by at most `tol` relative.
pub fn spectral_norm(m: &DenseMatrix, tol: f64, max_iters: usize) -> Result<f64> {
    if m.rows == 0 || m.cols == 0 {
        return Err(Error::invalid("spectral norm of an empty matrix"));
    }
    if m.data.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let mat = m.to_nalgebra();
    let mut rng = rng::stream(0x5eed, Domain::PowerIteration, 0);
    let mut x = nalgebra::DVector::from_fn(m.cols, |_, _| StandardNormal.sample(&mut rng));
    x /= x.norm();
    let mut estimate = 0.0;
    for iter in 0..max_iters {
        let y = &mat * &x;
        let sigma = y.norm();
        if sigma == 0.0 {
            // Start landed in the null space; the matrix is nonzero, so nudge.
            x = nalgebra::DVector::from_fn(m.cols, |i, _| 1.0 + i as f64);
            x /= x.norm();
            continue;
        }
        let mut z = mat.tr_mul(&y);
        let zn = z.norm();
        z /= zn;
        x = z;
        if iter > 0 && (sigma - estimate).abs() <= tol * sigma {
            return Ok(sigma);
        }
        estimate = sigma;
    }
    Err(Error::NotConverged { iterations: max_iters, estimate })
}
