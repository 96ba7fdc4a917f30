//! Weighted alternating minimization over a sampled set of entries.
//!
//! Minimizes `Σ_{(i,j)∈Ω} w_ij (M_ij - U_i·V_j)²` by a weighted SVD
//! initialization, row trimming, and alternating weighted least squares.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::dense;
use crate::matrix::{dense_svd, DenseMatrix, MatrixId};
use crate::rng::{self, Domain};
use crate::sample::SampleSet;
use crate::sketch::SketchSummary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    /// `2T+1` disjoint, uniformly random subsets of `Ω`.
    Fresh,
    /// Every step sees all of `Ω`.
    Reuse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaltminConfig {
    pub r: usize,
    pub iterations: usize,
    pub partition: Partition,
    pub trim_constant: f64,
    /// Ridge added to each normal matrix, relative to its mean diagonal.
    pub ridge: f64,
}

impl WaltminConfig {
    pub fn new(r: usize, iterations: usize) -> Self {
        Self { r, iterations, partition: Partition::Fresh, trim_constant: 8.0, ridge: 1e-10 }
    }

    pub fn with_partition(mut self, partition: Partition) -> Self {
        self.partition = partition;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::invalid("rank r must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iteration count T must be at least 1"));
        }
        if !(self.trim_constant > 0.0 && self.trim_constant.is_finite()) {
            return Err(Error::invalid(format!("trim constant {} must be positive", self.trim_constant)));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::invalid(format!("ridge {} must be nonnegative", self.ridge)));
        }
        Ok(())
    }

    /// Number of subsets `Ω` is split into.
    pub fn subsets(&self) -> usize {
        2 * self.iterations + 1
    }
}

/// Factors `U: n1 x r`, `V: n2 x r` of the approximation `U Vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    pub u: DenseMatrix,
    pub v: DenseMatrix,
}

impl FactorPair {
    pub fn new(u: DenseMatrix, v: DenseMatrix) -> Result<Self> {
        if u.cols() != v.cols() {
            return Err(Error::dims(format!("U has {} columns, V has {}", u.cols(), v.cols())));
        }
        Ok(Self { u, v })
    }

    pub fn zeros(n1: usize, n2: usize, r: usize) -> Self {
        Self { u: DenseMatrix::zeros(n1, r), v: DenseMatrix::zeros(n2, r) }
    }

    pub fn rank(&self) -> usize {
        self.u.cols()
    }

    /// `U Vᵀ`.
    pub fn product(&self) -> DenseMatrix {
        DenseMatrix::from_nalgebra(&(self.u.to_nalgebra() * self.v.to_nalgebra().transpose()))
    }

    /// Writes `u.csv`, `v.csv` and `factors.json` (the given metadata) into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, metadata: &serde_json::Value) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for (name, m) in [("u.csv", &self.u), ("v.csv", &self.v)] {
            let mut w = BufWriter::new(File::create(dir.join(name))?);
            dense::write_csv(&mut w, m)?;
            w.flush()?;
        }
        let mut w = BufWriter::new(File::create(dir.join("factors.json"))?);
        serde_json::to_writer_pretty(&mut w, metadata).map_err(|e| Error::format(e.to_string()))?;
        w.flush()?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let read = |name: &str| -> Result<DenseMatrix> { dense::read_csv(BufReader::new(File::open(dir.join(name))?)) };
        Self::new(read("u.csv")?, read("v.csv")?)
    }
}

/// Column norms of `A`, which set the per-row trimming thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnNorms {
    pub a_norms_sq: Vec<f64>,
    pub a_frob_sq: f64,
}

impl ColumnNorms {
    pub fn from_summary(s: &SketchSummary) -> Self {
        Self { a_norms_sq: s.col_norms_sq(MatrixId::A).to_vec(), a_frob_sq: s.frob_sq(MatrixId::A) }
    }

    pub fn from_matrix(a: &DenseMatrix) -> Self {
        let a_norms_sq = a.column_norms_sq();
        let a_frob_sq = a_norms_sq.iter().sum();
        Self { a_norms_sq, a_frob_sq }
    }
}

/// Splits `Ω` into the `2T+1` sets used by initialization and the
/// alternating steps.
pub fn partition_omega(samples: &SampleSet, t: usize, mode: Partition, seed: u64) -> Result<Vec<Arc<SampleSet>>> {
    let parts = 2 * t + 1;
    match mode {
        Partition::Reuse => {
            let all = Arc::new(samples.clone());
            Ok(vec![all; parts])
        }
        Partition::Fresh => {
            if samples.len() < parts {
                return Err(Error::TooFewSamples { have: samples.len(), need: parts });
            }
            let mut order: Vec<usize> = (0..samples.len()).collect();
            order.shuffle(&mut rng::stream(seed, Domain::Partition, 0));
            let mut owner = vec![0usize; samples.len()];
            for (pos, &idx) in order.iter().enumerate() {
                owner[idx] = pos % parts;
            }
            let mut buckets = vec![Vec::with_capacity(samples.len() / parts + 1); parts];
            for (e, &o) in samples.entries().iter().zip(&owner) {
                buckets[o].push(*e);
            }
            Ok(buckets
                .into_iter()
                .map(|b| Arc::new(SampleSet::from_sorted(samples.n1(), samples.n2(), b)))
                .collect())
        }
    }
}

/// Which eigensolver the initialization uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitSolver {
    /// Dense SVD when `min(n1, n2) <= 512`, block subspace iteration otherwise.
    Auto,
    Dense,
    Subspace,
}

const DENSE_INIT_LIMIT: usize = 512;
const SUBSPACE_TOL: f64 = 1e-8;
const SUBSPACE_MAX_ITERS: usize = 300;
const SUBSPACE_OVERSAMPLE: usize = 8;
/// Singular values at or below this fraction of the largest count as zero.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct WeightedInit {
    /// `n1 x r`, orthonormal nonzero columns.
    pub u: DMatrix<f64>,
    /// `n2 x r`, right singular vectors scaled by the singular values.
    pub v: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    /// Number of nonzero singular values found (at most `r`).
    pub rank: usize,
    pub subspace_iterations: Option<usize>,
}

impl WeightedInit {
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.u.ncols()
    }
}

/// Top-`r` SVD of the matrix with entries `w_ij M_ij` on the sample set.
pub fn weighted_init(samples: &SampleSet, r: usize) -> Result<WeightedInit> {
    weighted_init_with(samples, r, InitSolver::Auto)
}

pub fn weighted_init_with(samples: &SampleSet, r: usize, solver: InitSolver) -> Result<WeightedInit> {
    let (n1, n2) = (samples.n1(), samples.n2());
    if r == 0 || r > n1.min(n2) {
        return Err(Error::invalid(format!("rank {r} must be in 1..={}", n1.min(n2))));
    }
    if samples.is_empty() {
        return Err(Error::invalid("weighted initialization needs at least one sample"));
    }
    let dense = match solver {
        InitSolver::Auto => n1.min(n2) <= DENSE_INIT_LIMIT,
        InitSolver::Dense => true,
        InitSolver::Subspace => false,
    };
    let (u, s, v, iters) = if dense {
        let mut m = DMatrix::zeros(n1, n2);
        for e in samples.entries() {
            m[(e.i, e.j)] = e.weight * e.value;
        }
        let (u, s, v) = dense_svd(&m);
        (u.columns(0, r).into_owned(), s[..r].to_vec(), v.columns(0, r).into_owned(), None)
    } else {
        let (u, s, v, iters) = subspace_svd(samples, r)?;
        (u, s, v, Some(iters))
    };
    let top = s.first().copied().unwrap_or(0.0);
    let rank = s.iter().take_while(|&&x| top > 0.0 && x > RANK_TOL * top).count();
    let mut u = u;
    let mut v = v;
    for c in 0..r {
        if c < rank {
            v.column_mut(c).scale_mut(s[c]);
        } else {
            u.column_mut(c).fill(0.0);
            v.column_mut(c).fill(0.0);
        }
    }
    let singular_values = s.iter().enumerate().map(|(c, &x)| if c < rank { x } else { 0.0 }).collect();
    Ok(WeightedInit { u, v, singular_values, rank, subspace_iterations: iters })
}

/// Sparse `R = (w_ij M_ij)` in row order, with `R x` and `Rᵀ y` on dense blocks.
struct SparseWeighted<'a> {
    samples: &'a SampleSet,
}

impl SparseWeighted<'_> {
    /// `R X` for `X: n2 x b`.
    fn mul(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(self.samples.n1(), x.ncols());
        for c in 0..x.ncols() {
            let xc = x.column(c);
            let mut yc = y.column_mut(c);
            for e in self.samples.entries() {
                yc[e.i] += e.weight * e.value * xc[e.j];
            }
        }
        y
    }

    /// `Rᵀ Y` for `Y: n1 x b`.
    fn tr_mul(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(self.samples.n2(), y.ncols());
        for c in 0..y.ncols() {
            let yc = y.column(c);
            let mut xc = x.column_mut(c);
            for e in self.samples.entries() {
                xc[e.j] += e.weight * e.value * yc[e.i];
            }
        }
        x
    }
}

fn orthonormal_basis(m: DMatrix<f64>) -> DMatrix<f64> {
    let cols = m.ncols();
    let q = m.qr().q();
    q.columns(0, cols).into_owned()
}

/// Block subspace iteration with a Rayleigh-Ritz extraction.
fn subspace_svd(samples: &SampleSet, r: usize) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>, usize)> {
    let (n1, n2) = (samples.n1(), samples.n2());
    let b = (r + SUBSPACE_OVERSAMPLE).min(n1.min(n2));
    let op = SparseWeighted { samples };
    let mut rng = rng::stream(0x1a17, Domain::SubspaceIteration, 0);
    let mut x = orthonormal_basis(DMatrix::from_fn(n2, b, |_, _| StandardNormal.sample(&mut rng)));
    let mut ritz = None;
    let mut iters = 0;
    for it in 1..=SUBSPACE_MAX_ITERS {
        iters = it;
        let y = op.mul(&x);
        let (uy, s, wy) = dense_svd(&y);
        let u_r = uy.columns(0, r).into_owned();
        let v_r = &x * wy.columns(0, r);
        let vals = s[..r].to_vec();
        // Ritz residuals ‖Rᵀu_k - σ_k v_k‖ bound the subspace error, not
        // just the (quadratically faster) singular value error.
        let mut resid = op.tr_mul(&u_r);
        for k in 0..r {
            resid.column_mut(k).axpy(-vals[k], &v_r.column(k), 1.0);
        }
        let worst = (0..r).map(|k| resid.column(k).norm()).fold(0.0, f64::max);
        let top = vals[0];
        ritz = Some((u_r, vals, v_r));
        if top == 0.0 || worst <= SUBSPACE_TOL * top {
            break;
        }
        let z = op.tr_mul(&orthonormal_basis(y));
        x = orthonormal_basis(z);
    }
    let (u, s, v) = ritz.expect("at least one iteration");
    Ok((u, s, v, iters))
}

/// Modified Gram-Schmidt applied twice. Columns that vanish stay zero.
fn orthonormalize_columns(m: &mut DMatrix<f64>) {
    let cols = m.ncols();
    for c in 0..cols {
        let original = m.column(c).norm();
        if original == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for p in 0..c {
                let proj = m.column(p).dot(&m.column(c));
                let pc = m.column(p).into_owned();
                m.column_mut(c).axpy(-proj, &pc, 1.0);
            }
        }
        let norm = m.column(c).norm();
        if norm <= 1e-12 * original {
            m.column_mut(c).fill(0.0);
        } else {
            m.column_mut(c).unscale_mut(norm);
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trimmed {
    pub u: DMatrix<f64>,
    /// Rows set to zero, ascending.
    pub zeroed_rows: Vec<usize>,
}

/// Orthonormalizes `u` and zeroes every row whose norm exceeds
/// `c sqrt(r) ‖A_i‖ / ‖A‖_F`, re-orthonormalizing until no row violates
/// its threshold.
pub fn trim(u: &DMatrix<f64>, norms: &ColumnNorms, r: usize, c: f64) -> Result<Trimmed> {
    if u.nrows() != norms.a_norms_sq.len() {
        return Err(Error::dims(format!("U has {} rows, A has {} columns", u.nrows(), norms.a_norms_sq.len())));
    }
    if norms.a_frob_sq <= 0.0 {
        return Err(Error::ZeroNorm("‖A‖_F = 0, trimming thresholds undefined".into()));
    }
    let scale = c * (r as f64).sqrt() / norms.a_frob_sq.sqrt();
    let thresholds: Vec<f64> = norms.a_norms_sq.iter().map(|a| scale * a.sqrt()).collect();
    let mut out = u.clone();
    orthonormalize_columns(&mut out);
    let mut zeroed = Vec::new();
    loop {
        let violators: Vec<usize> = (0..out.nrows())
            .filter(|&i| out.row(i).norm() > thresholds[i])
            .collect();
        if violators.is_empty() {
            break;
        }
        for &i in &violators {
            out.row_mut(i).fill(0.0);
        }
        zeroed.extend(violators);
        orthonormalize_columns(&mut out);
    }
    zeroed.sort_unstable();
    Ok(Trimmed { u: out, zeroed_rows: zeroed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Solve for `V` with `U` fixed.
    SolveV,
    /// Solve for `U` with `V` fixed.
    SolveU,
}

/// One weighted least-squares half step. Rows with no samples get zero.
pub fn als_step(samples: &SampleSet, fixed: &DMatrix<f64>, side: Side, ridge: f64) -> Result<DMatrix<f64>> {
    let r = fixed.ncols();
    let (fixed_rows, out_rows) = match side {
        Side::SolveV => (samples.n1(), samples.n2()),
        Side::SolveU => (samples.n2(), samples.n1()),
    };
    if fixed.nrows() != fixed_rows {
        return Err(Error::dims(format!("fixed factor has {} rows, expected {fixed_rows}", fixed.nrows())));
    }
    // Group sample indices by the row being solved (counting sort keeps the
    // original order inside each group, so results are deterministic).
    let key = |e: &crate::sample::SampleEntry| match side {
        Side::SolveV => (e.j, e.i),
        Side::SolveU => (e.i, e.j),
    };
    let mut start = vec![0usize; out_rows + 1];
    for e in samples.entries() {
        start[key(e).0 + 1] += 1;
    }
    for k in 0..out_rows {
        start[k + 1] += start[k];
    }
    let mut fill = start.clone();
    let mut grouped = vec![0usize; samples.len()];
    for (idx, e) in samples.entries().iter().enumerate() {
        let g = key(e).0;
        grouped[fill[g]] = idx;
        fill[g] += 1;
    }
    let fixed_rows_data: Vec<DVector<f64>> = (0..fixed_rows).map(|i| fixed.row(i).transpose()).collect();
    let solved: Vec<DVector<f64>> = (0..out_rows)
        .into_par_iter()
        .map(|row| {
            let mut g = DMatrix::<f64>::zeros(r, r);
            let mut h = DVector::<f64>::zeros(r);
            for &idx in &grouped[start[row]..start[row + 1]] {
                let e = &samples.entries()[idx];
                let x = &fixed_rows_data[key(e).1];
                g.syger(e.weight, x, x, 1.0);
                h.axpy(e.weight * e.value, x, 1.0);
            }
            solve_ridge(g, h, ridge)
        })
        .collect();
    let mut out = DMatrix::zeros(out_rows, r);
    for (row, y) in solved.iter().enumerate() {
        out.row_mut(row).copy_from(&y.transpose());
    }
    Ok(out)
}

/// `(G + λ I)⁻¹ h` with `λ = ridge · trace(G) / r`; zero when `G` is zero.
fn solve_ridge(mut g: DMatrix<f64>, h: DVector<f64>, ridge: f64) -> DVector<f64> {
    let r = g.nrows();
    // syger fills the lower triangle only
    g.fill_upper_triangle_with_lower_triangle();
    let trace = g.trace();
    if trace <= 0.0 {
        return DVector::zeros(r);
    }
    let lambda = ridge * trace / r as f64;
    for k in 0..r {
        g[(k, k)] += lambda;
    }
    match g.clone().cholesky() {
        Some(ch) => ch.solve(&h),
        None => {
            let svd = g.svd(true, true);
            let tol = 1e-14 * svd.singular_values.max();
            svd.solve(&h, tol).unwrap_or_else(|_| DVector::zeros(r))
        }
    }
}

/// `Σ_Ω w_ij (M_ij - U_i·V_j)²`.
pub fn weighted_objective(samples: &SampleSet, u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    samples
        .entries()
        .iter()
        .map(|e| {
            let fit = u.row(e.i).dot(&v.row(e.j));
            e.weight * (e.value - fit).powi(2)
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaltminDiagnostics {
    pub subset_sizes: Vec<usize>,
    pub init_rank: usize,
    pub init_rank_deficient: bool,
    pub init_subspace_iterations: Option<usize>,
    pub trimmed_rows: usize,
    /// Weighted objective on all of `Ω` after initialization and after each iteration.
    pub objective: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct WaltminOutput {
    pub factors: FactorPair,
    pub diagnostics: WaltminDiagnostics,
}

pub fn run_waltmin(samples: &SampleSet, cfg: &WaltminConfig, norms: &ColumnNorms, seed: u64) -> Result<WaltminOutput> {
    cfg.validate()?;
    let (n1, n2) = (samples.n1(), samples.n2());
    if cfg.r > n1.min(n2) {
        return Err(Error::invalid(format!("rank {} exceeds min(n1, n2) = {}", cfg.r, n1.min(n2))));
    }
    if norms.a_norms_sq.len() != n1 {
        return Err(Error::dims(format!("{} column norms for n1 = {n1}", norms.a_norms_sq.len())));
    }
    let parts = partition_omega(samples, cfg.iterations, cfg.partition, seed)?;
    let init = weighted_init(&parts[0], cfg.r)?;
    let trimmed = trim(&init.u, norms, cfg.r, cfg.trim_constant)?;
    let mut u = trimmed.u;
    let init_rank_deficient = init.rank_deficient();
    let mut v = init.v;
    let mut objective = vec![weighted_objective(samples, &u, &v)];
    for t in 0..cfg.iterations {
        v = als_step(&parts[2 * t + 1], &u, Side::SolveV, cfg.ridge)?;
        u = als_step(&parts[2 * t + 2], &v, Side::SolveU, cfg.ridge)?;
        objective.push(weighted_objective(samples, &u, &v));
    }
    let factors = FactorPair::new(DenseMatrix::from_nalgebra(&u), DenseMatrix::from_nalgebra(&v))?;
    Ok(WaltminOutput {
        factors,
        diagnostics: WaltminDiagnostics {
            subset_sizes: parts.iter().map(|p| p.len()).collect(),
            init_rank: init.rank,
            init_rank_deficient,
            init_subspace_iterations: init.subspace_iterations,
            trimmed_rows: trimmed.zeroed_rows.len(),
            objective,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{exact_product, truncated_svd};
    use rand::Rng;

    fn full_samples(m: &DenseMatrix) -> SampleSet {
        let mut recs = Vec::new();
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                recs.push((i, j, m.get(i, j), 1.0));
            }
        }
        SampleSet::new(m.rows(), m.cols(), recs).unwrap()
    }

    fn random_samples(m: &DenseMatrix, count: usize, seed: u64) -> SampleSet {
        let mut rng = rng::stream(seed, Domain::Generator, 99);
        let mut cells: Vec<(usize, usize)> = (0..m.rows()).flat_map(|i| (0..m.cols()).map(move |j| (i, j))).collect();
        cells.shuffle(&mut rng);
        let recs = cells[..count]
            .iter()
            .map(|&(i, j)| (i, j, m.get(i, j), rng.random_range(0.2..1.0)))
            .collect();
        SampleSet::new(m.rows(), m.cols(), recs).unwrap()
    }

    fn low_rank(n1: usize, n2: usize, r: usize, seed: u64) -> DenseMatrix {
        let x = DenseMatrix::gaussian(r, n1, seed, 0);
        let y = DenseMatrix::gaussian(r, n2, seed, 1);
        exact_product(&x, &y).unwrap()
    }

    fn noisy(m: &DenseMatrix, sigma: f64, seed: u64) -> DenseMatrix {
        let e = DenseMatrix::gaussian(m.rows(), m.cols(), seed, 7);
        DenseMatrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j) + sigma * e.get(i, j))
    }

    fn uniform_norms(n: usize) -> ColumnNorms {
        ColumnNorms { a_norms_sq: vec![1.0; n], a_frob_sq: n as f64 }
    }

    fn rel_frob(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
        a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm()
    }

    #[test]
    fn partition_cases() {
        let m = low_rank(10, 10, 2, 1);
        let s = random_samples(&m, 7, 1);
        let parts = partition_omega(&s, 3, Partition::Fresh, 5).unwrap();
        assert_eq!(parts.len(), 7);
        assert!(parts.iter().all(|p| p.len() == 1));

        let m = low_rank(40, 30, 2, 2);
        let s = random_samples(&m, 700, 2);
        let parts = partition_omega(&s, 3, Partition::Fresh, 5).unwrap();
        assert!(parts.iter().all(|p| p.len() == 100));
        let mut union: Vec<(usize, usize)> = parts.iter().flat_map(|p| p.pairs()).collect();
        union.sort_unstable();
        assert_eq!(union, s.pairs());

        let s = random_samples(&m, 703, 2);
        let sizes: Vec<usize> = partition_omega(&s, 3, Partition::Fresh, 1).unwrap().iter().map(|p| p.len()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);

        let reuse = partition_omega(&s, 2, Partition::Reuse, 0).unwrap();
        assert_eq!(reuse.len(), 5);
        assert!(reuse.iter().all(|p| **p == s));

        let tiny = random_samples(&m, 6, 3);
        assert!(matches!(
            partition_omega(&tiny, 3, Partition::Fresh, 0),
            Err(Error::TooFewSamples { have: 6, need: 7 })
        ));
    }

    #[test]
    fn init_recovers_fully_observed_low_rank() {
        let m = low_rank(25, 20, 3, 3);
        for solver in [InitSolver::Dense, InitSolver::Subspace] {
            let init = weighted_init_with(&full_samples(&m), 3, solver).unwrap();
            let rec = DenseMatrix::from_nalgebra(&(&init.u * init.v.transpose()));
            assert!(rel_frob(&rec, &m) <= 1e-8, "{solver:?}");
            assert!(!init.rank_deficient());
        }
    }

    #[test]
    fn init_of_zero_values_is_zero_and_flagged() {
        let m = DenseMatrix::zeros(8, 6);
        let init = weighted_init(&full_samples(&m), 2).unwrap();
        assert!(init.u.iter().all(|&x| x == 0.0) && init.v.iter().all(|&x| x == 0.0));
        assert!(init.rank_deficient());
        assert_eq!(init.rank, 0);
    }

    #[test]
    fn init_pads_rank_deficiency() {
        let m = low_rank(12, 10, 1, 4);
        let init = weighted_init(&full_samples(&m), 3).unwrap();
        assert_eq!(init.rank, 1);
        assert!(init.u.column(1).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn subspace_matches_dense_reference() {
        let m = DenseMatrix::gaussian(40, 30, 5, 0);
        let s = random_samples(&m, 400, 5);
        // dense reference built independently from the weighted entries
        let mut dense_r = DMatrix::zeros(40, 30);
        for e in s.entries() {
            dense_r[(e.i, e.j)] = e.value / e.q_hat;
        }
        let reference = dense_r.svd(true, false);
        let mut order: Vec<usize> = (0..30).collect();
        order.sort_by(|&a, &b| reference.singular_values[b].total_cmp(&reference.singular_values[a]));
        let u_ref = reference.u.unwrap();
        let u_ref = DMatrix::from_fn(40, 3, |i, c| u_ref[(i, order[c])]);
        for solver in [InitSolver::Dense, InitSolver::Subspace] {
            let init = weighted_init_with(&s, 3, solver).unwrap();
            // cosines of principal angles = singular values of U_refᵀ U
            let cos = (u_ref.transpose() * &init.u).singular_values();
            let min_cos = cos.iter().copied().fold(f64::INFINITY, f64::min);
            let angle = min_cos.min(1.0).acos();
            assert!(angle < 1e-6, "{solver:?}: largest principal angle {angle}");
        }
    }

    fn spiked() -> DMatrix<f64> {
        let mut u = crate::matrix::orthonormal_columns(50, 3, 8).to_nalgebra();
        // make row 7 dominate
        u.row_mut(7).copy_from(&nalgebra::RowDVector::from_vec(vec![3.0, 3.0, 3.0]));
        u
    }

    #[test]
    fn trim_keeps_well_spread_rows() {
        let u = crate::matrix::orthonormal_columns(50, 3, 8).to_nalgebra();
        let t = trim(&u, &uniform_norms(50), 3, 8.0).unwrap();
        assert!(t.zeroed_rows.is_empty());
        assert!((&t.u - &u).abs().max() < 1e-12);
    }

    #[test]
    fn trim_zeroes_a_spiked_row() {
        let u = spiked();
        let t = trim(&u, &uniform_norms(50), 3, 2.0).unwrap();
        assert_eq!(t.zeroed_rows, vec![7]);
        assert!(t.u.row(7).iter().all(|&x| x == 0.0));
        let utu = t.u.transpose() * &t.u;
        assert!((utu - DMatrix::identity(3, 3)).abs().max() < 1e-12);
    }

    #[test]
    fn trim_post_condition_and_idempotence() {
        let mut rng = rng::stream(12, Domain::Generator, 0);
        for trial in 0..20 {
            let n = 60;
            let u = DMatrix::from_fn(n, 4, |i, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                if i % 9 == 0 { 20.0 * z } else { z }
            });
            let norms_sq: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..2.0)).collect();
            let norms = ColumnNorms { a_frob_sq: norms_sq.iter().sum(), a_norms_sq: norms_sq };
            let c = 0.5 + trial as f64 * 0.1;
            let t = trim(&u, &norms, 4, c).unwrap();
            let scale = c * 2.0 / norms.a_frob_sq.sqrt();
            for i in 0..n {
                assert!(t.u.row(i).norm() <= scale * norms.a_norms_sq[i].sqrt() + 1e-9);
            }
            let again = trim(&t.u, &norms, 4, c).unwrap();
            assert!(again.zeroed_rows.iter().all(|i| t.zeroed_rows.contains(i)));
            for i in 0..n {
                assert_eq!(again.u.row(i).norm() == 0.0, t.u.row(i).norm() == 0.0);
            }
            // same column space: projecting one onto the other changes nothing
            let p = &t.u * (t.u.transpose() * &again.u);
            assert!((p - &again.u).abs().max() < 1e-9);
        }
    }

    #[test]
    fn trim_requires_nonzero_a() {
        let u = DMatrix::identity(3, 1);
        let norms = ColumnNorms { a_norms_sq: vec![0.0; 3], a_frob_sq: 0.0 };
        assert!(matches!(trim(&u, &norms, 1, 8.0), Err(Error::ZeroNorm(_))));
    }

    #[test]
    fn als_rank_one_exact() {
        let u = DMatrix::from_column_slice(6, 1, &[1.0, -2.0, 0.5, 3.0, 1.5, -1.0]);
        let v = DMatrix::from_column_slice(4, 1, &[2.0, 0.0, -1.0, 0.25]);
        let m = DenseMatrix::from_nalgebra(&(&u * v.transpose()));
        let solved = als_step(&full_samples(&m), &u, Side::SolveV, 0.0).unwrap();
        assert!((solved - &v).abs().max() < 1e-10);
        let scaled = als_step(&full_samples(&m), &(&u * 2.0), Side::SolveV, 1e-10).unwrap();
        assert!((scaled * 2.0 - &v).abs().max() < 1e-8);
    }

    #[test]
    fn als_unsampled_column_is_zero() {
        let m = low_rank(5, 4, 1, 6);
        let recs: Vec<(usize, usize, f64, f64)> = (0..5).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| (i, j, m.get(i, j), 1.0)).collect();
        let s = SampleSet::new(5, 4, recs).unwrap();
        let u = DMatrix::from_element(5, 1, 1.0);
        let v = als_step(&s, &u, Side::SolveV, 1e-10).unwrap();
        assert_eq!(v[(3, 0)], 0.0);
        assert!(v[(0, 0)] != 0.0);
    }

    #[test]
    fn als_step_does_not_increase_objective() {
        let m = noisy(&low_rank(30, 25, 3, 7), 0.1, 7);
        let s = random_samples(&m, 300, 7);
        let init = weighted_init(&s, 3).unwrap();
        let before = weighted_objective(&s, &init.u, &init.v);
        let v = als_step(&s, &init.u, Side::SolveV, 1e-10).unwrap();
        let mid = weighted_objective(&s, &init.u, &v);
        let u = als_step(&s, &v, Side::SolveU, 1e-10).unwrap();
        let after = weighted_objective(&s, &u, &v);
        assert!(mid <= before * (1.0 + 1e-9) && after <= mid * (1.0 + 1e-9), "{before} {mid} {after}");
    }

    #[test]
    fn run_recovers_fully_observed_low_rank() {
        let m = low_rank(30, 20, 3, 8);
        let cfg = WaltminConfig::new(3, 10).with_partition(Partition::Reuse);
        let out = run_waltmin(&full_samples(&m), &cfg, &uniform_norms(30), 1).unwrap();
        assert!(rel_frob(&out.factors.product(), &m) <= 1e-6);
        let svd = truncated_svd(&m, 3).unwrap();
        assert!(rel_frob(&out.factors.product(), &svd.reconstruct()) <= 1e-6);
    }

    #[test]
    fn reuse_objective_is_monotone() {
        let m = noisy(&low_rank(40, 35, 3, 9), 0.05, 9);
        let s = random_samples(&m, 600, 9);
        let cfg = WaltminConfig::new(3, 8).with_partition(Partition::Reuse);
        let out = run_waltmin(&s, &cfg, &uniform_norms(40), 2).unwrap();
        let obj = &out.diagnostics.objective;
        // the post-trim objective can be above the init's; ALS rounds cannot increase it
        assert!(obj[1..].windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)), "{obj:?}");
    }

    #[test]
    fn config_validation() {
        let m = low_rank(10, 10, 2, 1);
        let s = full_samples(&m);
        let bad = WaltminConfig::new(2, 0);
        assert!(matches!(run_waltmin(&s, &bad, &uniform_norms(10), 0), Err(Error::InvalidArgument(_))));
        assert!(WaltminConfig::new(0, 3).validate().is_err());
        assert!(run_waltmin(&s, &WaltminConfig::new(11, 1), &uniform_norms(10), 0).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let m = low_rank(30, 30, 2, 10);
        let s = random_samples(&m, 500, 10);
        let cfg = WaltminConfig::new(2, 4);
        let a = run_waltmin(&s, &cfg, &uniform_norms(30), 3).unwrap();
        let b = run_waltmin(&s, &cfg, &uniform_norms(30), 3).unwrap();
        assert_eq!(a.factors, b.factors);
    }

    #[test]
    fn factor_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let f = FactorPair::new(DenseMatrix::gaussian(4, 2, 1, 0), DenseMatrix::gaussian(3, 2, 1, 1)).unwrap();
        f.save(dir.path(), &serde_json::json!({"r": 2})).unwrap();
        assert_eq!(FactorPair::load(dir.path()).unwrap(), f);
    }
}
