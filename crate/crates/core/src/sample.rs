//! Entrywise sampling of the product biased by column norms.
//!
//! Entry `(i, j)` has rate
//! `q_ij = m (‖A_i‖² / (2 n2 ‖A‖²_F) + ‖B_j‖² / (2 n1 ‖B‖²_F))`, which sums
//! to `m` over all entries, and is kept with probability `min(1, q_ij)`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{estimate_block, EstimatorKind};
use crate::io::{expect_magic, read_array, read_u32, to_u32, write_u32};
use crate::matrix::MatrixId;
use crate::rng::{self, Domain};
use crate::sketch::{ExactSum, SketchSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    /// Row-wise proposals from the affine per-row CDF; `O(n1 log n2 + m log n2)`.
    Fast,
    /// One Bernoulli draw per entry; `O(n1 n2)`.
    Binomial,
}

/// Entries with `q_ij` at or above this are drawn directly by the fast sampler.
const HEAVY: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct SampleDistribution {
    m: usize,
    a_norms_sq: Vec<f64>,
    b_norms_sq: Vec<f64>,
    a_frob_sq: f64,
    b_frob_sq: f64,
    /// `b_prefix[j] = Σ_{l<j} ‖B_l‖²`.
    b_prefix: Vec<f64>,
    /// Column indices of `B` by nonincreasing norm, and the matching norms.
    b_order: Vec<usize>,
    b_sorted: Vec<f64>,
}

impl SampleDistribution {
    /// Builds the distribution from squared column norms; the Frobenius norms
    /// are their exact sums.
    pub fn new(m: usize, a_norms_sq: Vec<f64>, b_norms_sq: Vec<f64>) -> Result<Self> {
        let frob = |v: &[f64]| -> Result<f64> {
            let mut s = ExactSum::new();
            for &x in v {
                s.add(x)?;
            }
            Ok(s.value())
        };
        let (fa, fb) = (frob(&a_norms_sq)?, frob(&b_norms_sq)?);
        Self::from_norms(m, a_norms_sq, b_norms_sq, fa, fb)
    }

    pub fn from_summary(s: &SketchSummary, m: usize) -> Result<Self> {
        Self::from_norms(
            m,
            s.col_norms_sq(MatrixId::A).to_vec(),
            s.col_norms_sq(MatrixId::B).to_vec(),
            s.frob_sq(MatrixId::A),
            s.frob_sq(MatrixId::B),
        )
    }

    /// Squared column norms with explicitly supplied squared Frobenius norms.
    pub fn from_norms(m: usize, a: Vec<f64>, b: Vec<f64>, a_frob_sq: f64, b_frob_sq: f64) -> Result<Self> {
        if let Some(v) = a.iter().chain(&b).chain([&a_frob_sq, &b_frob_sq]).find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!("squared norm {v} is not a finite nonnegative number")));
        }
        let mut b_prefix = Vec::with_capacity(b.len() + 1);
        let mut acc = 0.0;
        b_prefix.push(0.0);
        for &v in &b {
            acc += v;
            b_prefix.push(acc);
        }
        let mut b_order: Vec<usize> = (0..b.len()).collect();
        b_order.sort_by(|&x, &y| b[y].total_cmp(&b[x]).then(x.cmp(&y)));
        let b_sorted = b_order.iter().map(|&j| b[j]).collect();
        Ok(Self { m, a_norms_sq: a, b_norms_sq: b, a_frob_sq, b_frob_sq, b_prefix, b_order, b_sorted })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n1(&self) -> usize {
        self.a_norms_sq.len()
    }

    pub fn n2(&self) -> usize {
        self.b_norms_sq.len()
    }

    fn check_defined(&self) -> Result<()> {
        if self.a_frob_sq <= 0.0 || self.b_frob_sq <= 0.0 {
            return Err(Error::ZeroNorm(format!(
                "‖A‖²_F = {}, ‖B‖²_F = {}",
                self.a_frob_sq, self.b_frob_sq
            )));
        }
        Ok(())
    }

    /// Row term `m ‖A_i‖² / (2 n2 ‖A‖²_F)`.
    fn alpha(&self, i: usize) -> f64 {
        self.m as f64 * self.a_norms_sq[i] / (2.0 * self.n2() as f64 * self.a_frob_sq)
    }

    /// Scale of the column term: `q_ij = alpha_i + beta * ‖B_j‖²`.
    fn beta(&self) -> f64 {
        self.m as f64 / (2.0 * self.n1() as f64 * self.b_frob_sq)
    }

    fn q_unchecked(&self, i: usize, j: usize) -> f64 {
        self.alpha(i) + self.beta() * self.b_norms_sq[j]
    }

    pub fn q_of(&self, i: usize, j: usize) -> Result<f64> {
        self.check_defined()?;
        if i >= self.n1() || j >= self.n2() {
            return Err(Error::IndexOutOfRange(format!(
                "({i}, {j}) outside {}x{}",
                self.n1(),
                self.n2()
            )));
        }
        Ok(self.q_unchecked(i, j))
    }

    /// `min(1, q_ij)`.
    pub fn q_hat(&self, i: usize, j: usize) -> Result<f64> {
        Ok(self.q_of(i, j)?.min(1.0))
    }

    /// Expected number of proposals in row `i`: `Σ_j q_ij`.
    fn row_mass(&self, i: usize) -> f64 {
        self.n2() as f64 * self.alpha(i) + self.beta() * self.b_prefix[self.n2()]
    }

    /// Column `j` with probability `q_ij / Σ_l q_il`, where `u` is uniform on
    /// `[0, 1)`. The row CDF `C(j) = j alpha_i + beta prefix[j]` is searched
    /// directly; no per-row table is built.
    pub fn draw_column(&self, i: usize, u: f64) -> usize {
        let (alpha, beta) = (self.alpha(i), self.beta());
        let target = u * self.row_mass(i);
        let n2 = self.n2();
        // number of j in 1..=n2 with C(j) <= target
        let below = partition_point(1, n2 + 1, |j| j as f64 * alpha + beta * self.b_prefix[j] <= target);
        below.min(n2 - 1)
    }

    /// Normalized row distribution `q_ij / Σ_l q_il`.
    pub fn row_distribution(&self, i: usize) -> Result<Vec<f64>> {
        self.check_defined()?;
        let mass = self.row_mass(i);
        Ok((0..self.n2()).map(|j| self.q_unchecked(i, j) / mass).collect())
    }
}

/// First index in `lo..hi` where `pred` fails, minus `lo`; `pred` must be
/// true on a prefix.
fn partition_point(lo: usize, hi: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut a, mut b) = (lo, hi);
    while a < b {
        let mid = a + (b - a) / 2;
        if pred(mid) {
            a = mid + 1;
        } else {
            b = mid;
        }
    }
    a - lo
}

/// Independent Bernoulli(`min(1, q_ij)`) per entry; sorted by `(i, j)`.
pub fn sample_binomial(dist: &SampleDistribution, seed: u64) -> Result<Vec<(usize, usize)>> {
    if dist.m == 0 {
        return Ok(Vec::new());
    }
    dist.check_defined()?;
    let rows: Vec<Vec<(usize, usize)>> = (0..dist.n1())
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, Domain::BinomialSampler, i as u64);
            (0..dist.n2())
                .filter(|&j| rng.random::<f64>() < dist.q_unchecked(i, j))
                .map(|j| (i, j))
                .collect()
        })
        .collect();
    Ok(rows.concat())
}

/// Fast sampler with exactly the binomial model's marginals.
///
/// Per row, entries with `q_ij >= 1/2` (a prefix of the columns ordered by
/// `‖B_j‖`) get a direct Bernoulli draw. The rest come from a Poisson number
/// of proposals at rate `g q_ij`, `g = 2 ln 2`, drawn through the affine row
/// CDF; a proposal landing on `j` is kept with probability
/// `-ln(1 - q_ij) / (g q_ij)`, so `j` is included with probability exactly
/// `q_ij`, independently of every other entry. Sorted by `(i, j)`.
pub fn sample_fast(dist: &SampleDistribution, seed: u64) -> Result<Vec<(usize, usize)>> {
    if dist.m == 0 {
        return Ok(Vec::new());
    }
    dist.check_defined()?;
    let g = -(1.0 - HEAVY).ln() / HEAVY;
    let rows: Vec<Vec<(usize, usize)>> = (0..dist.n1())
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, Domain::Sampler, i as u64);
            let alpha = dist.alpha(i);
            let beta = dist.beta();
            let mut cols = Vec::new();
            let heavy = dist.b_sorted.partition_point(|&b| alpha + beta * b >= HEAVY);
            for &j in &dist.b_order[..heavy] {
                if rng.random::<f64>() < dist.q_unchecked(i, j) {
                    cols.push(j);
                }
            }
            for _ in 0..poisson(&mut rng, g * dist.row_mass(i)) {
                let j = dist.draw_column(i, rng.random::<f64>());
                let q = dist.q_unchecked(i, j);
                if q >= HEAVY || q <= 0.0 {
                    continue;
                }
                if rng.random::<f64>() * g * q < -(-q).ln_1p() {
                    cols.push(j);
                }
            }
            cols.sort_unstable();
            cols.dedup();
            cols.into_iter().map(|j| (i, j)).collect()
        })
        .collect();
    Ok(rows.concat())
}

/// Row-count variant: row `i` receives a fixed number of draws, the
/// stochastically rounded expected count `Σ_j q_ij`, from the row
/// distribution; duplicates collapse. Inclusion probabilities are close to,
/// but not exactly, `min(1, q_ij)`.
pub fn sample_fast_fixed(dist: &SampleDistribution, seed: u64) -> Result<Vec<(usize, usize)>> {
    if dist.m == 0 {
        return Ok(Vec::new());
    }
    dist.check_defined()?;
    let rows: Vec<Vec<(usize, usize)>> = (0..dist.n1())
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, Domain::Sampler, i as u64);
            let mass = dist.row_mass(i);
            let mut count = mass.floor() as u64;
            if rng.random::<f64>() < mass - mass.floor() {
                count += 1;
            }
            let mut cols: Vec<usize> = (0..count).map(|_| dist.draw_column(i, rng.random::<f64>())).collect();
            cols.sort_unstable();
            cols.dedup();
            cols.into_iter().map(|j| (i, j)).collect()
        })
        .collect();
    Ok(rows.concat())
}

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let p = Poisson::new(lambda).expect("positive finite rate");
    p.sample(rng) as u64
}

pub fn sample(dist: &SampleDistribution, kind: SamplerKind, seed: u64) -> Result<Vec<(usize, usize)>> {
    match kind {
        SamplerKind::Fast => sample_fast(dist, seed),
        SamplerKind::Binomial => sample_binomial(dist, seed),
    }
}

/// One observed entry of the product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub i: usize,
    pub j: usize,
    pub value: f64,
    pub q_hat: f64,
    pub weight: f64,
}

/// The observed set `Ω`: distinct entries sorted by `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    n1: usize,
    n2: usize,
    entries: Vec<SampleEntry>,
}

impl SampleSet {
    /// Validates and sorts `(i, j, value, q_hat)` records; weights are `1 / q_hat`.
    pub fn new(n1: usize, n2: usize, records: Vec<(usize, usize, f64, f64)>) -> Result<Self> {
        let mut entries = Vec::with_capacity(records.len());
        for (i, j, value, q_hat) in records {
            if i >= n1 || j >= n2 {
                return Err(Error::IndexOutOfRange(format!("({i}, {j}) outside {n1}x{n2}")));
            }
            if !value.is_finite() {
                return Err(Error::NonFinite { value, location: format!("sample ({i}, {j})") });
            }
            if !(q_hat > 0.0 && q_hat <= 1.0) {
                return Err(Error::invalid(format!("q_hat = {q_hat} at ({i}, {j}) is outside (0, 1]")));
            }
            entries.push(SampleEntry { i, j, value, q_hat, weight: 1.0 / q_hat });
        }
        entries.sort_by_key(|e| (e.i, e.j));
        if let Some(w) = entries.windows(2).find(|w| (w[0].i, w[0].j) == (w[1].i, w[1].j)) {
            return Err(Error::invalid(format!("duplicate sample ({}, {})", w[0].i, w[0].j)));
        }
        Ok(Self { n1, n2, entries })
    }

    pub fn empty(n1: usize, n2: usize) -> Self {
        Self { n1, n2, entries: Vec::new() }
    }

    pub(crate) fn from_sorted(n1: usize, n2: usize, entries: Vec<SampleEntry>) -> Self {
        debug_assert!(entries.windows(2).all(|w| (w[0].i, w[0].j) < (w[1].i, w[1].j)));
        Self { n1, n2, entries }
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[SampleEntry] {
        &self.entries
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.entries.iter().map(|e| (e.i, e.j)).collect()
    }

    /// Same entries with values replaced, e.g. by exact products.
    pub fn with_values(&self, values: &[f64]) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::dims(format!("{} values for {} samples", values.len(), self.len())));
        }
        let entries = self
            .entries
            .iter()
            .zip(values)
            .map(|(e, &value)| SampleEntry { value, ..*e })
            .collect();
        Ok(Self::from_sorted(self.n1, self.n2, entries))
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "# {} {}", self.n1, self.n2)?;
        writeln!(w, "i,j,value,q_hat")?;
        for e in &self.entries {
            writeln!(w, "{},{},{},{}", e.i, e.j, e.value, e.q_hat)?;
        }
        Ok(())
    }

    pub fn read_csv(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let dims_line = lines.next().ok_or_else(|| Error::format("empty sample file"))??;
        let dims: Vec<usize> = dims_line
            .trim_start_matches('#')
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::format(format!("bad dimension line {dims_line:?}"))))
            .collect::<Result<_>>()?;
        if dims.len() != 2 {
            return Err(Error::format(format!("bad dimension line {dims_line:?}")));
        }
        match lines.next() {
            Some(Ok(h)) if h.trim() == "i,j,value,q_hat" => {}
            _ => return Err(Error::format("missing i,j,value,q_hat header")),
        }
        let mut records = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::format(format!("bad sample record on line {}: {line:?}", n + 3));
            if f.len() != 4 {
                return Err(bad());
            }
            records.push((
                f[0].parse().map_err(|_| bad())?,
                f[1].parse().map_err(|_| bad())?,
                f[2].parse().map_err(|_| bad())?,
                f[3].parse().map_err(|_| bad())?,
            ));
        }
        Self::new(dims[0], dims[1], records)
    }

    /// Header `"SMPO"`, version, `n1`, `n2`, count (all `u32`), then records
    /// `(u32 i, u32 j, f64 value, f64 q_hat)`, little-endian.
    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(SAMPLE_MAGIC)?;
        write_u32(w, SAMPLE_VERSION)?;
        write_u32(w, to_u32(self.n1, "n1")?)?;
        write_u32(w, to_u32(self.n2, "n2")?)?;
        write_u32(w, to_u32(self.len(), "sample count")?)?;
        for e in &self.entries {
            w.write_all(&(e.i as u32).to_le_bytes())?;
            w.write_all(&(e.j as u32).to_le_bytes())?;
            w.write_all(&e.value.to_le_bytes())?;
            w.write_all(&e.q_hat.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(r: &mut impl Read) -> Result<Self> {
        expect_magic(r, SAMPLE_MAGIC)?;
        let version = read_u32(r)?;
        if version != SAMPLE_VERSION {
            return Err(Error::format(format!("unsupported sample set version {version}")));
        }
        let n1 = read_u32(r)? as usize;
        let n2 = read_u32(r)? as usize;
        let count = read_u32(r)? as usize;
        let mut records = Vec::with_capacity(count.min(1 << 24));
        for _ in 0..count {
            let rec: [u8; 24] = read_array(r)?;
            let u = |a: usize| u32::from_le_bytes(rec[a..a + 4].try_into().unwrap()) as usize;
            let f = |a: usize| f64::from_le_bytes(rec[a..a + 8].try_into().unwrap());
            records.push((u(0), u(4), f(8), f(16)));
        }
        Self::new(n1, n2, records)
    }

    /// Binary when the path ends in `.smpo`, CSV otherwise.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = BufWriter::new(File::create(path)?);
        if path.extension().is_some_and(|e| e == "smpo") {
            self.write_binary(&mut w)?;
        } else {
            self.write_csv(&mut w)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = BufReader::new(File::open(path)?);
        if path.extension().is_some_and(|e| e == "smpo") {
            Self::read_binary(&mut r)
        } else {
            Self::read_csv(r)
        }
    }
}

const SAMPLE_MAGIC: &[u8; 4] = b"SMPO";
const SAMPLE_VERSION: u32 = 1;

/// Attaches estimated values, `q_hat` and weights to distinct sampled pairs.
pub fn build_sample_set(
    pairs: &[(usize, usize)],
    dist: &SampleDistribution,
    summary: &SketchSummary,
    kind: EstimatorKind,
) -> Result<SampleSet> {
    let dims = summary.dims();
    if dims.n1 != dist.n1() || dims.n2 != dist.n2() {
        return Err(Error::dims(format!(
            "summary is {}x{}, distribution is {}x{}",
            dims.n1,
            dims.n2,
            dist.n1(),
            dist.n2()
        )));
    }
    let values = estimate_block(summary, pairs, kind)?;
    with_values(pairs, dist, &values)
}

/// Like [`build_sample_set`] with caller-supplied values.
pub fn with_values(pairs: &[(usize, usize)], dist: &SampleDistribution, values: &[f64]) -> Result<SampleSet> {
    if pairs.len() != values.len() {
        return Err(Error::dims(format!("{} values for {} pairs", values.len(), pairs.len())));
    }
    let records = pairs
        .iter()
        .zip(values)
        .map(|(&(i, j), &v)| Ok((i, j, v, dist.q_hat(i, j)?)))
        .collect::<Result<Vec<_>>>()?;
    SampleSet::new(dist.n1(), dist.n2(), records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::DenseMatrix;
    use crate::sketch::{ingest_dense, SketchOperator};

    fn random_dist(n1: usize, n2: usize, m: usize, seed: u64) -> SampleDistribution {
        let a = DenseMatrix::gaussian(7, n1, seed, 0).column_norms_sq();
        let b = DenseMatrix::gaussian(7, n2, seed, 1).column_norms_sq();
        SampleDistribution::new(m, a, b).unwrap()
    }

    #[test]
    fn uniform_norms_give_uniform_rates() {
        let n = 6;
        let d = SampleDistribution::new(30, vec![2.0; n], vec![5.0; n]).unwrap();
        for i in 0..n {
            for j in 0..n {
                assert!((d.q_of(i, j).unwrap() - 30.0 / 36.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_nonzero_column_of_a() {
        let (n1, n2, m) = (4, 3, 12);
        let b = vec![1.0, 2.0, 3.0];
        let d = SampleDistribution::new(m, vec![0.0, 9.0, 0.0, 0.0], b.clone()).unwrap();
        let fb: f64 = b.iter().sum();
        for j in 0..n2 {
            let col = m as f64 * b[j] / (2.0 * n1 as f64 * fb);
            assert!((d.q_of(1, j).unwrap() - (m as f64 / (2.0 * n2 as f64) + col)).abs() < 1e-14);
            assert!((d.q_of(0, j).unwrap() - col).abs() < 1e-14);
        }
    }

    #[test]
    fn rates_sum_to_m() {
        let d = random_dist(10, 8, 37, 2);
        let total: f64 = (0..10).flat_map(|i| (0..8).map(move |j| (i, j))).map(|(i, j)| d.q_of(i, j).unwrap()).sum();
        assert!((total - 37.0).abs() <= 1e-9 * 37.0);
    }

    #[test]
    fn zero_frobenius_is_an_error() {
        let d = SampleDistribution::new(5, vec![0.0, 0.0], vec![1.0]).unwrap();
        assert!(matches!(d.q_of(0, 0), Err(Error::ZeroNorm(_))));
        assert!(sample_fast(&d, 0).is_err());
        assert!(sample_binomial(&d, 0).is_err());
        let d0 = SampleDistribution::new(0, vec![0.0], vec![0.0]).unwrap();
        assert!(sample_fast(&d0, 0).unwrap().is_empty());
    }

    #[test]
    fn empty_and_saturated() {
        let d = random_dist(5, 4, 0, 1);
        assert!(sample_binomial(&d, 1).unwrap().is_empty());
        assert!(sample_fast(&d, 1).unwrap().is_empty());
        let d = random_dist(5, 4, 100_000, 1);
        let all: Vec<(usize, usize)> = (0..5).flat_map(|i| (0..4).map(move |j| (i, j))).collect();
        assert_eq!(sample_binomial(&d, 1).unwrap(), all);
        assert_eq!(sample_fast(&d, 1).unwrap(), all);
    }

    #[test]
    fn deterministic_and_sorted() {
        let d = random_dist(30, 20, 120, 3);
        for kind in [SamplerKind::Fast, SamplerKind::Binomial] {
            let s1 = sample(&d, kind, 9).unwrap();
            assert_eq!(s1, sample(&d, kind, 9).unwrap());
            assert_ne!(s1, sample(&d, kind, 10).unwrap());
            assert!(s1.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn draw_column_follows_row_distribution() {
        // chi-squared goodness of fit over 1e5 draws from one row
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let d = random_dist(1, 40, 20, 5);
        let probs = d.row_distribution(0).unwrap();
        let mut counts = vec![0usize; 40];
        let mut rng = rng::stream(4, Domain::Generator, 0);
        let draws = 100_000;
        for _ in 0..draws {
            counts[d.draw_column(0, rng.random())] += 1;
        }
        let stat: f64 = counts
            .iter()
            .zip(&probs)
            .map(|(&c, &p)| (c as f64 - draws as f64 * p).powi(2) / (draws as f64 * p))
            .sum();
        let crit = ChiSquared::new(39.0).unwrap().inverse_cdf(0.999);
        assert!(stat < crit, "chi2 {stat} >= {crit}");
    }

    #[test]
    fn zero_mass_columns_are_never_drawn() {
        let d = SampleDistribution::new(50, vec![0.0, 4.0], vec![0.0, 1.0, 0.0, 2.0, 0.0]).unwrap();
        let s = sample_fast(&d, 3).unwrap();
        assert!(s.iter().any(|&(i, _)| i == 0));
        assert!(s.iter().filter(|&&(i, _)| i == 0).all(|&(_, j)| j == 1 || j == 3));
        for u in [0.0, 0.3, 0.999_999_999] {
            assert!([1, 3].contains(&d.draw_column(0, u)));
        }
    }

    #[test]
    fn fast_sampler_expected_size_matches_binomial() {
        let d = random_dist(50, 40, 500, 6);
        let expected: f64 = (0..50).flat_map(|i| (0..40).map(move |j| (i, j))).map(|(i, j)| d.q_hat(i, j).unwrap()).sum();
        let trials = 500;
        let mean = (0..trials).map(|t| sample_fast(&d, t).unwrap().len() as f64).sum::<f64>() / trials as f64;
        assert!((mean - expected).abs() <= 3.0 * (500f64).sqrt() / (trials as f64).sqrt(), "{mean} vs {expected}");
        let fixed = (0..trials).map(|t| sample_fast_fixed(&d, t).unwrap().len() as f64).sum::<f64>() / trials as f64;
        assert!((fixed - expected).abs() <= 3.0 * 500f64.sqrt());
    }

    fn inclusion_counts(d: &SampleDistribution, trials: u64, f: fn(&SampleDistribution, u64) -> Result<Vec<(usize, usize)>>) -> Vec<u32> {
        let n2 = d.n2();
        let mut hits = vec![0u32; d.n1() * n2];
        for t in 0..trials {
            for (i, j) in f(d, t).unwrap() {
                hits[i * n2 + j] += 1;
            }
        }
        hits
    }

    #[test]
    fn weighted_indicator_is_unbiased() {
        // Norms concentrate (d = 400), so every rate sits in [0.3, 0.9]
        // and covers both the direct and the proposal branch.
        let (n, trials) = (20, 10_000u64);
        let a = DenseMatrix::gaussian(400, n, 7, 0).column_norms_sq();
        let b = DenseMatrix::gaussian(400, n, 7, 1).column_norms_sq();
        let d = SampleDistribution::new(220, a, b).unwrap();
        let hits = inclusion_counts(&d, trials, sample_fast);
        let mut branches = (false, false);
        for i in 0..n {
            for j in 0..n {
                let q = d.q_hat(i, j).unwrap();
                assert!(q >= 0.05);
                if q < HEAVY { branches.0 = true } else { branches.1 = true }
                let est = hits[i * n + j] as f64 / q / trials as f64;
                assert!((est - 1.0).abs() < 0.05, "({i},{j}) q={q} est={est}");
            }
        }
        assert!(branches.0 && branches.1);
    }

    #[test]
    fn fast_marginals_pass_chi_squared() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let (n, trials) = (20, 10_000u64);
        let d = random_dist(n, n, 60, 7);
        let hits = inclusion_counts(&d, trials, sample_fast);
        let mut stat = 0.0;
        let mut df = 0.0;
        for i in 0..n {
            for j in 0..n {
                let q = d.q_hat(i, j).unwrap();
                if q < 1.0 {
                    let e = q * trials as f64;
                    stat += (hits[i * n + j] as f64 - e).powi(2) / (e * (1.0 - q));
                    df += 1.0;
                }
            }
        }
        let crit = ChiSquared::new(df).unwrap().inverse_cdf(0.999);
        assert!(stat < crit, "chi2 {stat} >= {crit} (df {df})");
    }

    fn sample_set_instance() -> (SampleDistribution, SketchSummary) {
        let a = DenseMatrix::gaussian(12, 6, 1, 0);
        let b = DenseMatrix::gaussian(12, 5, 1, 1);
        let op = SketchOperator::gaussian(4, 12, 2).unwrap();
        let s = ingest_dense(&a, &b, &op).unwrap();
        (SampleDistribution::from_summary(&s, 1_000_000).unwrap(), s)
    }

    #[test]
    fn build_sample_set_cases() {
        let (dist, s) = sample_set_instance();
        let empty = build_sample_set(&[], &dist, &s, EstimatorKind::Rescaled).unwrap();
        assert!(empty.is_empty());
        let all: Vec<(usize, usize)> = (0..6).flat_map(|i| (0..5).map(move |j| (i, j))).collect();
        let set = build_sample_set(&all, &dist, &s, EstimatorKind::Rescaled).unwrap();
        for e in set.entries() {
            assert_eq!(e.weight, 1.0);
            let v = crate::estimate::estimate_entry(&s, e.i, e.j, EstimatorKind::Rescaled).unwrap();
            assert_eq!(e.value.to_bits(), v.to_bits());
        }
        assert!(build_sample_set(&[(0, 0), (0, 0)], &dist, &s, EstimatorKind::Plain).is_err());
        assert!(build_sample_set(&[(6, 0)], &dist, &s, EstimatorKind::Plain).is_err());
    }

    #[test]
    fn weights_invert_q_hat() {
        let (_, s) = sample_set_instance();
        let dist = SampleDistribution::from_summary(&s, 7).unwrap();
        let pairs = sample_binomial(&dist, 1).unwrap();
        let set = build_sample_set(&pairs, &dist, &s, EstimatorKind::Rescaled).unwrap();
        for e in set.entries() {
            assert!((e.weight * e.q_hat - 1.0).abs() < 1e-12);
            assert!(e.q_hat > 0.0 && e.q_hat <= 1.0);
        }
    }

    #[test]
    fn file_round_trips() {
        let (_, s) = sample_set_instance();
        let dist = SampleDistribution::from_summary(&s, 12).unwrap();
        let pairs = sample_fast(&dist, 2).unwrap();
        let set = build_sample_set(&pairs, &dist, &s, EstimatorKind::Rescaled).unwrap();
        let mut csv = Vec::new();
        set.write_csv(&mut csv).unwrap();
        assert_eq!(SampleSet::read_csv(csv.as_slice()).unwrap(), set);
        let mut bin = Vec::new();
        set.write_binary(&mut bin).unwrap();
        assert_eq!(bin.len(), 20 + 24 * set.len());
        assert_eq!(SampleSet::read_binary(&mut bin.as_slice()).unwrap(), set);
        assert!(SampleSet::read_csv("# 2 2\ni,j,value,q_hat\n0,0,1,0\n".as_bytes()).is_err());
    }
}
