//! End-to-end one-pass approximation, the two-pass and sketch-SVD baselines,
//! the parameter advisor and the desk-scale evaluator.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::EstimatorKind;
use crate::matrix::{
    dense_svd, exact_product, singular_values, spectral_norm, DenseMatrix, Entry, EntryStream, MatrixId,
    SPECTRAL_MAX_ITERS, SPECTRAL_TOL,
};
use crate::rng::derive_seed;
use crate::sample::{build_sample_set, sample, with_values, SampleDistribution, SampleSet, SamplerKind};
use crate::sketch::{exact_norms, ingest, ingest_dense, SketchKind, SketchOperator, SketchSummary};
use crate::waltmin::{run_waltmin, ColumnNorms, FactorPair, Partition, WaltminConfig, WaltminDiagnostics};

const SAMPLER_TAG: u64 = 1;
const PARTITION_TAG: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Sketch size.
    pub k: usize,
    /// Expected number of sampled entries.
    pub m: usize,
    pub sketch: SketchKind,
    pub estimator: EstimatorKind,
    pub sampler: SamplerKind,
    pub seed: u64,
    /// Holds the rank `r` and the iteration count `T`.
    pub waltmin: WaltminConfig,
}

impl PipelineConfig {
    pub fn new(r: usize, k: usize, m: usize, iterations: usize, seed: u64) -> Self {
        Self {
            k,
            m,
            sketch: SketchKind::Gaussian,
            estimator: EstimatorKind::Rescaled,
            sampler: SamplerKind::Fast,
            seed,
            waltmin: WaltminConfig::new(r, iterations),
        }
    }

    pub fn r(&self) -> usize {
        self.waltmin.r
    }

    pub fn iterations(&self) -> usize {
        self.waltmin.iterations
    }

    pub fn validate(&self) -> Result<()> {
        self.waltmin.validate()?;
        if self.k == 0 {
            return Err(Error::invalid("sketch size k must be at least 1"));
        }
        if self.m == 0 {
            return Err(Error::invalid("sample budget m must be at least 1"));
        }
        if self.waltmin.partition == Partition::Fresh && self.m < self.waltmin.subsets() {
            return Err(Error::invalid(format!(
                "sample budget m = {} is below 2T+1 = {} required by fresh partitioning",
                self.m,
                self.waltmin.subsets()
            )));
        }
        Ok(())
    }

    pub fn operator(&self, d: usize) -> Result<SketchOperator> {
        SketchOperator::new(self.sketch, self.k, d, self.seed)
    }

    pub fn sampler_seed(&self) -> u64 {
        derive_seed(self.seed, SAMPLER_TAG)
    }

    pub fn partition_seed(&self) -> u64 {
        derive_seed(self.seed, PARTITION_TAG)
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub sketch: f64,
    pub sample: f64,
    pub estimate: f64,
    pub waltmin: f64,
}

impl StageTimes {
    pub fn total(&self) -> f64 {
        self.sketch + self.sample + self.estimate + self.waltmin
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        [("sketch", self.sketch), ("sample", self.sample), ("estimate", self.estimate), ("waltmin", self.waltmin)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub factors: FactorPair,
    pub diagnostics: WaltminDiagnostics,
    pub sample_count: usize,
    pub times: StageTimes,
}

/// One pass over `stream`, then sampling, estimation and completion.
pub fn smp_pca<I>(stream: EntryStream<I>, cfg: &PipelineConfig) -> Result<PipelineOutput>
where
    I: Iterator<Item = Result<Entry>>,
{
    cfg.validate()?;
    let op = cfg.operator(stream.dims().d)?;
    let start = Instant::now();
    let summary = ingest(stream, &op)?;
    let sketch = start.elapsed().as_secs_f64();
    let mut out = smp_pca_from_summary(&summary, cfg)?;
    out.times.sketch = sketch;
    Ok(out)
}

/// [`smp_pca`] for materialized matrices; gives the same result as streaming
/// their entries in any order.
pub fn smp_pca_dense(a: &DenseMatrix, b: &DenseMatrix, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let op = cfg.operator(a.rows())?;
    let start = Instant::now();
    let summary = ingest_dense(a, b, &op)?;
    let sketch = start.elapsed().as_secs_f64();
    let mut out = smp_pca_from_summary(&summary, cfg)?;
    out.times.sketch = sketch;
    Ok(out)
}

/// Sampling, estimation and completion from an existing summary.
pub fn smp_pca_from_summary(summary: &SketchSummary, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    check_summary(summary, cfg)?;
    let (samples, sample_secs, estimate_secs) = timed_samples(summary, cfg)?;
    let start = Instant::now();
    let out = run_waltmin(&samples, &cfg.waltmin, &ColumnNorms::from_summary(summary), cfg.partition_seed())?;
    Ok(PipelineOutput {
        factors: out.factors,
        diagnostics: out.diagnostics,
        sample_count: samples.len(),
        times: StageTimes { sketch: 0.0, sample: sample_secs, estimate: estimate_secs, waltmin: start.elapsed().as_secs_f64() },
    })
}

fn check_summary(summary: &SketchSummary, cfg: &PipelineConfig) -> Result<()> {
    let info = summary.operator_info();
    if info.kind != cfg.sketch || info.k != cfg.k || info.seed != cfg.seed {
        return Err(Error::IncompatibleSummary(format!(
            "summary was built with {:?} k={} seed={}, config asks for {:?} k={} seed={}",
            info.kind, info.k, info.seed, cfg.sketch, cfg.k, cfg.seed
        )));
    }
    Ok(())
}

/// The sampled, estimated entries `Ω` that [`smp_pca_from_summary`] completes.
pub fn draw_samples(summary: &SketchSummary, cfg: &PipelineConfig) -> Result<SampleSet> {
    cfg.validate()?;
    check_summary(summary, cfg)?;
    Ok(timed_samples(summary, cfg)?.0)
}

fn timed_samples(summary: &SketchSummary, cfg: &PipelineConfig) -> Result<(SampleSet, f64, f64)> {
    let start = Instant::now();
    let dist = SampleDistribution::from_summary(summary, cfg.m)?;
    let pairs = sample(&dist, cfg.sampler, cfg.sampler_seed())?;
    let sample_secs = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let samples = build_sample_set(&pairs, &dist, summary, cfg.estimator)?;
    Ok((samples, sample_secs, start.elapsed().as_secs_f64()))
}

/// Two-pass baseline: exact column norms, the same sampling distribution and
/// seed as [`smp_pca`] (hence the same `Ω`), exact entry values on `Ω`.
pub fn lela_two_pass(a: &DenseMatrix, b: &DenseMatrix, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    if a.rows() != b.rows() {
        return Err(Error::dims(format!("A has {} rows, B has {}", a.rows(), b.rows())));
    }
    let start = Instant::now();
    let (a_norms, a_frob) = exact_norms(a)?;
    let (b_norms, b_frob) = exact_norms(b)?;
    let norms = ColumnNorms { a_norms_sq: a_norms.clone(), a_frob_sq: a_frob };
    let pass_one = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let dist = SampleDistribution::from_norms(cfg.m, a_norms, b_norms, a_frob, b_frob)?;
    let pairs = sample(&dist, cfg.sampler, cfg.sampler_seed())?;
    let sample_secs = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let values: Vec<f64> = pairs.iter().map(|&(i, j)| dot(a.column(i), b.column(j))).collect();
    let samples = with_values(&pairs, &dist, &values)?;
    let estimate = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let out = run_waltmin(&samples, &cfg.waltmin, &norms, cfg.partition_seed())?;
    Ok(PipelineOutput {
        factors: out.factors,
        diagnostics: out.diagnostics,
        sample_count: samples.len(),
        times: StageTimes { sketch: pass_one, sample: sample_secs, estimate, waltmin: start.elapsed().as_secs_f64() },
    })
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Top-`r` factors of `ÃᵀB̃` from the summary's sketches alone.
///
/// With thin QR factorizations `Ãᵀ = Q_a R_a` and `B̃ᵀ = Q_b R_b`, the SVD of
/// the `k x k` core `R_a R_bᵀ` gives that of `ÃᵀB̃` without forming it.
/// Missing directions (rank below `r`) are zero columns.
pub fn sketch_svd_baseline(s: &SketchSummary, r: usize) -> Result<FactorPair> {
    let dims = s.dims();
    if r == 0 {
        return Err(Error::invalid("rank r must be at least 1"));
    }
    if r > dims.n1.min(dims.n2) {
        return Err(Error::invalid(format!("rank {r} exceeds min(n1, n2) = {}", dims.n1.min(dims.n2))));
    }
    let k = s.k();
    let at = DMatrix::from_column_slice(k, dims.n1, s.sketch(MatrixId::A)).transpose();
    let bt = DMatrix::from_column_slice(k, dims.n2, s.sketch(MatrixId::B)).transpose();
    let qa = at.qr();
    let qb = bt.qr();
    let core = qa.r() * qb.r().transpose();
    let (uc, sv, vc) = dense_svd(&core);
    let (q_a, q_b) = (qa.q(), qb.q());
    let keep = r.min(sv.len());
    let mut u = DMatrix::zeros(dims.n1, r);
    let mut v = DMatrix::zeros(dims.n2, r);
    for c in 0..keep {
        if sv[c] <= 0.0 {
            break;
        }
        u.set_column(c, &(&q_a * uc.column(c) * sv[c]));
        v.set_column(c, &(&q_b * vc.column(c)));
    }
    FactorPair::new(DenseMatrix::from_nalgebra(&u), DenseMatrix::from_nalgebra(&v))
}

/// Norm quantities the advisor needs; any may be unknown.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormContext {
    pub a_frob: Option<f64>,
    pub b_frob: Option<f64>,
    pub a_spectral: Option<f64>,
    pub b_spectral: Option<f64>,
    pub product_frob: Option<f64>,
    /// Leading singular values of `AᵀB`, at least `r` of them.
    pub sigma: Option<Vec<f64>>,
}

/// Right-hand sides of the sufficient conditions on `k`, `m` and `T`, with
/// both unspecified global constants set to 1. Relative guidance only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Advice {
    pub k_raw: f64,
    pub m_raw: f64,
    pub t_raw: f64,
    pub k: u64,
    pub m: u64,
    pub t: u64,
    pub stable_rank: f64,
    pub rho: f64,
}

/// Evaluates the sketch-size, sample-count and iteration bounds for accuracy
/// `eta`, failure probability `gamma` and target `zeta`, with `n = max(n1, n2)`.
pub fn advise_parameters(eta: f64, gamma: f64, zeta: f64, ctx: &NormContext, n: usize, r: usize) -> Result<Advice> {
    for (name, v) in [("eta", eta), ("gamma", gamma)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::invalid(format!("{name} = {v} must lie in (0, 1)")));
        }
    }
    if !(zeta > 0.0 && zeta.is_finite()) {
        return Err(Error::invalid(format!("zeta = {zeta} must be positive")));
    }
    if n < 2 || r == 0 {
        return Err(Error::invalid(format!("need n >= 2 and r >= 1, got n = {n}, r = {r}")));
    }
    let need = |v: Option<f64>, name: &str| -> Result<f64> {
        match v {
            Some(x) if x.is_finite() && x > 0.0 => Ok(x),
            Some(x) => Err(Error::invalid(format!("{name} = {x} must be positive"))),
            None => Err(Error::invalid(format!("missing norm quantity {name}"))),
        }
    };
    let fa = need(ctx.a_frob, "a_frob")?;
    let fb = need(ctx.b_frob, "b_frob")?;
    let sa = need(ctx.a_spectral, "a_spectral")?;
    let sb = need(ctx.b_spectral, "b_spectral")?;
    let fp = need(ctx.product_frob, "product_frob")?;
    let sigma = ctx.sigma.as_deref().ok_or_else(|| Error::invalid("missing norm quantity sigma"))?;
    if sigma.len() < r {
        return Err(Error::invalid(format!("{} singular values supplied for rank {r}", sigma.len())));
    }
    let rho = need(Some(sigma[0]), "sigma_1")? / need(Some(sigma[r - 1]), "sigma_r")?;

    let stable_rank = (fa * fa / (sa * sa)).max(fb * fb / (sb * sb));
    let nf = n as f64;
    let rf = r as f64;
    let log_n = nf.ln();
    let t_raw = ((fa + fb) / zeta).ln();
    let t = (t_raw.ceil().max(1.0)) as u64;
    let k_raw = (sa * sa * sb * sb * rho * rho * rf.powi(3) / (fp * fp))
        * (stable_rank.max(2.0 * log_n) + (3.0 / gamma).ln())
        / (eta * eta);
    let m_raw = stable_rank * stable_rank / gamma
        * ((fa * fa + fb * fb) / fp).powi(2)
        * nf
        * rf.powi(3)
        * rho
        * rho
        * log_n
        * (t * t) as f64
        / (eta * eta);
    Ok(Advice { k_raw, m_raw, t_raw, k: k_raw.ceil() as u64, m: m_raw.ceil() as u64, t, stable_rank, rho })
}

/// Largest product size the evaluator materializes unless overridden.
pub const EVAL_MAX_ENTRIES: usize = 100_000_000;
/// Up to this min dimension spectral norms come from a dense SVD rather than
/// power iteration.
const DENSE_SPECTRAL_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub r: usize,
    /// `‖AᵀB − UVᵀ‖ / ‖AᵀB‖` in spectral norm.
    pub spectral_err_rel: f64,
    pub frob_err_rel: f64,
    pub optimal_spectral_err_rel: f64,
    pub optimal_frob_err_rel: f64,
    pub stable_rank_a: f64,
    pub stable_rank_b: f64,
    /// `σ_1 / σ_r`; absent when `σ_r = 0`.
    pub condition_number_rho: Option<f64>,
    /// Leading singular values of `AᵀB`.
    pub sigma: Vec<f64>,
    pub norms: NormContext,
    pub wall_times: BTreeMap<String, f64>,
}

/// Reference quantities of one `(A, B)` pair, computed once and reused to
/// score any number of factor pairs.
#[derive(Debug, Clone)]
pub struct Evaluator {
    r: usize,
    product: DenseMatrix,
    sigma: Vec<f64>,
    product_frob: f64,
    a_frob: f64,
    b_frob: f64,
    a_spectral: f64,
    b_spectral: f64,
}

impl Evaluator {
    pub fn new(a: &DenseMatrix, b: &DenseMatrix, r: usize) -> Result<Self> {
        Self::with_limit(a, b, r, EVAL_MAX_ENTRIES)
    }

    pub fn with_limit(a: &DenseMatrix, b: &DenseMatrix, r: usize, max_entries: usize) -> Result<Self> {
        if a.rows() != b.rows() {
            return Err(Error::dims(format!("A has {} rows, B has {}", a.rows(), b.rows())));
        }
        let (n1, n2) = (a.cols(), b.cols());
        if r == 0 || r > n1.min(n2) {
            return Err(Error::invalid(format!("rank {r} must lie in [1, {}]", n1.min(n2))));
        }
        if n1.saturating_mul(n2) > max_entries {
            return Err(Error::invalid(format!(
                "{n1}x{n2} product exceeds the evaluator limit of {max_entries} entries"
            )));
        }
        let product = exact_product(a, b)?;
        let sigma = singular_values(&product);
        let product_frob = product.frobenius_norm();
        if product_frob == 0.0 {
            return Err(Error::ZeroNorm("AᵀB is zero; relative errors are undefined".into()));
        }
        Ok(Self {
            r,
            sigma,
            product_frob,
            a_frob: a.frobenius_norm(),
            b_frob: b.frobenius_norm(),
            a_spectral: operator_norm(a)?,
            b_spectral: operator_norm(b)?,
            product,
        })
    }

    pub fn product(&self) -> &DenseMatrix {
        &self.product
    }

    /// All singular values of `AᵀB`, nonincreasing.
    pub fn singular_values(&self) -> &[f64] {
        &self.sigma
    }

    pub fn norm_context(&self) -> NormContext {
        NormContext {
            a_frob: Some(self.a_frob),
            b_frob: Some(self.b_frob),
            a_spectral: Some(self.a_spectral),
            b_spectral: Some(self.b_spectral),
            product_frob: Some(self.product_frob),
            sigma: Some(self.sigma.clone()),
        }
    }

    /// Best rank-`r` factors of `AᵀB` (`U` carries the singular values).
    pub fn optimal_factors(&self) -> Result<FactorPair> {
        let svd = crate::matrix::truncated_svd(&self.product, self.r)?;
        let u = DenseMatrix::from_fn(svd.u.rows(), self.r, |i, j| svd.u.get(i, j) * svd.s[j]);
        FactorPair::new(u, svd.v)
    }

    pub fn optimal_spectral_err_rel(&self) -> f64 {
        self.sigma.get(self.r).copied().unwrap_or(0.0) / self.sigma[0]
    }

    pub fn optimal_frob_err_rel(&self) -> f64 {
        let tail: f64 = self.sigma.iter().skip(self.r).map(|s| s * s).sum();
        tail.sqrt() / self.product_frob
    }

    /// Relative spectral error of `factors` only.
    pub fn spectral_err_rel(&self, factors: &FactorPair) -> Result<f64> {
        Ok(operator_norm(&self.residual(factors)?)? / self.sigma[0])
    }

    fn residual(&self, factors: &FactorPair) -> Result<DenseMatrix> {
        let approx = factors.product();
        if approx.shape() != self.product.shape() {
            return Err(Error::dims(format!(
                "factors give {:?}, product is {:?}",
                approx.shape(),
                self.product.shape()
            )));
        }
        self.product.sub(&approx)
    }

    pub fn evaluate(&self, factors: &FactorPair) -> Result<EvalReport> {
        let start = Instant::now();
        let residual = self.residual(factors)?;
        let spectral_err_rel = operator_norm(&residual)? / self.sigma[0];
        let frob_err_rel = residual.frobenius_norm() / self.product_frob;
        let sigma_r = self.sigma[self.r - 1];
        let condition_number_rho = (sigma_r > 0.0).then(|| self.sigma[0] / sigma_r);
        let leading = self.sigma.len().min((2 * self.r).max(10));
        let mut wall_times = BTreeMap::new();
        wall_times.insert("evaluate".to_string(), start.elapsed().as_secs_f64());
        let mut norms = self.norm_context();
        norms.sigma = Some(self.sigma[..leading].to_vec());
        Ok(EvalReport {
            r: self.r,
            spectral_err_rel,
            frob_err_rel,
            optimal_spectral_err_rel: self.optimal_spectral_err_rel(),
            optimal_frob_err_rel: self.optimal_frob_err_rel(),
            stable_rank_a: self.a_frob.powi(2) / self.a_spectral.powi(2),
            stable_rank_b: self.b_frob.powi(2) / self.b_spectral.powi(2),
            condition_number_rho,
            sigma: self.sigma[..leading].to_vec(),
            norms,
            wall_times,
        })
    }
}

/// One-shot [`Evaluator::evaluate`].
pub fn evaluate(a: &DenseMatrix, b: &DenseMatrix, factors: &FactorPair, r: usize) -> Result<EvalReport> {
    Evaluator::new(a, b, r)?.evaluate(factors)
}

/// Spectral norm: dense singular values up to a moderate size, power
/// iteration beyond.
pub fn operator_norm(m: &DenseMatrix) -> Result<f64> {
    if m.rows().min(m.cols()) <= DENSE_SPECTRAL_LIMIT {
        Ok(singular_values(m).first().copied().unwrap_or(0.0))
    } else {
        spectral_norm(m, SPECTRAL_TOL, SPECTRAL_MAX_ITERS)
    }
}
