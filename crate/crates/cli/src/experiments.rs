//! Experiment drivers shared by the sweep subcommands and the acceptance suite.

use rayon::prelude::*;
use serde::Serialize;
use smp_pca::estimate::{estimate_block, EstimatorKind};
use smp_pca::pipeline::{
    lela_two_pass, operator_norm, sketch_svd_baseline, smp_pca_from_summary, Evaluator, PipelineConfig, StageTimes,
};
use smp_pca::rng::{self, derive_seed, Domain};
use smp_pca::sketch::random_unit_vector;
use smp_pca::waltmin::FactorPair;
use smp_pca::{exact_product, ingest_dense, truncated_svd, DenseMatrix, Result, SketchOperator};

use crate::generate::{generate, GeneratorKind, GeneratorSpec};
use rand::Rng;

/// Default budget multiplier: `m = 4 n r ln n`.
pub const DEFAULT_BUDGET: f64 = 4.0;

/// `mult · n r ln n` with `n = max(n1, n2)`, at least 1.
pub fn sample_budget(n1: usize, n2: usize, r: usize, mult: f64) -> usize {
    let n = n1.max(n2) as f64;
    ((mult * n * r as f64 * n.ln()).round() as usize).max(1)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JlResult {
    pub plain_mse: f64,
    pub rescaled_mse: f64,
}

/// Dot-product estimation error over `pairs` unit-vector pairs whose cosines
/// are uniform on `[-1, 1]`, each pair under its own Gaussian sketch.
pub fn jl_mse(d: usize, k: usize, pairs: usize, seed: u64) -> Result<JlResult> {
    let errs = (0..pairs as u64)
        .into_par_iter()
        .map(|p| {
            let mut rng = rng::stream(seed, Domain::Generator, p);
            let x = random_unit_vector(d, &mut rng);
            let c: f64 = rng.random_range(-1.0..=1.0);
            let mut z = random_unit_vector(d, &mut rng);
            let proj: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            z.iter_mut().zip(&x).for_each(|(zi, xi)| *zi -= proj * xi);
            let zn = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            let s = (1.0 - c * c).max(0.0).sqrt();
            let y: Vec<f64> = x.iter().zip(&z).map(|(xi, zi)| c * xi + s * zi / zn).collect();
            let truth: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            let op = SketchOperator::gaussian(k, d, derive_seed(seed, p))?;
            let (sx, sy) = (op.apply_dense(&x)?, op.apply_dense(&y)?);
            let dot: f64 = sx.iter().zip(&sy).map(|(a, b)| a * b).sum();
            let nx = sx.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny = sy.iter().map(|v| v * v).sum::<f64>().sqrt();
            let rescaled = if nx > 0.0 && ny > 0.0 { (dot / (nx * ny)).clamp(-1.0, 1.0) } else { 0.0 };
            Ok(((dot - truth).powi(2), (rescaled - truth).powi(2)))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = errs.len() as f64;
    Ok(JlResult {
        plain_mse: errs.iter().map(|e| e.0).sum::<f64>() / n,
        rescaled_mse: errs.iter().map(|e| e.1).sum::<f64>() / n,
    })
}

/// Rank-`r` factors of `A_rᵀ B_r`, the product of the separately truncated inputs.
pub fn separate_truncation(a: &DenseMatrix, b: &DenseMatrix, r: usize) -> Result<FactorPair> {
    let sa = truncated_svd(a, r)?;
    let sb = truncated_svd(b, r)?;
    // A_rᵀB_r = V_a S_a (U_aᵀ U_b) S_b V_bᵀ
    let core = exact_product(&sa.u, &sb.u)?;
    let left = DenseMatrix::from_fn(r, r, |i, j| sa.s[i] * core.get(i, j) * sb.s[j]);
    FactorPair::new(exact_product(&sa.v.transpose(), &left)?, sb.v)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ErrorPair {
    pub spectral: f64,
    pub frob: f64,
}

fn score(ev: &Evaluator, f: &FactorPair) -> Result<ErrorPair> {
    let rep = ev.evaluate(f)?;
    Ok(ErrorPair { spectral: rep.spectral_err_rel, frob: rep.frob_err_rel })
}

/// Errors of the methods run at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointResult {
    pub seed: u64,
    pub k: usize,
    pub m: usize,
    pub samples: usize,
    pub smp: ErrorPair,
    pub lela: Option<ErrorPair>,
    pub sketch_svd: Option<ErrorPair>,
    pub optimal: ErrorPair,
    pub times: StageTimes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Baselines {
    pub lela: bool,
    pub sketch_svd: bool,
}

/// Sample-budget sweep: one instance and sketch per seed, every multiplier
/// of `n r ln n` in `mults`. Rows ordered by multiplier, then seed.
pub fn sweep_m(
    spec: &GeneratorSpec,
    base: &PipelineConfig,
    mults: &[f64],
    seeds: &[u64],
    baselines: Baselines,
) -> Result<Vec<(f64, PointResult)>> {
    let per_seed = seeds
        .par_iter()
        .map(|&seed| {
            let (a, b) = generate(&GeneratorSpec { seed, ..*spec })?;
            let ev = Evaluator::new(&a, &b, base.r())?;
            let mut cfg = PipelineConfig { seed, ..*base };
            let op = cfg.operator(a.rows())?;
            let start = std::time::Instant::now();
            let summary = ingest_dense(&a, &b, &op)?;
            let sketch_secs = start.elapsed().as_secs_f64();
            let svd = if baselines.sketch_svd { Some(score(&ev, &sketch_svd_baseline(&summary, cfg.r())?)?) } else { None };
            let optimal = ErrorPair { spectral: ev.optimal_spectral_err_rel(), frob: ev.optimal_frob_err_rel() };
            mults
                .iter()
                .map(|&mult| {
                    cfg.m = sample_budget(a.cols(), b.cols(), cfg.r(), mult);
                    let out = smp_pca_from_summary(&summary, &cfg)?;
                    let lela = if baselines.lela { Some(score(&ev, &lela_two_pass(&a, &b, &cfg)?.factors)?) } else { None };
                    let mut times = out.times;
                    times.sketch = sketch_secs;
                    Ok((
                        mult,
                        PointResult {
                            seed,
                            k: cfg.k,
                            m: cfg.m,
                            samples: out.sample_count,
                            smp: score(&ev, &out.factors)?,
                            lela,
                            sketch_svd: svd,
                            optimal,
                            times,
                        },
                    ))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(order_rows(per_seed))
}

/// Sketch-size sweep: one instance per seed, every `k` in `ks`. The budget
/// `base.m` is shared by all points. Rows ordered by `k`, then seed.
pub fn sweep_k(
    spec: &GeneratorSpec,
    base: &PipelineConfig,
    ks: &[usize],
    seeds: &[u64],
    baselines: Baselines,
) -> Result<Vec<(usize, PointResult)>> {
    let per_seed = seeds
        .par_iter()
        .map(|&seed| {
            let (a, b) = generate(&GeneratorSpec { seed, ..*spec })?;
            let ev = Evaluator::new(&a, &b, base.r())?;
            let optimal = ErrorPair { spectral: ev.optimal_spectral_err_rel(), frob: ev.optimal_frob_err_rel() };
            let cfg = PipelineConfig { seed, ..*base };
            // Ω depends only on the exact norms and the seed, not on k.
            let lela = if baselines.lela { Some(score(&ev, &lela_two_pass(&a, &b, &cfg)?.factors)?) } else { None };
            ks.iter()
                .map(|&k| {
                    let cfg = PipelineConfig { k, ..cfg };
                    let op = cfg.operator(a.rows())?;
                    let start = std::time::Instant::now();
                    let summary = ingest_dense(&a, &b, &op)?;
                    let sketch_secs = start.elapsed().as_secs_f64();
                    let out = smp_pca_from_summary(&summary, &cfg)?;
                    let svd = if baselines.sketch_svd { Some(score(&ev, &sketch_svd_baseline(&summary, cfg.r())?)?) } else { None };
                    let mut times = out.times;
                    times.sketch = sketch_secs;
                    Ok((
                        k,
                        PointResult {
                            seed,
                            k,
                            m: cfg.m,
                            samples: out.sample_count,
                            smp: score(&ev, &out.factors)?,
                            lela,
                            sketch_svd: svd,
                            optimal,
                            times,
                        },
                    ))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(order_rows(per_seed))
}

/// Flattens per-seed rows into parameter-major order.
fn order_rows<P: Copy>(per_seed: Vec<Vec<(P, PointResult)>>) -> Vec<(P, PointResult)> {
    let points = per_seed.first().map_or(0, Vec::len);
    let mut out = Vec::with_capacity(points * per_seed.len());
    for p in 0..points {
        for rows in &per_seed {
            out.push(rows[p].clone());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConePoint {
    pub theta_deg: f64,
    pub seed: u64,
    /// `‖AᵀB − ÃᵀB̃‖ / ‖AᵀB‖`.
    pub plain_err: f64,
    /// `‖AᵀB − M̃‖ / ‖AᵀB‖` with the rescaled estimates.
    pub rescaled_err: f64,
    pub smp_err: f64,
    pub sketch_svd_err: f64,
}

impl ConePoint {
    pub fn estimator_ratio(&self) -> f64 {
        self.plain_err / self.rescaled_err
    }

    pub fn method_ratio(&self) -> f64 {
        self.sketch_svd_err / self.smp_err
    }
}

/// One cone instance: full-matrix estimator errors and rank-r method errors.
pub fn cone_point(theta_deg: f64, d: usize, n: usize, cfg: &PipelineConfig) -> Result<ConePoint> {
    let spec = GeneratorSpec::new(GeneratorKind::Cone, d, n, n, cfg.seed).with_theta(theta_deg);
    let (a, b) = generate(&spec)?;
    let op = cfg.operator(d)?;
    let summary = ingest_dense(&a, &b, &op)?;
    let product = exact_product(&a, &b)?;
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|j| (0..n).map(move |i| (i, j))).collect();
    let estimate_err = |kind| -> Result<f64> {
        let est = DenseMatrix::from_col_major(n, n, estimate_block(&summary, &pairs, kind)?)?;
        operator_norm(&product.sub(&est)?)
    };
    let top = operator_norm(&product)?;
    let ev = Evaluator::new(&a, &b, cfg.r())?;
    let smp = smp_pca_from_summary(&summary, cfg)?;
    Ok(ConePoint {
        theta_deg,
        seed: cfg.seed,
        plain_err: estimate_err(EstimatorKind::Plain)? / top,
        rescaled_err: estimate_err(EstimatorKind::Rescaled)? / top,
        smp_err: ev.spectral_err_rel(&smp.factors)?,
        sketch_svd_err: ev.spectral_err_rel(&sketch_svd_baseline(&summary, cfg.r())?)?,
    })
}

/// Median summary of the cone points at one angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConeSummary {
    pub theta_deg: f64,
    pub plain_err: f64,
    pub rescaled_err: f64,
    pub estimator_ratio: f64,
    pub smp_err: f64,
    pub sketch_svd_err: f64,
    pub method_ratio: f64,
}

/// Every `(theta, seed)` point, ordered by angle then seed, and the
/// per-angle medians (ratios are medians of per-seed ratios).
pub fn sweep_theta(
    thetas: &[f64],
    d: usize,
    n: usize,
    base: &PipelineConfig,
    seeds: &[u64],
) -> Result<(Vec<ConePoint>, Vec<ConeSummary>)> {
    let grid: Vec<(f64, u64)> = thetas.iter().flat_map(|&t| seeds.iter().map(move |&s| (t, s))).collect();
    let points = grid
        .par_iter()
        .map(|&(theta, seed)| cone_point(theta, d, n, &PipelineConfig { seed, ..*base }))
        .collect::<Result<Vec<_>>>()?;
    let summaries = thetas
        .iter()
        .map(|&theta| {
            let at: Vec<&ConePoint> = points.iter().filter(|p| p.theta_deg == theta).collect();
            let med = |f: &dyn Fn(&ConePoint) -> f64| median(&at.iter().map(|p| f(p)).collect::<Vec<_>>());
            ConeSummary {
                theta_deg: theta,
                plain_err: med(&|p| p.plain_err),
                rescaled_err: med(&|p| p.rescaled_err),
                estimator_ratio: med(&|p| p.estimator_ratio()),
                smp_err: med(&|p| p.smp_err),
                sketch_svd_err: med(&|p| p.sketch_svd_err),
                method_ratio: med(&|p| p.method_ratio()),
            }
        })
        .collect();
    Ok((points, summaries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use smp_pca::waltmin::Partition;

    #[test]
    fn median_cases() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn budget_formula() {
        let m = sample_budget(1000, 800, 5, 4.0);
        assert_eq!(m, (4.0 * 1000.0 * 5.0 * 1000f64.ln()).round() as usize);
        assert!(sample_budget(1000, 1000, 5, 2.0).abs_diff(2 * sample_budget(1000, 1000, 5, 1.0)) <= 1);
        assert_eq!(sample_budget(1, 1, 1, 1.0), 1);
    }

    #[test]
    fn separate_truncation_matches_dense() {
        let a = DenseMatrix::gaussian(12, 8, 1, 0);
        let b = DenseMatrix::gaussian(12, 9, 1, 1);
        let f = separate_truncation(&a, &b, 3).unwrap();
        let ar = truncated_svd(&a, 3).unwrap().reconstruct();
        let br = truncated_svd(&b, 3).unwrap().reconstruct();
        let reference = exact_product(&ar, &br).unwrap();
        assert!(f.product().max_abs_diff(&reference) < 1e-10);
    }

    #[test]
    fn jl_small_run_favors_rescaling() {
        let r = jl_mse(200, 10, 400, 3).unwrap();
        assert!(r.rescaled_mse < r.plain_mse);
    }

    #[test]
    fn sweeps_are_ordered_and_deterministic() {
        let spec = GeneratorSpec::new(GeneratorKind::ExactRank, 40, 30, 30, 0).with_rank(2);
        let mut cfg = PipelineConfig::new(2, 16, 10, 3, 0);
        cfg.waltmin.partition = Partition::Reuse;
        let b = Baselines { lela: true, sketch_svd: true };
        let rows = sweep_m(&spec, &cfg, &[2.0, 8.0], &[4, 7], b).unwrap();
        let keys: Vec<(f64, u64)> = rows.iter().map(|(m, p)| (*m, p.seed)).collect();
        assert_eq!(keys, vec![(2.0, 4), (2.0, 7), (8.0, 4), (8.0, 7)]);
        let again = sweep_m(&spec, &cfg, &[2.0, 8.0], &[4, 7], b).unwrap();
        for (x, y) in rows.iter().zip(&again) {
            assert_eq!(x.1.smp, y.1.smp);
        }
        let rows = sweep_k(&spec, &cfg, &[8, 16], &[1], b).unwrap();
        assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![8, 16]);
        assert_eq!(rows[0].1.lela, rows[1].1.lela);
    }
}
