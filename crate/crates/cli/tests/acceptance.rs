//! End-to-end acceptance checks. Each prints one `[PASS]` or `[FAIL]` line;
//! the process exits nonzero if any fails.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use smp_pca::io::stream_format::write_stream;
use smp_pca::matrix::{dense_entries, EntryStream, StreamFile};
use smp_pca::pipeline::{smp_pca, smp_pca_dense, Evaluator, PipelineConfig};
use smp_pca::sample::{sample_binomial, sample_fast, SampleDistribution, SampleSet};
use smp_pca::waltmin::{run_waltmin, ColumnNorms, Partition, WaltminConfig};
use smp_pca::{exact_product, ingest, merge, truncated_svd, DenseMatrix, Error, MatrixId, SketchKind, SketchOperator};
use smp_pca_cli::experiments::{
    jl_mse, median, sample_budget, separate_truncation, sweep_k, sweep_m, sweep_theta, Baselines,
};
use smp_pca_cli::generate::{generate, GeneratorKind, GeneratorSpec};
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Verdict = (bool, String);
type Outcome = Result<Verdict, Error>;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn reuse_config(r: usize, k: usize, m: usize, sketch: SketchKind) -> PipelineConfig {
    let mut cfg = PipelineConfig::new(r, k, m, 10, 0);
    cfg.sketch = sketch;
    cfg.waltmin.partition = Partition::Reuse;
    cfg
}

fn within(x: f64, target: f64, rel: f64) -> bool {
    (x / target - 1.0).abs() <= rel
}

fn rel_frob(x: &DenseMatrix, y: &DenseMatrix) -> f64 {
    x.sub(y).unwrap().frobenius_norm() / y.frobenius_norm()
}

fn jl_dominance() -> Outcome {
    let start = Instant::now();
    let res = jl_mse(1000, 10, 5000, 11)?;
    let secs = start.elapsed().as_secs_f64();
    let ok = res.rescaled_mse < res.plain_mse
        && within(res.rescaled_mse, 0.053, 0.5)
        && within(res.plain_mse, 0.129, 0.5)
        && secs < 10.0;
    Ok((ok, format!("rescaled mse {:.4}, plain mse {:.4}, {secs:.1}s", res.rescaled_mse, res.plain_mse)))
}

fn cone_ratios() -> Outcome {
    let start = Instant::now();
    let (n, r) = (200, 5);
    let cfg = reuse_config(r, 10, sample_budget(n, n, r, 4.0), SketchKind::Gaussian);
    let thetas = [10.0, 30.0, 60.0, 90.0, 150.0];
    let (_, summaries) = sweep_theta(&thetas, 1000, n, &cfg, &SEEDS)?;
    let secs = start.elapsed().as_secs_f64();
    let at = |t: f64| summaries.iter().find(|s| s.theta_deg == t).unwrap();
    let all_above = summaries.iter().all(|s| s.estimator_ratio >= 1.0 && s.method_ratio >= 1.0);
    let decreasing = at(10.0).estimator_ratio > at(90.0).estimator_ratio && at(10.0).method_ratio > at(90.0).method_ratio;
    let detail = summaries
        .iter()
        .map(|s| format!("{}deg {:.2}/{:.2}", s.theta_deg, s.estimator_ratio, s.method_ratio))
        .collect::<Vec<_>>()
        .join(", ");
    Ok((all_above && decreasing && secs < 120.0, format!("estimator/method ratios {detail}; {secs:.0}s")))
}

fn phase_transition() -> Outcome {
    let start = Instant::now();
    let (n, r) = (1000, 5);
    let spec = GeneratorSpec::new(GeneratorKind::ExactRank, n, n, n, 0).with_rank(r);
    let cfg = reuse_config(r, 200, 1, SketchKind::Srht);
    let rows = sweep_m(&spec, &cfg, &[0.5, 6.0], &SEEDS, Baselines { lela: false, sketch_svd: false })?;
    let secs = start.elapsed().as_secs_f64();
    let med = |mult: f64| median(&rows.iter().filter(|(m, _)| *m == mult).map(|(_, p)| p.smp.frob).collect::<Vec<_>>());
    let (low, high) = (med(0.5), med(6.0));
    Ok((
        low >= 10.0 * high && secs < 300.0,
        format!("median rel. Frobenius error {low:.3e} at 0.5 nr ln n, {high:.3e} at 6 nr ln n; {secs:.0}s"),
    ))
}

/// Criteria 4 and 5 share one sweep over k on the decaying instance.
fn decaying_sweep() -> Result<(Verdict, Verdict), Error> {
    let (n, r) = (1000, 5);
    let spec = GeneratorSpec::new(GeneratorKind::Gd, n, n, n, 0).with_rank(r);
    let cfg = reuse_config(r, 200, sample_budget(n, n, r, 4.0), SketchKind::Srht);
    let rows = sweep_k(&spec, &cfg, &[100, 200, 400], &SEEDS, Baselines { lela: true, sketch_svd: false })?;
    let smp = |k: usize| median(&rows.iter().filter(|(kk, _)| *kk == k).map(|(_, p)| p.smp.spectral).collect::<Vec<_>>());
    let at200: Vec<_> = rows.iter().filter(|(k, _)| *k == 200).map(|(_, p)| p).collect();
    let lela = median(&at200.iter().map(|p| p.lela.unwrap().spectral).collect::<Vec<_>>());
    let opt = median(&at200.iter().map(|p| p.optimal.spectral).collect::<Vec<_>>());
    let s200 = smp(200);
    let ordering = (
        opt <= lela && lela <= s200 && s200 <= 2.0 * lela,
        format!("median spectral error optimal {opt:.4}, LELA {lela:.4}, SMP-PCA {s200:.4} (k=200)"),
    );
    let (s100, s400) = (smp(100), smp(400));
    let mono = (s400 <= s100, format!("median SMP-PCA spectral error {s100:.4} at k=100, {s400:.4} at k=400"));
    Ok((ordering, mono))
}

/// Squared column norms with a spread of magnitudes.
fn skewed_norms(n: usize, seed: u64) -> Vec<f64> {
    let g = DenseMatrix::gaussian(1, n, seed, 0);
    (0..n).map(|j| (0.8 * g.get(0, j)).exp()).collect()
}

fn inclusion_counts(
    n1: usize,
    n2: usize,
    trials: u64,
    draw: impl Fn(u64) -> Result<Vec<(usize, usize)>, Error>,
) -> Result<Vec<f64>, Error> {
    let mut counts = vec![0.0; n1 * n2];
    for t in 0..trials {
        for (i, j) in draw(t)? {
            counts[i * n2 + j] += 1.0;
        }
    }
    Ok(counts)
}

fn median_secs(reps: usize, mut f: impl FnMut() -> Result<(), Error>) -> Result<f64, Error> {
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        f()?;
        times.push(start.elapsed().as_secs_f64());
    }
    Ok(median(&times))
}

fn sampler_correctness() -> Outcome {
    let (n1, n2, trials) = (50, 40, 2000u64);
    let dist = SampleDistribution::new(400, skewed_norms(n1, 1), skewed_norms(n2, 2))?;
    let q: Vec<f64> = (0..n1 * n2).map(|e| dist.q_hat(e / n2, e % n2)).collect::<Result<_, _>>()?;
    let nt = trials as f64;

    let oracle = inclusion_counts(n1, n2, trials, |t| sample_binomial(&dist, 1000 + t))?;
    let (mut chi2, mut df) = (0.0, 0usize);
    let mut certain_ok = true;
    for (c, &p) in oracle.iter().zip(&q) {
        if p >= 1.0 {
            certain_ok &= *c == nt;
        } else {
            chi2 += (c - nt * p).powi(2) / (nt * p * (1.0 - p));
            df += 1;
        }
    }
    let critical = ChiSquared::new(df as f64).unwrap().inverse_cdf(1.0 - 0.001);
    let chi_ok = certain_ok && chi2 <= critical;

    let fast = inclusion_counts(n1, n2, trials, |t| sample_fast(&dist, 5000 + t))?;
    let close = fast
        .iter()
        .zip(&q)
        .filter(|(c, &p)| {
            let se = (p * (1.0 - p) / nt).sqrt();
            (*c / nt - p).abs() <= 3.0 * se
        })
        .count();
    let frac = close as f64 / q.len() as f64;

    // fixed n, growing m; norms kept flat so no entry saturates
    let n = 2000;
    let flat: Vec<f64> = (0..n).map(|j| 1.0 + 0.5 * ((j as f64) * 0.37).sin()).collect();
    let ms = [100_000usize, 200_000, 400_000, 800_000, 1_600_000];
    let mut pts = Vec::new();
    for &m in &ms {
        let d = SampleDistribution::new(m, flat.clone(), flat.clone())?;
        let secs = median_secs(5, || sample_fast(&d, m as u64).map(|_| ()))?;
        pts.push(((m as f64).ln(), secs.ln()));
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();

    let ok = chi_ok && frac >= 0.99 && (0.8..=1.3).contains(&slope);
    Ok((
        ok,
        format!(
            "chi-squared {chi2:.1} vs critical {critical:.1} (df {df}); fast within 3 SE on {:.2}% of entries; time slope {slope:.2}",
            100.0 * frac
        ),
    ))
}

fn waltmin_oracle() -> Outcome {
    let (d, n1, n2, r) = (150, 120, 90, 5);
    let (a, b) = generate(&GeneratorSpec::new(GeneratorKind::ExactRank, d, n1, n2, 7).with_rank(r))?;
    let product = exact_product(&a, &b)?;
    let records = (0..n1).flat_map(|i| (0..n2).map(move |j| (i, j))).map(|(i, j)| (i, j, product.get(i, j), 1.0));
    let samples = SampleSet::new(n1, n2, records.collect())?;
    let cfg = WaltminConfig::new(r, 10).with_partition(Partition::Reuse);
    let out = run_waltmin(&samples, &cfg, &ColumnNorms::from_matrix(&a), 3)?;
    let svd = truncated_svd(&product, r)?.reconstruct();
    let err = rel_frob(&out.factors.product(), &svd);
    Ok((err <= 1e-6, format!("relative Frobenius distance to truncated SVD {err:.2e}")))
}

fn write_shuffled(path: &Path, a: &DenseMatrix, b: &DenseMatrix, shuffle: u64) -> Result<(), Error> {
    let (dims, mut entries) = dense_entries(a, b)?;
    entries.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(shuffle));
    write_stream(BufWriter::new(File::create(path)?), dims, &entries)?;
    Ok(())
}

fn one_pass_and_determinism() -> Outcome {
    let dir = tempfile::tempdir()?;
    let (a, b) = generate(&GeneratorSpec::new(GeneratorKind::GdIndependent, 80, 60, 50, 3))?;
    let cfg = reuse_config(3, 40, sample_budget(60, 50, 3, 4.0), SketchKind::Gaussian);

    let mut guard_ok = true;
    let mut lib_factors = Vec::new();
    let mut cli_factors = Vec::new();
    for s in 0..3u64 {
        let path = dir.path().join(format!("s{s}.smps"));
        write_shuffled(&path, &a, &b, 100 + s)?;

        let file = StreamFile::new(&path);
        lib_factors.push(smp_pca(file.open()?, &cfg)?.factors);
        guard_ok &= file.open_count() == 1 && matches!(file.open(), Err(Error::StreamConsumed));

        let out = dir.path().join(format!("f{s}"));
        let status = Command::new(env!("CARGO_BIN_EXE_smp-pca"))
            .args(["approx", "--stream", path.to_str().unwrap(), "--r", "3", "--k", "40", "--seed", "0"])
            .args(["--out", out.to_str().unwrap()])
            .status()?;
        if !status.success() {
            return Ok((false, format!("approx exited with {status}")));
        }
        cli_factors.push((std::fs::read(out.join("u.csv"))?, std::fs::read(out.join("v.csv"))?));
    }
    let identical = lib_factors.windows(2).all(|w| w[0] == w[1]) && cli_factors.windows(2).all(|w| w[0] == w[1]);
    Ok((
        guard_ok && identical,
        format!("stream opened once: {guard_ok}; factors identical across 3 orders: {identical}"),
    ))
}

fn mergeability() -> Outcome {
    let (a, b) = generate(&GeneratorSpec::new(GeneratorKind::GdIndependent, 100, 20, 20, 5))?;
    let (dims, mut entries) = dense_entries(&a, &b)?;
    entries.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(9));
    let op = SketchOperator::srht(32, 100, 4)?;
    let whole = ingest(EntryStream::from_entries(dims, entries.clone()), &op)?;
    let shards: Vec<_> = (0..3)
        .map(|s| {
            let part = entries.iter().skip(s).step_by(3).copied().collect();
            ingest(EntryStream::from_entries(dims, part), &op)
        })
        .collect::<Result<_, _>>()?;
    let merged = merge(&merge(&shards[0], &shards[1])?, &shards[2])?;
    let mut worst = 0f64;
    for id in [MatrixId::A, MatrixId::B] {
        let pairs = merged.sketch(id).iter().zip(whole.sketch(id));
        let norms = merged.col_norms_sq(id).iter().zip(whole.col_norms_sq(id));
        for (x, y) in pairs.chain(norms) {
            worst = worst.max((x - y).abs());
        }
        worst = worst.max((merged.frob_sq(id) - whole.frob_sq(id)).abs());
    }
    Ok((worst <= 1e-12, format!("max entrywise difference {worst:.1e}")))
}

fn orthotop() -> Outcome {
    let (n, r) = (500, 5);
    let cfg = reuse_config(r, 400, sample_budget(n, n, r, 4.0), SketchKind::Srht);
    let mut sep = Vec::new();
    let mut smp = Vec::new();
    for seed in SEEDS {
        let (a, b) = generate(&GeneratorSpec::new(GeneratorKind::Orthotop, n, n, n, seed).with_rank(r))?;
        let ev = Evaluator::new(&a, &b, r)?;
        sep.push(ev.spectral_err_rel(&separate_truncation(&a, &b, r)?)?);
        let cfg = PipelineConfig { seed, ..cfg };
        smp.push(ev.spectral_err_rel(&smp_pca_dense(&a, &b, &cfg)?.factors)?);
    }
    let (s, m) = (median(&sep), median(&smp));
    Ok((s >= 0.9 && m <= 0.2, format!("median spectral error A_r^T B_r {s:.3}, SMP-PCA {m:.3}")))
}

fn report(n: usize, name: &str, outcome: Outcome, elapsed: Duration, failures: &mut usize) {
    let (ok, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    if !ok {
        *failures += 1;
    }
    let tag = if ok { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {n}: {name}: {detail} [{:.1}s]", elapsed.as_secs_f64());
}

fn main() {
    // `cargo test -- --list` and friends pass flags meant for libtest.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut failures = 0;
    let timed = |f: fn() -> Outcome| {
        let start = Instant::now();
        let out = f();
        (out, start.elapsed())
    };

    let (o, t) = timed(jl_dominance);
    report(1, "rescaled JL beats plain JL", o, t, &mut failures);
    let (o, t) = timed(cone_ratios);
    report(2, "cone error ratios", o, t, &mut failures);
    let (o, t) = timed(phase_transition);
    report(3, "phase transition in m", o, t, &mut failures);

    let start = Instant::now();
    let (c4, c5) = match decaying_sweep() {
        Ok((x, y)) => (Ok(x), Ok(y)),
        Err(e) => (Err(Error::invalid(e.to_string())), Err(e)),
    };
    let t = start.elapsed();
    report(4, "error ordering on the decaying instance", c4, t, &mut failures);
    report(5, "larger sketches do not hurt", c5, t, &mut failures);

    let (o, t) = timed(sampler_correctness);
    report(6, "sampler correctness", o, t, &mut failures);
    let (o, t) = timed(waltmin_oracle);
    report(7, "alternating minimization on full data", o, t, &mut failures);
    let (o, t) = timed(one_pass_and_determinism);
    report(8, "one pass and order independence", o, t, &mut failures);
    let (o, t) = timed(mergeability);
    report(9, "sketch merge", o, t, &mut failures);
    let (o, t) = timed(orthotop);
    report(10, "orthogonal top subspaces", o, t, &mut failures);

    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
