//! Subcommand definitions and their implementations.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::Serialize;
use serde_json::json;
use smp_pca::estimate::EstimatorKind;
use smp_pca::io::stream_format::write_stream;
use smp_pca::io::{dense, matrix_market};
use smp_pca::matrix::{dense_entries, reassemble, StreamFile};
use smp_pca::pipeline::{
    advise_parameters, lela_two_pass, sketch_svd_baseline, smp_pca, smp_pca_dense, smp_pca_from_summary, Evaluator,
    PipelineConfig, PipelineOutput, EVAL_MAX_ENTRIES,
};
use smp_pca::sample::SamplerKind;
use smp_pca::waltmin::{FactorPair, Partition};
use smp_pca::{ingest, ingest_dense, DenseMatrix, SketchKind, SketchSummary};

use crate::error::{CliError, CliResult};
use crate::experiments::{self, sample_budget, Baselines, PointResult, DEFAULT_BUDGET};
use crate::generate::{generate, GeneratorKind, GeneratorSpec};
use crate::output::{fmt_f64, fmt_opt, write_manifest, Table};

#[derive(Debug, Parser)]
#[command(name = "smp-pca", version, about = "One-pass low-rank approximation of matrix products")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic (A, B) pair.
    Gen(GenArgs),
    /// One pass over the input: sketches and exact column norms.
    Sketch(SketchArgs),
    /// Full one-pass approximation.
    Approx(ApproxArgs),
    /// Two-pass baseline with exact sampled entries.
    Lela(LelaArgs),
    /// Rank-r SVD of the sketched product.
    SketchSvd(SketchSvdArgs),
    /// Truncated SVD of the exact product.
    Exact(ExactArgs),
    /// Score factors against the exact product.
    Eval(EvalArgs),
    /// Error against the sample budget (phase transition).
    SweepM(SweepMArgs),
    /// Error against the sketch size.
    SweepK(SweepKArgs),
    /// Error ratios on cone instances against the cone angle.
    SweepTheta(SweepThetaArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SketchArg {
    Gaussian,
    Srht,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Plain,
    Rescaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplerArg {
    Fast,
    Binomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PartitionArg {
    Fresh,
    Reuse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatrixFormat {
    Csv,
    Mtx,
    Bin,
}

impl MatrixFormat {
    fn extension(self) -> &'static str {
        match self {
            MatrixFormat::Csv => "csv",
            MatrixFormat::Mtx => "mtx",
            MatrixFormat::Bin => "bin",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct AlgoArgs {
    #[arg(long, default_value_t = 5)]
    pub r: usize,
    /// Sketch size.
    #[arg(long, default_value_t = 200)]
    pub k: usize,
    /// Expected sample count; defaults to 4 n r ln n with n = max(n1, n2).
    #[arg(long)]
    pub m: Option<usize>,
    /// Alternating iterations.
    #[arg(long, default_value_t = 10)]
    pub t: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = SketchArg::Gaussian)]
    pub sketch: SketchArg,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Rescaled)]
    pub estimator: EstimatorArg,
    #[arg(long, value_enum, default_value_t = SamplerArg::Fast)]
    pub sampler: SamplerArg,
    /// `fresh` splits the samples into 2T+1 disjoint subsets; `reuse` gives
    /// every step all of them.
    #[arg(long, value_enum, default_value_t = PartitionArg::Reuse)]
    pub partition: PartitionArg,
    #[arg(long, default_value_t = 8.0)]
    pub trim_constant: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub ridge: f64,
}

impl AlgoArgs {
    pub fn config(&self, n1: usize, n2: usize) -> PipelineConfig {
        let m = self.m.unwrap_or_else(|| sample_budget(n1, n2, self.r, DEFAULT_BUDGET));
        let mut cfg = PipelineConfig::new(self.r, self.k, m, self.t, self.seed);
        cfg.sketch = match self.sketch {
            SketchArg::Gaussian => SketchKind::Gaussian,
            SketchArg::Srht => SketchKind::Srht,
        };
        cfg.estimator = match self.estimator {
            EstimatorArg::Plain => EstimatorKind::Plain,
            EstimatorArg::Rescaled => EstimatorKind::Rescaled,
        };
        cfg.sampler = match self.sampler {
            SamplerArg::Fast => SamplerKind::Fast,
            SamplerArg::Binomial => SamplerKind::Binomial,
        };
        cfg.waltmin.partition = match self.partition {
            PartitionArg::Fresh => Partition::Fresh,
            PartitionArg::Reuse => Partition::Reuse,
        };
        cfg.waltmin.trim_constant = self.trim_constant;
        cfg.waltmin.ridge = self.ridge;
        cfg
    }
}

/// Dense `A` and `B` files, or one binary entry stream.
#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Matrix A (`.csv`, `.mtx` or `.bin`).
    #[arg(long, requires = "b", conflicts_with = "stream")]
    pub a: Option<PathBuf>,
    #[arg(long, requires = "a", conflicts_with = "stream")]
    pub b: Option<PathBuf>,
    /// Binary entry stream holding both matrices.
    #[arg(long)]
    pub stream: Option<PathBuf>,
}

impl InputArgs {
    fn given(&self) -> bool {
        self.a.is_some() || self.stream.is_some()
    }

    /// Loads both matrices; a stream is read once and reassembled.
    pub fn load(&self) -> CliResult<(DenseMatrix, DenseMatrix)> {
        match (&self.a, &self.b, &self.stream) {
            (Some(a), Some(b), None) => Ok((load_matrix(a)?, load_matrix(b)?)),
            (None, None, Some(s)) => Ok(reassemble(StreamFile::new(s).open()?)?),
            _ => Err(CliError::Usage("give either --a and --b or --stream".into())),
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub kind: GeneratorKind,
    #[arg(long)]
    pub d: usize,
    /// Sets both n1 and n2.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub n1: Option<usize>,
    #[arg(long)]
    pub n2: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub r: usize,
    /// Cone angle in degrees.
    #[arg(long, default_value_t = 30.0)]
    pub theta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = MatrixFormat::Csv)]
    pub format: MatrixFormat,
    /// Also write `stream.smps` with every entry of A and B.
    #[arg(long)]
    pub stream: bool,
    /// Shuffle the stream's entry order with this seed.
    #[arg(long, requires = "stream")]
    pub shuffle: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SketchArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 200)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = SketchArg::Gaussian)]
    pub sketch: SketchArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ApproxArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Summary written by `sketch`, instead of raw input.
    #[arg(long, conflicts_with_all = ["a", "b", "stream"])]
    pub summary: Option<PathBuf>,
    #[command(flatten)]
    pub algo: AlgoArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LelaArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub algo: AlgoArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SketchSvdArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, conflicts_with_all = ["a", "b", "stream"])]
    pub summary: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub r: usize,
    #[arg(long, default_value_t = 200)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = SketchArg::Gaussian)]
    pub sketch: SketchArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExactArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 5)]
    pub r: usize,
    #[arg(long)]
    pub allow_large: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Directory holding `u.csv` and `v.csv`.
    #[arg(long)]
    pub factors: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub r: usize,
    /// Evaluate products above 10^8 entries.
    #[arg(long)]
    pub allow_large: bool,
    /// With `--gamma` and `--zeta`, also report suggested (k, m, T).
    #[arg(long, requires_all = ["gamma", "zeta"])]
    pub eta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Writes `report.json` here; the report is always printed.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepCommon {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of seeds per point, starting at `--seed`.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[arg(long)]
    pub no_lela: bool,
    #[arg(long)]
    pub no_sketch_svd: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepMArgs {
    #[arg(long, value_enum, default_value_t = GeneratorKind::ExactRank)]
    pub kind: GeneratorKind,
    /// Budgets as multiples of n r ln n.
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0, 4.0, 6.0])]
    pub mults: Vec<f64>,
    #[command(flatten)]
    pub common: SweepCommon,
    #[command(flatten)]
    pub algo: AlgoArgs,
}

#[derive(Debug, Args)]
pub struct SweepKArgs {
    #[arg(long, value_enum, default_value_t = GeneratorKind::Gd)]
    pub kind: GeneratorKind,
    #[arg(long, value_delimiter = ',', default_values_t = [100, 200, 400])]
    pub ks: Vec<usize>,
    #[command(flatten)]
    pub common: SweepCommon,
    #[command(flatten)]
    pub algo: AlgoArgs,
}

#[derive(Debug, Args)]
pub struct SweepThetaArgs {
    /// Cone angles in degrees.
    #[arg(long, value_delimiter = ',', default_values_t = [10.0, 30.0, 60.0, 90.0, 150.0])]
    pub thetas: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    pub d: usize,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub algo: AlgoArgs,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for the re-run; the recorded one is used otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Runs a parsed command line. `argv` is recorded in manifests.
pub fn run(cli: Cli, argv: &[String]) -> CliResult<()> {
    match cli.command {
        Command::Gen(a) => gen(a, argv),
        Command::Sketch(a) => sketch(a, argv),
        Command::Approx(a) => approx(a, argv),
        Command::Lela(a) => lela(a, argv),
        Command::SketchSvd(a) => sketch_svd(a, argv),
        Command::Exact(a) => exact(a, argv),
        Command::Eval(a) => eval(a, argv),
        Command::SweepM(a) => sweep_m(a, argv),
        Command::SweepK(a) => sweep_k(a, argv),
        Command::SweepTheta(a) => sweep_theta(a, argv),
        Command::Replay(a) => replay(a),
    }
}

/// Parses `argv` (program name first) and runs it.
pub fn run_argv(argv: &[String]) -> CliResult<()> {
    let cli = Cli::try_parse_from(argv)?;
    run(cli, argv)
}

pub fn load_matrix(path: &Path) -> CliResult<DenseMatrix> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let file = File::open(path).map_err(|e| CliError::io_at(path, e))?;
    let r = BufReader::new(file);
    Ok(match ext {
        "csv" => dense::read_csv(r)?,
        "mtx" => matrix_market::read_dense(r)?,
        "bin" => dense::read_binary(r)?,
        _ => return Err(CliError::Usage(format!("{}: unknown matrix extension", path.display()))),
    })
}

fn save_matrix(path: &Path, m: &DenseMatrix, format: MatrixFormat) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| CliError::io_at(path, e))?);
    match format {
        MatrixFormat::Csv => dense::write_csv(&mut w, m)?,
        MatrixFormat::Mtx => matrix_market::write_dense(&mut w, m)?,
        MatrixFormat::Bin => dense::write_binary(&mut w, m)?,
    }
    w.flush()?;
    Ok(())
}

fn create_out(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io_at(dir, e))
}

fn gen(a: GenArgs, argv: &[String]) -> CliResult<()> {
    let n1 = a.n1.or(a.n).ok_or_else(|| CliError::Usage("give --n or --n1".into()))?;
    let n2 = a.n2.or(a.n).ok_or_else(|| CliError::Usage("give --n or --n2".into()))?;
    let spec = GeneratorSpec::new(a.kind, a.d, n1, n2, a.seed).with_rank(a.r).with_theta(a.theta);
    let (ma, mb) = generate(&spec)?;
    create_out(&a.out)?;
    let ext = a.format.extension();
    let mut outputs = vec![format!("a.{ext}"), format!("b.{ext}")];
    save_matrix(&a.out.join(&outputs[0]), &ma, a.format)?;
    save_matrix(&a.out.join(&outputs[1]), &mb, a.format)?;
    if a.stream {
        let (dims, mut entries) = dense_entries(&ma, &mb)?;
        if let Some(s) = a.shuffle {
            entries.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(s));
        }
        let path = a.out.join("stream.smps");
        let w = BufWriter::new(File::create(&path).map_err(|e| CliError::io_at(&path, e))?);
        write_stream(w, dims, &entries)?.flush()?;
        outputs.push("stream.smps".into());
    }
    write_manifest(&a.out, "gen", argv, json!({ "generator": spec, "shuffle": a.shuffle }), &outputs)
}

fn sketch_kind(s: SketchArg) -> SketchKind {
    match s {
        SketchArg::Gaussian => SketchKind::Gaussian,
        SketchArg::Srht => SketchKind::Srht,
    }
}

fn sketch(a: SketchArgs, argv: &[String]) -> CliResult<()> {
    let summary = summarize(&a.input, sketch_kind(a.sketch), a.k, a.seed)?;
    create_out(&a.out)?;
    summary.save(a.out.join("summary.smpk"))?;
    write_manifest(&a.out, "sketch", argv, json!({ "operator": summary.operator_info(), "dims": dims_json(&summary) }), &["summary.smpk".to_string()])
}

/// One pass over the input; a stream input is opened exactly once.
fn summarize(input: &InputArgs, kind: SketchKind, k: usize, seed: u64) -> CliResult<SketchSummary> {
    if let Some(path) = &input.stream {
        let stream = StreamFile::new(path).open()?;
        let op = smp_pca::SketchOperator::new(kind, k, stream.dims().d, seed)?;
        return Ok(ingest(stream, &op)?);
    }
    let (ma, mb) = input.load()?;
    let op = smp_pca::SketchOperator::new(kind, k, ma.rows(), seed)?;
    Ok(ingest_dense(&ma, &mb, &op)?)
}

fn dims_json(s: &SketchSummary) -> serde_json::Value {
    let d = s.dims();
    json!({ "d": d.d, "n1": d.n1, "n2": d.n2 })
}

fn save_factors(out: &Path, factors: &FactorPair, metadata: serde_json::Value) -> CliResult<Vec<String>> {
    factors.save(out, &metadata)?;
    Ok(vec!["u.csv".into(), "v.csv".into(), "factors.json".into()])
}

fn pipeline_metadata(cfg: &PipelineConfig, out: &PipelineOutput) -> serde_json::Value {
    json!({
        "r": cfg.r(),
        "T": cfg.iterations(),
        "seed": cfg.seed,
        "config": cfg,
        "sample_count": out.sample_count,
        "diagnostics": out.diagnostics,
        "times": out.times,
    })
}

fn approx(a: ApproxArgs, argv: &[String]) -> CliResult<()> {
    let (cfg, out) = if let Some(path) = &a.summary {
        let summary = SketchSummary::load(path)?;
        let dims = summary.dims();
        let info = summary.operator_info();
        let cfg = a.algo.config(dims.n1, dims.n2);
        if cfg.k != info.k || cfg.sketch != info.kind || cfg.seed != info.seed {
            return Err(CliError::Usage(format!(
                "summary was built with --sketch {:?} --k {} --seed {}; pass the same values",
                info.kind, info.k, info.seed
            )));
        }
        cfg.validate()?;
        let out = smp_pca_from_summary(&summary, &cfg)?;
        (cfg, out)
    } else if let Some(path) = &a.input.stream {
        let file = StreamFile::new(path);
        let stream = file.open()?;
        let dims = stream.dims();
        let cfg = a.algo.config(dims.n1, dims.n2);
        let out = smp_pca(stream, &cfg)?;
        debug_assert_eq!(file.open_count(), 1);
        (cfg, out)
    } else if a.input.given() {
        let (ma, mb) = a.input.load()?;
        let cfg = a.algo.config(ma.cols(), mb.cols());
        let out = smp_pca_dense(&ma, &mb, &cfg)?;
        (cfg, out)
    } else {
        return Err(CliError::Usage("give --a/--b, --stream or --summary".into()));
    };
    create_out(&a.out)?;
    let meta = pipeline_metadata(&cfg, &out);
    let outputs = save_factors(&a.out, &out.factors, meta.clone())?;
    write_manifest(&a.out, "approx", argv, meta, &outputs)
}

fn lela(a: LelaArgs, argv: &[String]) -> CliResult<()> {
    let (ma, mb) = a.input.load()?;
    let cfg = a.algo.config(ma.cols(), mb.cols());
    let out = lela_two_pass(&ma, &mb, &cfg)?;
    create_out(&a.out)?;
    let meta = pipeline_metadata(&cfg, &out);
    let outputs = save_factors(&a.out, &out.factors, meta.clone())?;
    write_manifest(&a.out, "lela", argv, meta, &outputs)
}

fn sketch_svd(a: SketchSvdArgs, argv: &[String]) -> CliResult<()> {
    let summary = match &a.summary {
        Some(path) => SketchSummary::load(path)?,
        None => summarize(&a.input, sketch_kind(a.sketch), a.k, a.seed)?,
    };
    let factors = sketch_svd_baseline(&summary, a.r)?;
    create_out(&a.out)?;
    let meta = json!({ "r": a.r, "operator": summary.operator_info(), "dims": dims_json(&summary) });
    let outputs = save_factors(&a.out, &factors, meta.clone())?;
    write_manifest(&a.out, "sketch-svd", argv, meta, &outputs)
}

fn evaluator(input: &InputArgs, r: usize, allow_large: bool) -> CliResult<Evaluator> {
    let (ma, mb) = input.load()?;
    let limit = if allow_large { usize::MAX } else { EVAL_MAX_ENTRIES };
    Ok(Evaluator::with_limit(&ma, &mb, r, limit)?)
}

fn exact(a: ExactArgs, argv: &[String]) -> CliResult<()> {
    let ev = evaluator(&a.input, a.r, a.allow_large)?;
    let factors = ev.optimal_factors()?;
    create_out(&a.out)?;
    let meta = json!({ "r": a.r, "sigma": &ev.singular_values()[..ev.singular_values().len().min(a.r + 1)] });
    let outputs = save_factors(&a.out, &factors, meta.clone())?;
    write_manifest(&a.out, "exact", argv, meta, &outputs)
}

fn eval(a: EvalArgs, argv: &[String]) -> CliResult<()> {
    let ev = evaluator(&a.input, a.r, a.allow_large)?;
    let factors = FactorPair::load(&a.factors)?;
    let report = ev.evaluate(&factors)?;
    let advice = match (a.eta, a.gamma, a.zeta) {
        (Some(eta), Some(gamma), Some(zeta)) => {
            let n = ev.product().rows().max(ev.product().cols());
            Some(advise_parameters(eta, gamma, zeta, &ev.norm_context(), n, a.r)?)
        }
        _ => None,
    };
    let doc = json!({ "report": report, "advice": advice });
    let text = serde_json::to_string_pretty(&doc)?;
    println!("{text}");
    if let Some(out) = &a.out {
        create_out(out)?;
        std::fs::write(out.join("report.json"), format!("{text}\n"))?;
        write_manifest(out, "eval", argv, json!({ "r": a.r }), &["report.json".to_string()])?;
    }
    Ok(())
}

fn seed_list(first: u64, count: u64) -> Vec<u64> {
    (first..first + count).collect()
}

fn sweep_spec(kind: GeneratorKind, common: &SweepCommon, r: usize) -> GeneratorSpec {
    let d = common.d.unwrap_or(1000);
    let n = common.n.unwrap_or(1000);
    GeneratorSpec::new(kind, d, n, n, 0).with_rank(r)
}

const POINT_HEADER: [&str; 14] = [
    "seed",
    "k",
    "m",
    "samples",
    "smp_spectral",
    "smp_frob",
    "lela_spectral",
    "lela_frob",
    "sketch_svd_spectral",
    "sketch_svd_frob",
    "optimal_spectral",
    "optimal_frob",
    "smp_over_lela",
    "sketch_svd_over_smp",
];

fn point_cells(p: &PointResult) -> Vec<String> {
    vec![
        p.seed.to_string(),
        p.k.to_string(),
        p.m.to_string(),
        p.samples.to_string(),
        fmt_f64(p.smp.spectral),
        fmt_f64(p.smp.frob),
        fmt_opt(p.lela.map(|e| e.spectral)),
        fmt_opt(p.lela.map(|e| e.frob)),
        fmt_opt(p.sketch_svd.map(|e| e.spectral)),
        fmt_opt(p.sketch_svd.map(|e| e.frob)),
        fmt_f64(p.optimal.spectral),
        fmt_f64(p.optimal.frob),
        fmt_opt(p.lela.map(|e| p.smp.spectral / e.spectral)),
        fmt_opt(p.sketch_svd.map(|e| e.spectral / p.smp.spectral)),
    ]
}

fn time_cells(p: &PointResult) -> Vec<String> {
    let t = &p.times;
    vec![
        p.seed.to_string(),
        fmt_f64(t.sketch),
        fmt_f64(t.sample),
        fmt_f64(t.estimate),
        fmt_f64(t.waltmin),
    ]
}

fn write_sweep<P: ToString>(
    out: &Path,
    param: &str,
    rows: &[(P, PointResult)],
) -> CliResult<Vec<String>> {
    let mut header = vec![param];
    header.extend(POINT_HEADER);
    let mut points = Table::new(&header);
    let mut times = Table::new(&[param, "seed", "sketch_secs", "sample_secs", "estimate_secs", "waltmin_secs"]);
    for (p, row) in rows {
        let mut cells = vec![p.to_string()];
        cells.extend(point_cells(row));
        points.push(cells);
        let mut cells = vec![p.to_string()];
        cells.extend(time_cells(row));
        times.push(cells);
    }
    points.save(&out.join("points.csv"))?;
    times.save(&out.join("times.csv"))?;
    Ok(vec!["points.csv".into(), "times.csv".into()])
}

fn sweep_config(algo: &AlgoArgs, spec: &GeneratorSpec) -> CliResult<PipelineConfig> {
    let cfg = algo.config(spec.n1, spec.n2);
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct SweepRecord<'a, P: Serialize> {
    generator: &'a GeneratorSpec,
    config: &'a PipelineConfig,
    values: &'a [P],
    seeds: &'a [u64],
    lela: bool,
    sketch_svd: bool,
}

fn sweep_m(a: SweepMArgs, argv: &[String]) -> CliResult<()> {
    let spec = sweep_spec(a.kind, &a.common, a.algo.r);
    spec.validate()?;
    let cfg = sweep_config(&a.algo, &spec)?;
    let seeds = seed_list(a.algo.seed, a.common.seeds);
    let baselines = Baselines { lela: !a.common.no_lela, sketch_svd: !a.common.no_sketch_svd };
    let rows = experiments::sweep_m(&spec, &cfg, &a.mults, &seeds, baselines)?;
    create_out(&a.common.out)?;
    let outputs = write_sweep(&a.common.out, "m_mult", &rows)?;
    let record = SweepRecord { generator: &spec, config: &cfg, values: &a.mults, seeds: &seeds, lela: baselines.lela, sketch_svd: baselines.sketch_svd };
    write_manifest(&a.common.out, "sweep-m", argv, serde_json::to_value(record)?, &outputs)
}

fn sweep_k(a: SweepKArgs, argv: &[String]) -> CliResult<()> {
    let spec = sweep_spec(a.kind, &a.common, a.algo.r);
    spec.validate()?;
    let cfg = sweep_config(&a.algo, &spec)?;
    let seeds = seed_list(a.algo.seed, a.common.seeds);
    let baselines = Baselines { lela: !a.common.no_lela, sketch_svd: !a.common.no_sketch_svd };
    let rows = experiments::sweep_k(&spec, &cfg, &a.ks, &seeds, baselines)?;
    create_out(&a.common.out)?;
    let outputs = write_sweep(&a.common.out, "k_value", &rows)?;
    let record = SweepRecord { generator: &spec, config: &cfg, values: &a.ks, seeds: &seeds, lela: baselines.lela, sketch_svd: baselines.sketch_svd };
    write_manifest(&a.common.out, "sweep-k", argv, serde_json::to_value(record)?, &outputs)
}

fn sweep_theta(a: SweepThetaArgs, argv: &[String]) -> CliResult<()> {
    for &t in &a.thetas {
        GeneratorSpec::new(GeneratorKind::Cone, a.d, a.n, a.n, 0).with_theta(t).validate()?;
    }
    let cfg = a.algo.config(a.n, a.n);
    cfg.validate()?;
    let seeds = seed_list(a.algo.seed, a.seeds);
    let (points, summaries) = experiments::sweep_theta(&a.thetas, a.d, a.n, &cfg, &seeds)?;
    create_out(&a.out)?;
    let mut pt = Table::new(&["theta_deg", "seed", "plain_err", "rescaled_err", "estimator_ratio", "smp_err", "sketch_svd_err", "method_ratio"]);
    for p in &points {
        pt.push(vec![
            fmt_f64(p.theta_deg),
            p.seed.to_string(),
            fmt_f64(p.plain_err),
            fmt_f64(p.rescaled_err),
            fmt_f64(p.estimator_ratio()),
            fmt_f64(p.smp_err),
            fmt_f64(p.sketch_svd_err),
            fmt_f64(p.method_ratio()),
        ]);
    }
    pt.save(&a.out.join("points.csv"))?;
    let mut st = Table::new(&["theta_deg", "plain_err", "rescaled_err", "estimator_ratio", "smp_err", "sketch_svd_err", "method_ratio"]);
    for s in &summaries {
        st.push(vec![
            fmt_f64(s.theta_deg),
            fmt_f64(s.plain_err),
            fmt_f64(s.rescaled_err),
            fmt_f64(s.estimator_ratio),
            fmt_f64(s.smp_err),
            fmt_f64(s.sketch_svd_err),
            fmt_f64(s.method_ratio),
        ]);
    }
    st.save(&a.out.join("summary.csv"))?;
    let record = json!({ "d": a.d, "n": a.n, "config": cfg, "thetas": a.thetas, "seeds": seeds });
    write_manifest(&a.out, "sweep-theta", argv, record, &["points.csv".to_string(), "summary.csv".to_string()])
}

fn replay(a: ReplayArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&a.manifest).map_err(|e| CliError::io_at(&a.manifest, e))?;
    let manifest: serde_json::Value = serde_json::from_str(&text)?;
    let mut argv: Vec<String> = manifest["argv"]
        .as_array()
        .ok_or_else(|| CliError::Usage("manifest has no argv".into()))?
        .iter()
        .map(|v| v.as_str().map(str::to_string).ok_or_else(|| CliError::Usage("non-string argv entry".into())))
        .collect::<CliResult<_>>()?;
    if let Some(out) = &a.out {
        let out = out.to_string_lossy().into_owned();
        match argv.iter().position(|s| s == "--out") {
            Some(i) if i + 1 < argv.len() => argv[i + 1] = out,
            _ => match argv.iter().position(|s| s.starts_with("--out=")) {
                Some(i) => argv[i] = format!("--out={out}"),
                None => argv.extend(["--out".to_string(), out]),
            },
        }
    }
    if argv.get(1).map(String::as_str) == Some("replay") {
        return Err(CliError::Usage("a manifest cannot replay another replay".into()));
    }
    run_argv(&argv)
}
