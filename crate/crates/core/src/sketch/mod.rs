//! Sketching operators and the one-pass accumulation of `ΠA`, `ΠB` and the
//! exact column norms.
//!
//! Every accumulated quantity goes through [`ExactSum`], so a summary is a
//! function of the multiset of stream entries only: any arrival order and
//! any sharding followed by [`SketchAccumulator::absorb`] give bitwise
//! identical results.

mod accum;
mod operator;
mod summary;

pub use accum::ExactSum;
pub use operator::{fwht, random_unit_vector, SketchKind, SketchOperator};
pub use summary::{OperatorInfo, SketchSummary};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, Entry, EntryStream, MatrixId, StreamDims};

/// Exact running state of one pass (or one shard of a pass).
#[derive(Debug, Clone)]
pub struct SketchAccumulator<'op> {
    op: &'op SketchOperator,
    dims: StreamDims,
    a_cells: Vec<ExactSum>,
    b_cells: Vec<ExactSum>,
    a_norms: Vec<ExactSum>,
    b_norms: Vec<ExactSum>,
    a_frob: ExactSum,
    b_frob: ExactSum,
}

impl<'op> SketchAccumulator<'op> {
    pub fn new(op: &'op SketchOperator, dims: StreamDims) -> Result<Self> {
        if dims.d != op.d() {
            return Err(Error::dims(format!("stream d = {}, operator d = {}", dims.d, op.d())));
        }
        let k = op.k();
        Ok(Self {
            op,
            dims,
            a_cells: vec![ExactSum::new(); k * dims.n1],
            b_cells: vec![ExactSum::new(); k * dims.n2],
            a_norms: vec![ExactSum::new(); dims.n1],
            b_norms: vec![ExactSum::new(); dims.n2],
            a_frob: ExactSum::new(),
            b_frob: ExactSum::new(),
        })
    }

    pub fn dims(&self) -> StreamDims {
        self.dims
    }

    pub fn push(&mut self, e: &Entry) -> Result<()> {
        self.dims.check(e)?;
        if e.value == 0.0 {
            return Ok(());
        }
        let k = self.op.k();
        let (cells, norms, frob) = match e.matrix {
            MatrixId::A => (&mut self.a_cells, &mut self.a_norms, &mut self.a_frob),
            MatrixId::B => (&mut self.b_cells, &mut self.b_norms, &mut self.b_frob),
        };
        let sq = e.value * e.value;
        norms[e.col].add(sq)?;
        frob.add(sq)?;
        push_column(self.op, &mut cells[e.col * k..(e.col + 1) * k], e.row, e.value)
    }

    /// Adds the state of a shard built from a disjoint set of entries.
    pub fn absorb(&mut self, other: &SketchAccumulator<'_>) -> Result<()> {
        if self.op.fingerprint() != other.op.fingerprint() || self.dims != other.dims {
            return Err(Error::IncompatibleSummary("accumulators disagree on operator or dims".into()));
        }
        let pairs = [
            (&mut self.a_cells, &other.a_cells),
            (&mut self.b_cells, &other.b_cells),
            (&mut self.a_norms, &other.a_norms),
            (&mut self.b_norms, &other.b_norms),
        ];
        for (mine, theirs) in pairs {
            for (x, y) in mine.iter_mut().zip(theirs) {
                x.merge(y);
            }
        }
        self.a_frob.merge(&other.a_frob);
        self.b_frob.merge(&other.b_frob);
        Ok(())
    }

    pub fn finalize(&self) -> SketchSummary {
        let vals = |v: &[ExactSum]| -> Vec<f64> { v.iter().map(ExactSum::value).collect() };
        SketchSummary::from_parts(
            OperatorInfo::of(self.op),
            self.dims,
            vals(&self.a_cells),
            vals(&self.b_cells),
            vals(&self.a_norms),
            vals(&self.b_norms),
            self.a_frob.value(),
            self.b_frob.value(),
        )
    }
}

fn push_column(op: &SketchOperator, cells: &mut [ExactSum], row: usize, value: f64) -> Result<()> {
    let mut failed = None;
    op.for_each_term(row, value, |t, v| {
        if let Err(e) = cells[t].add(v) {
            failed.get_or_insert(e);
        }
    });
    failed.map_or(Ok(()), Err)
}

/// One sequential pass over `stream`.
pub fn ingest<I>(stream: EntryStream<I>, op: &SketchOperator) -> Result<SketchSummary>
where
    I: Iterator<Item = Result<Entry>>,
{
    Ok(ingest_accumulate(stream, op)?.finalize())
}

/// Like [`ingest`] but returns the exact state, for sharded ingestion.
pub fn ingest_accumulate<I>(stream: EntryStream<I>, op: &SketchOperator) -> Result<SketchAccumulator<'_>>
where
    I: Iterator<Item = Result<Entry>>,
{
    let mut acc = SketchAccumulator::new(op, stream.dims())?;
    for e in stream {
        acc.push(&e?)?;
    }
    Ok(acc)
}

/// Summarizes dense `A` and `B`. Bitwise identical to [`ingest`] on any
/// ordering of their nonzero entries; columns are processed in parallel.
pub fn ingest_dense(a: &DenseMatrix, b: &DenseMatrix, op: &SketchOperator) -> Result<SketchSummary> {
    if a.rows() != b.rows() {
        return Err(Error::dims(format!("A has {} rows, B has {}", a.rows(), b.rows())));
    }
    let dims = StreamDims::new(a.rows(), a.cols(), b.cols());
    if dims.d != op.d() {
        return Err(Error::dims(format!("stream d = {}, operator d = {}", dims.d, op.d())));
    }
    let k = op.k();
    let sketch_matrix = |m: &DenseMatrix| -> Result<(Vec<f64>, Vec<f64>, ExactSum)> {
        let cols: Vec<(Vec<f64>, ExactSum)> = (0..m.cols())
            .into_par_iter()
            .map(|j| {
                let mut cells = vec![ExactSum::new(); k];
                for (row, &v) in m.column(j).iter().enumerate() {
                    if v != 0.0 {
                        push_column(op, &mut cells, row, v)?;
                    }
                }
                Ok((cells.iter().map(ExactSum::value).collect(), column_norm_sq(m.column(j))?))
            })
            .collect::<Result<_>>()?;
        let mut frob = ExactSum::new();
        let mut sketch = Vec::with_capacity(k * m.cols());
        let mut norms = Vec::with_capacity(m.cols());
        for (cells, norm) in cols {
            sketch.extend(cells);
            norms.push(norm.value());
            frob.merge(&norm);
        }
        Ok((sketch, norms, frob))
    };
    let (a_sketch, a_norms, a_frob) = sketch_matrix(a)?;
    let (b_sketch, b_norms, b_frob) = sketch_matrix(b)?;
    Ok(SketchSummary::from_parts(
        OperatorInfo::of(op),
        dims,
        a_sketch,
        b_sketch,
        a_norms,
        b_norms,
        a_frob.value(),
        b_frob.value(),
    ))
}

fn column_norm_sq(col: &[f64]) -> Result<ExactSum> {
    let mut norm = ExactSum::new();
    for &v in col {
        if v != 0.0 {
            norm.add(v * v)?;
        }
    }
    Ok(norm)
}

/// Squared column norms and squared Frobenius norm of `m`, accumulated
/// exactly as [`ingest`] does, so the results match a summary's bitwise.
pub fn exact_norms(m: &DenseMatrix) -> Result<(Vec<f64>, f64)> {
    let mut frob = ExactSum::new();
    let mut norms = Vec::with_capacity(m.cols());
    for j in 0..m.cols() {
        let n = column_norm_sq(m.column(j))?;
        norms.push(n.value());
        frob.merge(&n);
    }
    Ok((norms, frob.value()))
}

/// `s1 + s2` for summaries of disjoint entry sets.
pub fn merge(s1: &SketchSummary, s2: &SketchSummary) -> Result<SketchSummary> {
    s1.merge(s2)
}
