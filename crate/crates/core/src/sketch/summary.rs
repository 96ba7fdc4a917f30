use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::operator::{fingerprint, SketchKind, SketchOperator};
use crate::error::{Error, Result};
use crate::io::{expect_magic, read_f64s, read_u32, read_u64, to_u32, write_f64s, write_u32, write_u64};
use crate::matrix::{MatrixId, StreamDims};

const MAGIC: &[u8; 4] = b"SMPK";
const VERSION: u32 = 1;

/// Identity of the operator a summary was built with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorInfo {
    pub kind: SketchKind,
    pub k: usize,
    pub d: usize,
    pub seed: u64,
    pub fingerprint: u64,
}

impl OperatorInfo {
    pub fn of(op: &SketchOperator) -> Self {
        Self { kind: op.kind(), k: op.k(), d: op.d(), seed: op.seed(), fingerprint: op.fingerprint() }
    }

    /// Rebuilds the operator this summary was sketched with.
    pub fn operator(&self) -> Result<SketchOperator> {
        SketchOperator::new(self.kind, self.k, self.d, self.seed)
    }
}

/// `ΠA`, `ΠB`, exact squared column norms and squared Frobenius norms.
///
/// Sketches are stored column-major: column `i` of `ΠA` is
/// `a_sketch[i*k .. (i+1)*k]`.
#[derive(Debug)]
pub struct SketchSummary {
    pub(crate) op: OperatorInfo,
    pub(crate) dims: StreamDims,
    pub(crate) a_sketch: Vec<f64>,
    pub(crate) b_sketch: Vec<f64>,
    pub(crate) a_norms_sq: Vec<f64>,
    pub(crate) b_norms_sq: Vec<f64>,
    pub(crate) a_frob_sq: f64,
    pub(crate) b_frob_sq: f64,
    sketched_norms: OnceLock<(Vec<f64>, Vec<f64>)>,
}

impl Clone for SketchSummary {
    fn clone(&self) -> Self {
        Self::from_parts(
            self.op,
            self.dims,
            self.a_sketch.clone(),
            self.b_sketch.clone(),
            self.a_norms_sq.clone(),
            self.b_norms_sq.clone(),
            self.a_frob_sq,
            self.b_frob_sq,
        )
    }
}

/// Ignores the lazily filled norm cache.
impl PartialEq for SketchSummary {
    fn eq(&self, o: &Self) -> bool {
        self.op == o.op
            && self.dims == o.dims
            && self.a_sketch == o.a_sketch
            && self.b_sketch == o.b_sketch
            && self.a_norms_sq == o.a_norms_sq
            && self.b_norms_sq == o.b_norms_sq
            && self.a_frob_sq == o.a_frob_sq
            && self.b_frob_sq == o.b_frob_sq
    }
}

impl SketchSummary {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        op: OperatorInfo,
        dims: StreamDims,
        a_sketch: Vec<f64>,
        b_sketch: Vec<f64>,
        a_norms_sq: Vec<f64>,
        b_norms_sq: Vec<f64>,
        a_frob_sq: f64,
        b_frob_sq: f64,
    ) -> Self {
        Self {
            op,
            dims,
            a_sketch,
            b_sketch,
            a_norms_sq,
            b_norms_sq,
            a_frob_sq,
            b_frob_sq,
            sketched_norms: OnceLock::new(),
        }
    }

    /// The summary of an empty stream.
    pub fn zero(op: &SketchOperator, dims: StreamDims) -> Result<Self> {
        if dims.d != op.d() {
            return Err(Error::dims(format!("stream d = {}, operator d = {}", dims.d, op.d())));
        }
        let k = op.k();
        Ok(Self::from_parts(
            OperatorInfo::of(op),
            dims,
            vec![0.0; k * dims.n1],
            vec![0.0; k * dims.n2],
            vec![0.0; dims.n1],
            vec![0.0; dims.n2],
            0.0,
            0.0,
        ))
    }

    pub fn operator_info(&self) -> OperatorInfo {
        self.op
    }

    pub fn dims(&self) -> StreamDims {
        self.dims
    }

    pub fn k(&self) -> usize {
        self.op.k
    }

    pub fn sketch(&self, m: MatrixId) -> &[f64] {
        match m {
            MatrixId::A => &self.a_sketch,
            MatrixId::B => &self.b_sketch,
        }
    }

    /// Column `i` of `ΠA` (or `ΠB`).
    pub fn sketch_column(&self, m: MatrixId, i: usize) -> &[f64] {
        let k = self.op.k;
        &self.sketch(m)[i * k..(i + 1) * k]
    }

    pub fn col_norms_sq(&self, m: MatrixId) -> &[f64] {
        match m {
            MatrixId::A => &self.a_norms_sq,
            MatrixId::B => &self.b_norms_sq,
        }
    }

    pub fn col_norms(&self, m: MatrixId) -> Vec<f64> {
        self.col_norms_sq(m).iter().map(|v| v.sqrt()).collect()
    }

    pub fn frob_sq(&self, m: MatrixId) -> f64 {
        match m {
            MatrixId::A => self.a_frob_sq,
            MatrixId::B => self.b_frob_sq,
        }
    }

    /// `(‖ΠA_i‖, ‖ΠB_j‖)` for all columns, computed on first use.
    pub fn sketched_norms(&self) -> &(Vec<f64>, Vec<f64>) {
        self.sketched_norms.get_or_init(|| {
            let k = self.op.k;
            let norms = |s: &[f64]| -> Vec<f64> {
                s.chunks(k.max(1)).map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
            };
            (norms(&self.a_sketch), norms(&self.b_sketch))
        })
    }

    fn check_compatible(&self, o: &Self) -> Result<()> {
        if self.op.fingerprint != o.op.fingerprint || self.op != o.op {
            return Err(Error::IncompatibleSummary("different sketch operators".into()));
        }
        if self.dims != o.dims {
            return Err(Error::IncompatibleSummary(format!("dims {:?} vs {:?}", self.dims, o.dims)));
        }
        Ok(())
    }

    /// Combines summaries of disjoint entry sets by adding sketches and
    /// squared norms.
    pub fn merge(&self, o: &Self) -> Result<Self> {
        self.check_compatible(o)?;
        let add = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(a, b)| a + b).collect() };
        Ok(Self::from_parts(
            self.op,
            self.dims,
            add(&self.a_sketch, &o.a_sketch),
            add(&self.b_sketch, &o.b_sketch),
            add(&self.a_norms_sq, &o.a_norms_sq),
            add(&self.b_norms_sq, &o.b_norms_sq),
            self.a_frob_sq + o.a_frob_sq,
            self.b_frob_sq + o.b_frob_sq,
        ))
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        write_u32(w, VERSION)?;
        write_u32(w, self.op.kind.tag())?;
        write_u32(w, to_u32(self.op.k, "k")?)?;
        write_u32(w, to_u32(self.dims.d, "d")?)?;
        write_u32(w, to_u32(self.dims.n1, "n1")?)?;
        write_u32(w, to_u32(self.dims.n2, "n2")?)?;
        write_u64(w, self.op.seed)?;
        write_u64(w, self.op.fingerprint)?;
        write_f64s(w, &self.a_sketch)?;
        write_f64s(w, &self.b_sketch)?;
        write_f64s(w, &self.a_norms_sq)?;
        write_f64s(w, &self.b_norms_sq)?;
        write_f64s(w, &[self.a_frob_sq, self.b_frob_sq])?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        expect_magic(r, MAGIC)?;
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::format(format!("unsupported sketch summary version {version}")));
        }
        let kind = SketchKind::from_tag(read_u32(r)?)?;
        let k = read_u32(r)? as usize;
        let d = read_u32(r)? as usize;
        let n1 = read_u32(r)? as usize;
        let n2 = read_u32(r)? as usize;
        let seed = read_u64(r)?;
        let fp = read_u64(r)?;
        if fp != fingerprint(kind, k, d, seed) {
            return Err(Error::format("operator fingerprint does not match its parameters"));
        }
        let op = OperatorInfo { kind, k, d, seed, fingerprint: fp };
        let a_sketch = read_f64s(r, k * n1)?;
        let b_sketch = read_f64s(r, k * n2)?;
        let a_norms_sq = read_f64s(r, n1)?;
        let b_norms_sq = read_f64s(r, n2)?;
        let frobs = read_f64s(r, 2)?;
        let all = a_sketch.iter().chain(&b_sketch).chain(&a_norms_sq).chain(&b_norms_sq).chain(&frobs);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::format("non-finite value in sketch summary"));
        }
        if a_norms_sq.iter().chain(&b_norms_sq).chain(&frobs).any(|&v| v < 0.0) {
            return Err(Error::format("negative norm in sketch summary"));
        }
        Ok(Self::from_parts(
            op,
            StreamDims::new(d, n1, n2),
            a_sketch,
            b_sketch,
            a_norms_sq,
            b_norms_sq,
            frobs[0],
            frobs[1],
        ))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}
