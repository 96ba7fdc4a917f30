use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::DenseMatrix;
use crate::error::{Error, Result};
use crate::io::stream_format::StreamReader;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatrixId {
    A,
    B,
}

impl MatrixId {
    pub fn tag(self) -> u8 {
        match self {
            MatrixId::A => 0,
            MatrixId::B => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(MatrixId::A),
            1 => Ok(MatrixId::B),
            t => Err(Error::format(format!("unknown matrix id {t}"))),
        }
    }
}

/// One nonzero of `A` or `B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub matrix: MatrixId,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl Entry {
    pub fn new(matrix: MatrixId, row: usize, col: usize, value: f64) -> Self {
        Self { matrix, row, col, value }
    }
}

/// `A` is `d x n1`, `B` is `d x n2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamDims {
    pub d: usize,
    pub n1: usize,
    pub n2: usize,
}

impl StreamDims {
    pub fn new(d: usize, n1: usize, n2: usize) -> Self {
        Self { d, n1, n2 }
    }

    pub fn cols(&self, matrix: MatrixId) -> usize {
        match matrix {
            MatrixId::A => self.n1,
            MatrixId::B => self.n2,
        }
    }

    pub fn check(&self, e: &Entry) -> Result<()> {
        let n = self.cols(e.matrix);
        if e.row >= self.d || e.col >= n {
            return Err(Error::IndexOutOfRange(format!(
                "{:?}({}, {}) outside {}x{}",
                e.matrix, e.row, e.col, self.d, n
            )));
        }
        if !e.value.is_finite() {
            return Err(Error::NonFinite {
                value: e.value,
                location: format!("{:?}({}, {})", e.matrix, e.row, e.col),
            });
        }
        Ok(())
    }
}

/// The only access path to `A` and `B` in one-pass mode. Positions never
/// produced by the source are zero. Consuming the stream moves it, so a
/// second pass over the same `EntryStream` cannot be expressed.
pub struct EntryStream<I> {
    dims: StreamDims,
    source: I,
}

impl<I> EntryStream<I>
where
    I: Iterator<Item = Result<Entry>>,
{
    pub fn new(dims: StreamDims, source: I) -> Self {
        Self { dims, source }
    }

    pub fn dims(&self) -> StreamDims {
        self.dims
    }
}

impl<I> Iterator for EntryStream<I>
where
    I: Iterator<Item = Result<Entry>>,
{
    type Item = Result<Entry>;

    fn next(&mut self) -> Option<Self::Item> {
        let dims = self.dims;
        self.source.next().map(|r| r.and_then(|e| dims.check(&e).map(|_| e)))
    }
}

impl EntryStream<std::vec::IntoIter<Result<Entry>>> {
    pub fn from_entries(dims: StreamDims, entries: Vec<Entry>) -> Self {
        let items: Vec<Result<Entry>> = entries.into_iter().map(Ok).collect();
        Self::new(dims, items.into_iter())
    }

    /// Row-major stream of the nonzeros of `a` followed by those of `b`.
    pub fn from_dense(a: &DenseMatrix, b: &DenseMatrix) -> Result<Self> {
        let (dims, entries) = dense_entries(a, b)?;
        Ok(Self::from_entries(dims, entries))
    }
}

/// Nonzero entries of `a` then `b`, each in row-major order.
pub fn dense_entries(a: &DenseMatrix, b: &DenseMatrix) -> Result<(StreamDims, Vec<Entry>)> {
    if a.rows() != b.rows() {
        return Err(Error::dims(format!("A has {} rows, B has {}", a.rows(), b.rows())));
    }
    let dims = StreamDims::new(a.rows(), a.cols(), b.cols());
    let mut entries = Vec::new();
    for (id, m) in [(MatrixId::A, a), (MatrixId::B, b)] {
        for row in 0..m.rows() {
            for col in 0..m.cols() {
                let v = m.get(row, col);
                if v != 0.0 {
                    entries.push(Entry::new(id, row, col, v));
                }
            }
        }
    }
    Ok((dims, entries))
}

/// Materializes a stream back into `(A, B)`.
pub fn reassemble<I>(stream: EntryStream<I>) -> Result<(DenseMatrix, DenseMatrix)>
where
    I: Iterator<Item = Result<Entry>>,
{
    let dims = stream.dims();
    let mut a = DenseMatrix::zeros(dims.d, dims.n1);
    let mut b = DenseMatrix::zeros(dims.d, dims.n2);
    for e in stream {
        let e = e?;
        match e.matrix {
            MatrixId::A => a.set(e.row, e.col, e.value),
            MatrixId::B => b.set(e.row, e.col, e.value),
        }
    }
    Ok((a, b))
}

/// A binary entry-stream file that may be opened for reading once.
#[derive(Debug)]
pub struct StreamFile {
    path: PathBuf,
    opens: AtomicUsize,
}

impl StreamFile {
    pub fn new(path: impl AsRef<Path>) -> Self {
        Self { path: path.as_ref().to_path_buf(), opens: AtomicUsize::new(0) }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Number of times `open` has been called, successful or not.
    pub fn open_count(&self) -> usize {
        self.opens.load(Ordering::SeqCst)
    }

    pub fn open(&self) -> Result<EntryStream<StreamReader<BufReader<File>>>> {
        if self.opens.fetch_add(1, Ordering::SeqCst) > 0 {
            return Err(Error::StreamConsumed);
        }
        let reader = StreamReader::new(BufReader::new(File::open(&self.path)?))?;
        Ok(EntryStream::new(reader.dims(), reader))
    }
}
