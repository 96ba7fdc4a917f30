//! Binary entry stream.
//!
//! Header (24 bytes, little-endian): magic `SMPS`, version `u32`, `d`, `n1`,
//! `n2` as `u32`, and a reserved `u32` (zero). Each record is 17 bytes:
//! `u8` matrix id (0 = A, 1 = B), `u32` row, `u32` col, `f64` value.

use std::io::{Read, Write};

use super::{expect_magic, read_array, read_u32, to_u32, write_u32};
use crate::error::{Error, Result};
use crate::matrix::{Entry, MatrixId, StreamDims};

pub const MAGIC: &[u8; 4] = b"SMPS";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;
pub const RECORD_LEN: usize = 17;

pub struct StreamWriter<W: Write> {
    inner: W,
    dims: StreamDims,
    written: u64,
}

impl<W: Write> StreamWriter<W> {
    pub fn new(mut inner: W, dims: StreamDims) -> Result<Self> {
        inner.write_all(MAGIC)?;
        write_u32(&mut inner, VERSION)?;
        write_u32(&mut inner, to_u32(dims.d, "d")?)?;
        write_u32(&mut inner, to_u32(dims.n1, "n1")?)?;
        write_u32(&mut inner, to_u32(dims.n2, "n2")?)?;
        write_u32(&mut inner, 0)?;
        Ok(Self { inner, dims, written: 0 })
    }

    pub fn write(&mut self, e: &Entry) -> Result<()> {
        self.dims.check(e)?;
        let mut rec = [0u8; RECORD_LEN];
        rec[0] = e.matrix.tag();
        rec[1..5].copy_from_slice(&(e.row as u32).to_le_bytes());
        rec[5..9].copy_from_slice(&(e.col as u32).to_le_bytes());
        rec[9..17].copy_from_slice(&e.value.to_le_bytes());
        self.inner.write_all(&rec)?;
        self.written += 1;
        Ok(())
    }

    pub fn written(&self) -> u64 {
        self.written
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Writes a complete stream file.
pub fn write_stream<'a, W: Write>(
    w: W,
    dims: StreamDims,
    entries: impl IntoIterator<Item = &'a Entry>,
) -> Result<W> {
    let mut sw = StreamWriter::new(w, dims)?;
    for e in entries {
        sw.write(e)?;
    }
    sw.finish()
}

/// Iterator over the records of a stream file.
pub struct StreamReader<R: Read> {
    inner: R,
    dims: StreamDims,
    done: bool,
}

impl<R: Read> StreamReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        expect_magic(&mut inner, MAGIC)?;
        let version = read_u32(&mut inner)?;
        if version != VERSION {
            return Err(Error::format(format!("unsupported stream version {version}")));
        }
        let d = read_u32(&mut inner)? as usize;
        let n1 = read_u32(&mut inner)? as usize;
        let n2 = read_u32(&mut inner)? as usize;
        let _reserved = read_u32(&mut inner)?;
        Ok(Self { inner, dims: StreamDims::new(d, n1, n2), done: false })
    }

    pub fn dims(&self) -> StreamDims {
        self.dims
    }

    fn read_record(&mut self) -> Result<Option<Entry>> {
        let mut first = [0u8; 1];
        loop {
            match self.inner.read(&mut first) {
                Ok(0) => return Ok(None),
                Ok(_) => break,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e.into()),
            }
        }
        let rest: [u8; RECORD_LEN - 1] = read_array(&mut self.inner)?;
        let matrix = MatrixId::from_tag(first[0])?;
        let row = u32::from_le_bytes(rest[0..4].try_into().unwrap()) as usize;
        let col = u32::from_le_bytes(rest[4..8].try_into().unwrap()) as usize;
        let value = f64::from_le_bytes(rest[8..16].try_into().unwrap());
        Ok(Some(Entry { matrix, row, col, value }))
    }
}

impl<R: Read> Iterator for StreamReader<R> {
    type Item = Result<Entry>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_record() {
            Ok(Some(e)) => Some(Ok(e)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let dims = StreamDims::new(3, 2, 1);
        let e = Entry::new(MatrixId::B, 2, 0, -1.5);
        let buf = write_stream(Vec::new(), dims, [&e]).unwrap();
        assert_eq!(buf.len(), HEADER_LEN + RECORD_LEN);
        assert_eq!(&buf[..4], b"SMPS");
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 3);
        assert_eq!(buf[24], 1);
        let back: Vec<Entry> = StreamReader::new(&buf[..]).unwrap().map(|r| r.unwrap()).collect();
        assert_eq!(back, vec![e]);
    }

    #[test]
    fn truncated_record_is_an_error() {
        let dims = StreamDims::new(3, 2, 1);
        let e = Entry::new(MatrixId::A, 0, 0, 1.0);
        let buf = write_stream(Vec::new(), dims, [&e]).unwrap();
        let mut r = StreamReader::new(&buf[..buf.len() - 3]).unwrap();
        assert!(matches!(r.next(), Some(Err(Error::Format(_)))));
        assert!(r.next().is_none());
    }

    #[test]
    fn bad_magic() {
        assert!(matches!(StreamReader::new(&b"NOPE0000"[..]), Err(Error::Format(_))));
    }
}
