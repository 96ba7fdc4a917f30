//! MatrixMarket exchange format.
//!
//! Reads `matrix coordinate {real,integer,pattern} {general,symmetric,skew-symmetric}`
//! and `matrix array real general`; writes `matrix coordinate real general`.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Real,
    Pattern,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    Skew,
}

/// Coordinate triplets of a MatrixMarket file, 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Triplets {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn to_dense(&self) -> Result<DenseMatrix> {
        let mut data = vec![0.0; self.rows * self.cols];
        for &(i, j, v) in &self.entries {
            data[j * self.rows + i] = v;
        }
        DenseMatrix::from_col_major(self.rows, self.cols, data)
    }
}

pub fn read_triplets(r: impl BufRead) -> Result<Triplets> {
    let mut lines = r.lines().enumerate();
    let (_, banner) = lines.next().ok_or_else(|| Error::format("empty MatrixMarket file"))?;
    let banner = banner?.to_ascii_lowercase();
    let toks: Vec<&str> = banner.split_whitespace().collect();
    if toks.len() != 5 || toks[0] != "%%matrixmarket" || toks[1] != "matrix" {
        return Err(Error::format(format!("bad MatrixMarket banner {banner:?}")));
    }
    let coordinate = match toks[2] {
        "coordinate" => true,
        "array" => false,
        f => return Err(Error::format(format!("unsupported format {f}"))),
    };
    let field = match toks[3] {
        "real" | "integer" | "double" => Field::Real,
        "pattern" if coordinate => Field::Pattern,
        f => return Err(Error::format(format!("unsupported field {f}"))),
    };
    let symmetry = match toks[4] {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::Skew,
        s => return Err(Error::format(format!("unsupported symmetry {s}"))),
    };
    if !coordinate && symmetry != Symmetry::General {
        return Err(Error::format("only general array matrices are supported"));
    }

    let mut body = lines.filter_map(|(n, l)| match l {
        Ok(l) => {
            let t = l.trim().to_string();
            (!t.is_empty() && !t.starts_with('%')).then_some(Ok((n + 1, t)))
        }
        Err(e) => Some(Err(Error::from(e))),
    });
    let (size_line, size) = body.next().ok_or_else(|| Error::format("missing size line"))??;
    let nums = parse_usizes(&size, size_line)?;
    let parse_f = |tok: &str, n: usize| {
        tok.parse::<f64>()
            .map_err(|_| Error::format(format!("line {n}: bad value {tok:?}")))
    };

    if !coordinate {
        let [rows, cols] = nums[..] else {
            return Err(Error::format(format!("line {size_line}: expected `rows cols`")));
        };
        let mut data = Vec::with_capacity(rows * cols);
        for item in body {
            let (n, l) = item?;
            data.push(parse_f(&l, n)?);
        }
        let m = DenseMatrix::from_col_major(rows, cols, data)?;
        let mut entries = Vec::new();
        for j in 0..cols {
            for i in 0..rows {
                if m.get(i, j) != 0.0 {
                    entries.push((i, j, m.get(i, j)));
                }
            }
        }
        return Ok(Triplets { rows, cols, entries });
    }

    let [rows, cols, nnz] = nums[..] else {
        return Err(Error::format(format!("line {size_line}: expected `rows cols nnz`")));
    };
    let mut entries = Vec::with_capacity(nnz);
    for item in body {
        let (n, l) = item?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        let want = if field == Field::Pattern { 2 } else { 3 };
        if toks.len() != want {
            return Err(Error::format(format!("line {n}: expected {want} fields")));
        }
        let i: usize = toks[0].parse().map_err(|_| Error::format(format!("line {n}: bad row")))?;
        let j: usize = toks[1].parse().map_err(|_| Error::format(format!("line {n}: bad col")))?;
        if i == 0 || j == 0 || i > rows || j > cols {
            return Err(Error::format(format!("line {n}: index ({i}, {j}) out of range")));
        }
        let v = if field == Field::Pattern { 1.0 } else { parse_f(toks[2], n)? };
        if !v.is_finite() {
            return Err(Error::NonFinite { value: v, location: format!("line {n}") });
        }
        entries.push((i - 1, j - 1, v));
        if i != j {
            match symmetry {
                Symmetry::General => {}
                Symmetry::Symmetric => entries.push((j - 1, i - 1, v)),
                Symmetry::Skew => entries.push((j - 1, i - 1, -v)),
            }
        }
    }
    let stored = entries.len();
    if symmetry == Symmetry::General && stored != nnz {
        return Err(Error::format(format!("declared {nnz} entries, found {stored}")));
    }
    Ok(Triplets { rows, cols, entries })
}

fn parse_usizes(line: &str, n: usize) -> Result<Vec<usize>> {
    line.split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::format(format!("line {n}: bad size {t:?}"))))
        .collect()
}

pub fn read_dense(r: impl BufRead) -> Result<DenseMatrix> {
    read_triplets(r)?.to_dense()
}

pub fn write_dense(mut w: impl Write, m: &DenseMatrix) -> Result<()> {
    let nnz = m.data().iter().filter(|v| **v != 0.0).count();
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", m.rows(), m.cols(), nnz)?;
    for j in 0..m.cols() {
        for i in 0..m.rows() {
            let v = m.get(i, j);
            if v != 0.0 {
                writeln!(w, "{} {} {}", i + 1, j + 1, v)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut m = DenseMatrix::gaussian(6, 4, 5, 0);
        m.set(2, 1, 0.0);
        let mut buf = Vec::new();
        write_dense(&mut buf, &m).unwrap();
        assert_eq!(read_dense(&buf[..]).unwrap(), m);
    }

    #[test]
    fn symmetric_and_array() {
        let src = "%%MatrixMarket matrix coordinate real symmetric\n% comment\n2 2 2\n1 1 4\n2 1 -1\n";
        let m = read_dense(src.as_bytes()).unwrap();
        assert_eq!(m, DenseMatrix::from_rows(&[&[4.0, -1.0], &[-1.0, 0.0]]).unwrap());
        let arr = "%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n";
        let m = read_dense(arr.as_bytes()).unwrap();
        assert_eq!(m, DenseMatrix::from_rows(&[&[1.0, 3.0], &[2.0, 4.0]]).unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_dense("%%MatrixMarket matrix coordinate complex general\n".as_bytes()).is_err());
        let oob = "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n";
        assert!(matches!(read_dense(oob.as_bytes()), Err(Error::Format(_))));
        let short = "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n";
        assert!(matches!(read_dense(short.as_bytes()), Err(Error::Format(_))));
    }
}
