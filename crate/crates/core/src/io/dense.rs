//! Dense CSV (one matrix row per line) and a raw binary dense format.
//!
//! CSV values are written with Rust's shortest round-trip float formatting,
//! so a write/read cycle is bit-exact.
//!
//! Binary layout: magic `SMPD`, version `u32`, rows `u32`, cols `u32`, then
//! `rows * cols` little-endian `f64` in column-major order.

use std::io::{BufRead, Read, Write};

use super::{expect_magic, read_f64s, read_u32, to_u32, write_f64s, write_u32};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

pub const MAGIC: &[u8; 4] = b"SMPD";
pub const VERSION: u32 = 1;

pub fn write_csv(mut w: impl Write, m: &DenseMatrix) -> Result<()> {
    let mut line = String::new();
    for i in 0..m.rows() {
        line.clear();
        for j in 0..m.cols() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&m.get(i, j).to_string());
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dense CSV; blank lines and `#` comments are skipped.
pub fn read_csv(r: impl BufRead) -> Result<DenseMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let row = t
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|_| {
                    Error::format(format!("line {}: cannot parse {tok:?}", lineno + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::format(format!(
                    "line {}: {} fields, expected {}",
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    let slices: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    DenseMatrix::from_rows(&slices)
}

pub fn write_binary(mut w: impl Write, m: &DenseMatrix) -> Result<()> {
    w.write_all(MAGIC)?;
    write_u32(&mut w, VERSION)?;
    write_u32(&mut w, to_u32(m.rows(), "rows")?)?;
    write_u32(&mut w, to_u32(m.cols(), "cols")?)?;
    write_f64s(&mut w, m.data())?;
    w.flush()?;
    Ok(())
}

pub fn read_binary(mut r: impl Read) -> Result<DenseMatrix> {
    expect_magic(&mut r, MAGIC)?;
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported dense version {version}")));
    }
    let rows = read_u32(&mut r)? as usize;
    let cols = read_u32(&mut r)? as usize;
    let data = read_f64s(&mut r, rows * cols)?;
    DenseMatrix::from_col_major(rows, cols, data)
}
