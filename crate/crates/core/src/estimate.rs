//! Estimates of individual entries `A_iᵀB_j` of the product from a sketch
//! summary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::MatrixId;
use crate::sketch::SketchSummary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    /// `(ΠA_i)ᵀ(ΠB_j)`.
    Plain,
    /// `‖A_i‖‖B_j‖ cos∠(ΠA_i, ΠB_j)`: keeps only the sketched angle and
    /// uses the exact column norms.
    Rescaled,
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn check(s: &SketchSummary, i: usize, j: usize) -> Result<()> {
    let dims = s.dims();
    if i >= dims.n1 || j >= dims.n2 {
        return Err(Error::IndexOutOfRange(format!(
            "({i}, {j}) outside {}x{}",
            dims.n1, dims.n2
        )));
    }
    Ok(())
}

fn estimate_unchecked(s: &SketchSummary, i: usize, j: usize, kind: EstimatorKind) -> f64 {
    let ip = dot(s.sketch_column(MatrixId::A, i), s.sketch_column(MatrixId::B, j));
    match kind {
        EstimatorKind::Plain => ip,
        EstimatorKind::Rescaled => {
            let (sa, sb) = s.sketched_norms();
            let denom = sa[i] * sb[j];
            if denom == 0.0 {
                return 0.0;
            }
            let cos = (ip / denom).clamp(-1.0, 1.0);
            let na = s.col_norms_sq(MatrixId::A)[i].sqrt();
            let nb = s.col_norms_sq(MatrixId::B)[j].sqrt();
            na * nb * cos
        }
    }
}

/// Estimate of `A_iᵀB_j`. Returns 0 when a sketched column is zero.
pub fn estimate_entry(s: &SketchSummary, i: usize, j: usize, kind: EstimatorKind) -> Result<f64> {
    check(s, i, j)?;
    Ok(estimate_unchecked(s, i, j, kind))
}

/// [`estimate_entry`] for each pair, sharing the cached sketched norms.
pub fn estimate_block(
    s: &SketchSummary,
    pairs: &[(usize, usize)],
    kind: EstimatorKind,
) -> Result<Vec<f64>> {
    for &(i, j) in pairs {
        check(s, i, j)?;
    }
    Ok(pairs.iter().map(|&(i, j)| estimate_unchecked(s, i, j, kind)).collect())
}
