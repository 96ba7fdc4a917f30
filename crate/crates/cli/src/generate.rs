//! Synthetic `(A, B)` pairs.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use smp_pca::matrix::orthonormal_columns;
use smp_pca::rng::{self, Domain};
use smp_pca::{exact_product, DenseMatrix, Error, Result};
use statrs::function::gamma::ln_gamma;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    /// `A = G D`, `B = G D` with one Gaussian `G` and `D_ii = 1/i`.
    Gd,
    /// `A = G_A D`, `B = G_B D` with independent Gaussians.
    GdIndependent,
    /// Unit columns drawn from a cone of angle `theta` around a shared axis.
    Cone,
    /// Top-r left singular subspaces of `A` and `B` exactly orthogonal.
    Orthotop,
    /// `A = Q X`, `B = Q Y` with `Q` a `d x r` orthonormal frame.
    ExactRank,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub d: usize,
    pub n1: usize,
    pub n2: usize,
    pub r: usize,
    pub theta_deg: f64,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, d: usize, n1: usize, n2: usize, seed: u64) -> Self {
        Self { kind, d, n1, n2, r: 5, theta_deg: 30.0, seed }
    }

    pub fn with_rank(mut self, r: usize) -> Self {
        self.r = r;
        self
    }

    pub fn with_theta(mut self, theta_deg: f64) -> Self {
        self.theta_deg = theta_deg;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n1 == 0 || self.n2 == 0 {
            return Err(Error::invalid(format!("dims must be positive, got d={} n1={} n2={}", self.d, self.n1, self.n2)));
        }
        match self.kind {
            GeneratorKind::Cone if !(self.theta_deg > 0.0 && self.theta_deg < 180.0) => {
                Err(Error::invalid(format!("cone angle {} must lie in (0, 180) degrees", self.theta_deg)))
            }
            GeneratorKind::Orthotop if self.r == 0 || 3 * self.r > self.d || 2 * self.r > self.n1.min(self.n2) => {
                Err(Error::invalid(format!(
                    "orthotop needs 1 <= r, 3r <= d and 2r <= min(n1, n2); got r={} d={} n1={} n2={}",
                    self.r, self.d, self.n1, self.n2
                )))
            }
            GeneratorKind::ExactRank if self.r == 0 || self.r > self.d => {
                Err(Error::invalid(format!("exact-rank needs 1 <= r <= d, got r={} d={}", self.r, self.d)))
            }
            _ => Ok(()),
        }
    }
}

pub fn generate(spec: &GeneratorSpec) -> Result<(DenseMatrix, DenseMatrix)> {
    spec.validate()?;
    let GeneratorSpec { d, n1, n2, seed, .. } = *spec;
    Ok(match spec.kind {
        GeneratorKind::Gd => {
            let g = DenseMatrix::gaussian(d, n1.max(n2), seed, 0);
            (decay(&g, n1), decay(&g, n2))
        }
        GeneratorKind::GdIndependent => (
            decay(&DenseMatrix::gaussian(d, n1, seed, 0), n1),
            decay(&DenseMatrix::gaussian(d, n2, seed, 1), n2),
        ),
        GeneratorKind::Cone => {
            let axis = orthonormal_columns(d, 1, rng::derive_seed(seed, 0xa515)).into_data();
            (cone(&axis, n1, spec.theta_deg, seed, 0), cone(&axis, n2, spec.theta_deg, seed, 1))
        }
        GeneratorKind::Orthotop => orthotop(spec),
        GeneratorKind::ExactRank => {
            let q = orthonormal_columns(d, spec.r, rng::derive_seed(seed, 0xe4a)).transpose();
            let x = DenseMatrix::gaussian(spec.r, n1, seed, 1);
            let y = DenseMatrix::gaussian(spec.r, n2, seed, 2);
            (exact_product(&q, &x)?, exact_product(&q, &y)?)
        }
    })
}

/// First `n` columns of `g`, column `j` scaled by `1/(j+1)`.
fn decay(g: &DenseMatrix, n: usize) -> DenseMatrix {
    DenseMatrix::from_fn(g.rows(), n, |i, j| g.get(i, j) / (j + 1) as f64)
}

/// `E‖g‖` for `g ~ N(0, I_d)`.
fn expected_gaussian_norm(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    std::f64::consts::SQRT_2 * (ln_gamma(h + 0.5) - ln_gamma(h)).exp()
}

fn cone(axis: &[f64], n: usize, theta_deg: f64, seed: u64, index: u64) -> DenseMatrix {
    let d = axis.len();
    let sigma = (theta_deg.to_radians() / 2.0).tan() / expected_gaussian_norm(d);
    let mut rng = rng::stream(seed, Domain::Generator, index);
    let mut data = Vec::with_capacity(d * n);
    let mut col = vec![0.0; d];
    for _ in 0..n {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        for (c, &x) in col.iter_mut().zip(axis) {
            let g: f64 = StandardNormal.sample(&mut rng);
            *c = sign * (x + sigma * g);
        }
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        data.extend(col.iter().map(|v| v / norm));
    }
    DenseMatrix::from_col_major(d, n, data).expect("finite cone columns")
}

/// Tail scale of the orthotop instances, relative to `sqrt(n)`.
const ORTHOTOP_TAIL: f64 = 0.05;

/// `A = F1 S1 X1ᵀ + F3 S3 X3ᵀ + E_A`, `B = F2 S1 Y1ᵀ + F3 S3 Y3ᵀ + E_B` with
/// `[F1 F2 F3]` orthonormal and `min S1 > max S3`, so the top-r subspaces
/// of `A` and `B` are `F1` and `F2` while `AᵀB` lives on the shared `F3`.
fn orthotop(spec: &GeneratorSpec) -> (DenseMatrix, DenseMatrix) {
    let GeneratorSpec { d, n1, n2, r, seed, .. } = *spec;
    let f = orthonormal_columns(d, 3 * r, rng::derive_seed(seed, 0xf0));
    let x = orthonormal_columns(n1, 2 * r, rng::derive_seed(seed, 0xf1));
    let y = orthonormal_columns(n2, 2 * r, rng::derive_seed(seed, 0xf2));
    let s1: Vec<f64> = (0..r).map(|c| 4.0 - c as f64 / r as f64).collect();
    let s3: Vec<f64> = (0..r).map(|c| 3.0 - c as f64 / r as f64).collect();
    let build = |n: usize, top: usize, coef: &DenseMatrix, index: u64| {
        let tail = DenseMatrix::gaussian(d, n, seed, index);
        let scale = ORTHOTOP_TAIL / (n as f64).sqrt();
        DenseMatrix::from_fn(d, n, |i, j| {
            let mut v = scale * tail.get(i, j);
            for c in 0..r {
                v += f.get(i, top + c) * s1[c] * coef.get(j, c);
                v += f.get(i, 2 * r + c) * s3[c] * coef.get(j, r + c);
            }
            v
        })
    };
    (build(n1, 0, &x, 3), build(n2, r, &y, 4))
}
