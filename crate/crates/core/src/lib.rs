//! One-pass rank-`r` approximation of `AᵀB` from an arbitrary-order stream of
//! the entries of `A` and `B`.
//!
//! The pipeline sketches both matrices while recording exact column norms,
//! samples entries of the product with probabilities biased by those norms,
//! estimates the sampled entries from the sketches with rescaled dot
//! products, and completes the low-rank product with weighted alternating
//! least squares.

pub mod error;
pub mod io;
pub mod matrix;
pub mod pipeline;
pub mod rng;
pub mod estimate;
pub mod sample;
pub mod sketch;
pub mod waltmin;

pub use error::{Error, ErrorClass, Result};
pub use matrix::{exact_product, truncated_svd, DenseMatrix, Entry, EntryStream, MatrixId, StreamDims};
pub use sketch::{ingest, ingest_dense, merge, SketchKind, SketchOperator, SketchSummary};
