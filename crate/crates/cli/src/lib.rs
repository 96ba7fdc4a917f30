//! Command line front end and experiment harness for `smp-pca`.

pub mod commands;
pub mod error;
pub mod experiments;
pub mod generate;
pub mod output;
