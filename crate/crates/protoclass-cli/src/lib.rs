//! Library side of the protoclass CLI: dataset I/O, synthetic data,
//! experiment harness and report rendering.

// per-feature math walks parallel vectors by index
#![allow(clippy::needless_range_loop)]

pub mod dataset;
pub mod experiment;
pub mod report;
pub mod synth;
