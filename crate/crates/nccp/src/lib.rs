//! Problem-spec ingestion, trace emission, benchmarks and invariant suites around `nccp-core`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod matrix;
pub mod run;
pub mod spec;
pub mod suites;
pub mod trace;

pub use nccp_core as core;
