//! Data formats, experiment configuration, the sweep runner and desk-scale
//! verification for the hybrid primal-dual protocol in `hippo-core`.
// `!(x >= 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod graph_io;
pub mod output;
pub mod plot;
pub mod verify;
