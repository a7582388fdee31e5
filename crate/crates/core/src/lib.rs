//! Hybrid primal-dual protocol for decentralized composite optimization.
//!
//! A network of agents cooperatively minimizes `Σ_i f_i(x) + g(x)` where each
//! `f_i` is a strongly convex local loss and `g` is a convex, possibly
//! nonsmooth regularizer. Every agent may choose, per iteration, between a
//! gradient step and a Newton step; agents wake up asynchronously according
//! to an activation scheme.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, configuration and
//! the command line live in the companion `hippo` crate.
#![cfg_attr(not(test), no_std)]
// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod activation;
pub mod analysis;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod model;
pub mod protocol;
pub mod simulator;

pub use error::{Error, Result};
