//! Data-motion reduction for neural network training.
//!
//! - [`codec`]: lossy byte truncation of `f32` weight arrays (pack/unpack)
//!   with scalar, SIMD and multi-threaded pack paths.
//! - [`awp`]: per-layer precision controller driven by the relative change
//!   of weight l2-norms.
//! - [`nn`]: a small fully-connected classifier, momentum SGD and the batch
//!   pipeline that sends master weights through the codec to simulated
//!   workers.
//! - [`transfer`]: the simulated host/worker boundary, its byte ledger, a
//!   link cost model and the per-phase profile.
//! - [`config`], [`data`], [`run`]: experiment plumbing used by the CLI.

pub mod awp;
pub mod codec;
pub mod config;
pub mod data;
pub mod nn;
pub mod run;
pub mod transfer;

pub use codec::{
    pack, pack_parallel, pack_vectorized, truncation_mask, unpack, PackedBlock, RoundTo,
};
