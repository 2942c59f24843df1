//! Core engine for population-aware human trajectory diffusion.
//!
//! Everything in this crate is pure computation over in-memory values and
//! builds without the standard library (`alloc` only). File formats, the
//! command-line front end and threading live in the `mobidiff` crate.

#![no_std]
#![forbid(unsafe_op_in_unsafe_fn)]
// `!(x > 0.0)` is used on purpose to reject NaN along with non-positives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod autodiff;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod math;
pub mod metrics;
pub mod mobility;

pub use error::{Error, Result};
