//! Minimal reverse-mode differentiation over dense `f64` arrays.
//!
//! A [`Tape`] records primitives in execution order; [`Tape::backward`]
//! replays them in reverse and returns per-node gradients. Learnable arrays
//! live in a [`ParamStore`] and are bound to a tape as leaves, so that one
//! store can feed many independent tapes.

mod array;
mod gradcheck;
mod params;
mod tape;

pub use array::Array;
pub(crate) use array::gemm;
pub use gradcheck::{grad_check, rel_error, CheckMode, GradCheckConfig, GradCheckReport};
pub use params::{Adam, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var, LOG_FLOOR};
