//! Glance-and-gaze attention kernels with exact cost accounting.
//!
//! The crate provides, without touching the standard library:
//!
//! - a minimal dense-tensor engine with reverse-mode gradients recorded on
//!   an evaluation [`Tape`](autodiff::Tape), plus a finite-difference
//!   checker;
//! - adaptively-dilated splitting/merging of token grids as explicit
//!   permutations, and the attention variants built on them (full MSA,
//!   glance, local-window, spatial-reduction);
//! - the fused glance+gaze block (partitioned attention plus a depthwise
//!   convolution over merged values) and the hierarchical four-stage
//!   backbone in its tiny and small configurations;
//! - exact integer MAC/parameter accounting, both symbolically from a
//!   configuration and by folding an executed trace, with closed-form cost
//!   evaluators to compare against;
//! - runtime verification suites wiring all of the above together.
//!
//! Everything is deterministic: reductions accumulate in ascending index
//! order, and all randomness flows from explicit seeds. Forward evaluation
//! is pure; weights are freely shareable across threads once built.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod attention;
pub mod autodiff;
pub mod backbone;
pub mod complexity;
pub mod error;
pub mod ggblock;
pub mod gradcheck;
pub mod init;
pub mod oracle;
pub mod partition;
pub mod scalar;
pub mod tensor;
pub mod verify;

pub use autodiff::{Bindings, Gradients, Tape, Value};
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{NormParams, Parameter, Tensor};
