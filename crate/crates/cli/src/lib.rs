//! IO, file formats, and command plumbing around `ggt-core`.

pub mod checkpoint;
pub mod compare;
pub mod error;
pub mod ggt1;
pub mod run;

pub use error::{CliError, Result};
