//! Dense-matrix engine with tape-based reverse-mode differentiation.
//!
//! Sized for the models in this crate: two-layer graph convolutions and
//! MLPs a handful of layers deep. Everything is f64.

pub mod adam;
pub mod checkpoint;
pub mod init;
pub mod matrix;
pub mod ops;
pub mod sparse;
pub mod tape;

pub use adam::{clip_grad_norm, AdamState, LrSchedule};
pub use checkpoint::Checkpoint;
pub use matrix::Matrix;
pub use sparse::CsrMatrix;
pub use tape::{Tape, Var};
