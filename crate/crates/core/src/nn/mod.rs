//! Minimal differentiable building blocks: strided GEMM, layers with
//! hand-derived backward passes, and Adam.

mod adam;
pub mod layers;
mod param;
mod scalar;

pub use adam::Adam;
pub use layers::{Act, BatchNorm2d, Conv2d, ConvTranspose2d, Dense, Layer};
pub use param::{Module, Param};
pub use scalar::{gemm, MatRef, Scalar};
