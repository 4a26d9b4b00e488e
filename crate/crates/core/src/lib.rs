//! Integer quantization kernels for fully-integer transformer inference.
//!
//! * [`quant`]: symmetric per-tensor quantization and calibration.
//! * [`lut`]: the fixed-point interpolating table kernel and its cascade.
//! * [`dulut`]: builders for cascaded table pairs.
//! * [`qans`]: softmax quantized after max-subtraction, with truncation search.
//! * [`posembed`]: position-embedding math and magnitude diagnostics.
//! * [`attn`]: synthetic fusion and attention distortion studies.

pub mod attn;
pub mod dulut;
pub mod error;
pub mod func;
pub mod lut;
pub mod posembed;
pub mod qans;
pub mod quant;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{IntTensor, Tensor};
