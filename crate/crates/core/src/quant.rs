//! Uniform symmetric per-tensor quantization.
//!
//! Rounding is half-away-from-zero (`f64::round`), which agrees with the
//! add-half-then-shift rounding of the LUT kernel on non-negative operands.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{IntTensor, Tensor};

pub const MIN_BITS: u32 = 2;
pub const MAX_BITS: u32 = 16;

pub(crate) fn check_bits(bits: u32, min: u32, max: u32) -> Result<()> {
    if bits < min || bits > max {
        return Err(Error::BitWidth { bits, min, max });
    }
    Ok(())
}

/// Scale and bit-width of a symmetric quantizer. Clamp bounds are derived
/// from the bit-width and never stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct QuantParams {
    bit_width: u32,
    scale: f64,
}

#[derive(Deserialize)]
struct RawParams {
    bit_width: u32,
    scale: f64,
}

impl TryFrom<RawParams> for QuantParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        QuantParams::new(raw.bit_width, raw.scale)
    }
}

impl QuantParams {
    pub fn new(bit_width: u32, scale: f64) -> Result<Self> {
        check_bits(bit_width, MIN_BITS, MAX_BITS)?;
        if !scale.is_finite() || scale <= 0.0 {
            return Err(Error::InvalidParam(format!("scale must be positive, got {scale}")));
        }
        Ok(Self { bit_width, scale })
    }

    pub fn bit_width(&self) -> u32 {
        self.bit_width
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn q_min(&self) -> i32 {
        -(1 << (self.bit_width - 1))
    }

    pub fn q_max(&self) -> i32 {
        (1 << (self.bit_width - 1)) - 1
    }

    /// `clamp(round(x / s), q_min, q_max)`.
    pub fn quantize_value(&self, x: f64) -> i32 {
        let q = (x / self.scale).round();
        // Clamp in f64 first so huge inputs cannot overflow the cast.
        q.clamp(self.q_min() as f64, self.q_max() as f64) as i32
    }

    pub fn dequantize_value(&self, q: i32) -> f64 {
        q as f64 * self.scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibMode {
    #[default]
    Symmetric,
    Asymmetric,
}

/// Running extrema over calibration samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibStats {
    pub x_max: f64,
    pub x_min: f64,
    pub sample_count: usize,
}

impl CalibStats {
    pub fn from_samples(samples: &[Tensor]) -> Result<Self> {
        Self::from_values(samples.iter().flat_map(|t| t.data().iter().copied()))
    }

    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut stats: Option<CalibStats> = None;
        for v in values {
            if !v.is_finite() {
                return Err(Error::NonFinite("calibration samples"));
            }
            let s = stats.get_or_insert(CalibStats {
                x_max: v,
                x_min: v,
                sample_count: 0,
            });
            s.x_max = s.x_max.max(v);
            s.x_min = s.x_min.min(v);
            s.sample_count += 1;
        }
        stats.ok_or(Error::Empty("calibration samples"))
    }

    pub fn params(&self, bits: u32, mode: CalibMode) -> Result<QuantParams> {
        check_bits(bits, MIN_BITS, MAX_BITS)?;
        let levels = (1u64 << bits) as f64;
        let scale = match mode {
            CalibMode::Symmetric => self.x_max.abs().max(self.x_min.abs()) * 2.0 / levels,
            CalibMode::Asymmetric => (self.x_max - self.x_min) / levels,
        };
        if scale == 0.0 {
            return Err(Error::DegenerateCalibration);
        }
        QuantParams::new(bits, scale)
    }
}

/// Symmetric calibration over the union of all sample elements.
pub fn calibrate(samples: &[Tensor], bits: u32) -> Result<QuantParams> {
    calibrate_with(samples, bits, CalibMode::Symmetric)
}

pub fn calibrate_with(samples: &[Tensor], bits: u32, mode: CalibMode) -> Result<QuantParams> {
    CalibStats::from_samples(samples)?.params(bits, mode)
}

/// Symmetric scale for a real interval, as if calibrated on its endpoints.
pub fn calibrate_range(lo: f64, hi: f64, bits: u32) -> Result<QuantParams> {
    CalibStats::from_values([lo, hi])?.params(bits, CalibMode::Symmetric)
}

pub fn quantize(x: &Tensor, p: &QuantParams) -> IntTensor {
    let data = x.data().iter().map(|&v| p.quantize_value(v)).collect();
    IntTensor::from_parts_unchecked(x.shape().to_vec(), data)
}

pub fn dequantize(q: &IntTensor, p: &QuantParams) -> Tensor {
    let data = q.data().iter().map(|&c| p.dequantize_value(c)).collect();
    Tensor::from_parts_unchecked(q.shape().to_vec(), data)
}

/// Quantize then dequantize.
pub fn fake_quantize(x: &Tensor, p: &QuantParams) -> Tensor {
    x.map(|v| p.dequantize_value(p.quantize_value(v)))
}
