//! Exhaustive per-code view of a target function at fixed input/output scales.

use crate::error::{Error, Result};
use crate::func::FunctionSpec;
use crate::lut::kernel_fast;
use crate::lut::{CodeMap, LutTable};
use crate::quant::{calibrate_range, QuantParams};

/// Points used to scan a function's output range over its domain.
const RANGE_SCAN_POINTS: usize = 4097;

/// Output quantizer for `f` over its domain: symmetric scale from the
/// extreme values on a dense grid.
pub fn output_params(f: &FunctionSpec, bits: u32) -> Result<(QuantParams, f64)> {
    let (lo, hi) = f.domain();
    let mut fmin = f64::INFINITY;
    let mut fmax = f64::NEG_INFINITY;
    for i in 0..RANGE_SCAN_POINTS {
        let x = lo + (hi - lo) * i as f64 / (RANGE_SCAN_POINTS - 1) as f64;
        let v = f.eval(x);
        if !v.is_finite() {
            return Err(Error::NonFinite("function value on domain"));
        }
        fmin = fmin.min(v);
        fmax = fmax.max(v);
    }
    let p = calibrate_range(fmin, fmax, bits)?;
    Ok((p, fmax - fmin))
}

/// Default input scale: symmetric calibration of the domain endpoints.
pub fn input_scale(f: &FunctionSpec, bits: u32) -> Result<f64> {
    let (lo, hi) = f.domain();
    Ok(calibrate_range(lo, hi, bits)?.scale())
}

#[derive(Debug, Clone)]
pub(crate) struct CodeGrid {
    pub i_bit: u32,
    pub in_scale: f64,
    pub out: QuantParams,
    /// f at each code's real value (clamped into the domain), indexed by
    /// unsigned code `c + 2^(i_bit-1)`.
    pub fx: Vec<f64>,
    pub in_domain: Vec<bool>,
    /// Correctly rounded output code of each input code.
    pub target: Vec<i32>,
    pub eps: f64,
}

impl CodeGrid {
    pub fn new(f: &FunctionSpec, i_bit: u32, in_scale: f64, are_epsilon: Option<f64>) -> Result<Self> {
        if !in_scale.is_finite() || in_scale <= 0.0 {
            return Err(Error::InvalidParam(format!("in_scale must be positive, got {in_scale}")));
        }
        let (out, range) = output_params(f, i_bit)?;
        let eps = match are_epsilon {
            Some(e) if e.is_finite() && e >= 0.0 => e,
            Some(e) => return Err(Error::InvalidParam(format!("are_epsilon {e} must be >= 0"))),
            None => 1e-6 * range,
        };
        Self::with_output(f, i_bit, in_scale, out, eps)
    }

    pub fn with_output(
        f: &FunctionSpec,
        i_bit: u32,
        in_scale: f64,
        out: QuantParams,
        eps: f64,
    ) -> Result<Self> {
        let n = 1usize << i_bit;
        let half = (n / 2) as i64;
        let (lo, hi) = f.domain();
        let tol = 1e-9 * in_scale;
        let mut fx = Vec::with_capacity(n);
        let mut in_domain = Vec::with_capacity(n);
        let mut target = Vec::with_capacity(n);
        for u in 0..n as i64 {
            let x = (u - half) as f64 * in_scale;
            let v = f.eval(f.clamp_to_domain(x));
            if !v.is_finite() {
                return Err(Error::NonFinite("function value on domain"));
            }
            fx.push(v);
            in_domain.push(x >= lo - tol && x <= hi + tol);
            target.push(out.quantize_value(v));
        }
        if !in_domain.iter().any(|&d| d) {
            return Err(Error::InvalidParam(
                "no input code falls inside the function domain".into(),
            ));
        }
        Ok(Self {
            i_bit,
            in_scale,
            out,
            fx,
            in_domain,
            target,
            eps,
        })
    }

    pub fn n(&self) -> usize {
        self.fx.len()
    }

    pub fn half(&self) -> i32 {
        (self.n() / 2) as i32
    }

    /// Knot value: like the output quantizer but allowing `q_max + 1`.
    pub fn knot_value(&self, v: f64) -> i32 {
        let half = f64::from(self.half());
        (v / self.out.scale()).round().clamp(-half, half) as i32
    }

    pub fn rel_err(&self, u: usize, code: i32) -> f64 {
        let v = self.fx[u];
        (v - self.out.dequantize_value(code)).abs() / (v.abs() + self.eps)
    }

    /// Mean relative error per block of `width` consecutive codes, counting
    /// only in-domain codes (blocks without any score zero).
    pub fn block_are(&self, outputs: &[i32], width: usize) -> Vec<f64> {
        (0..self.n() / width)
            .map(|k| {
                let (sum, cnt) = (k * width..(k + 1) * width)
                    .filter(|&u| self.in_domain[u])
                    .fold((0.0, 0usize), |(s, c), u| (s + self.rel_err(u, outputs[u]), c + 1));
                if cnt == 0 {
                    0.0
                } else {
                    sum / cnt as f64
                }
            })
            .collect()
    }

    /// True when no two adjacent in-domain codes are collapsed onto the same
    /// mapper output while their correctly rounded targets differ.
    pub fn resolution_ok(&self, mapped: &[i32]) -> bool {
        (0..self.n() - 1).all(|u| {
            !(self.in_domain[u]
                && self.in_domain[u + 1]
                && mapped[u] == mapped[u + 1]
                && self.target[u] != self.target[u + 1])
        })
    }

    pub fn eval_table(&self, t: &LutTable) -> Vec<i32> {
        let half = self.half();
        (0..self.n() as i32).map(|u| kernel_fast(u - half, t)).collect()
    }
}

/// Per-code error of a code map against its target function.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorProfile {
    pub codes: Vec<i32>,
    pub outputs: Vec<i32>,
    pub real_in: Vec<f64>,
    pub real_out: Vec<f64>,
    pub exact: Vec<f64>,
    pub abs_err: Vec<f64>,
    pub rel_err: Vec<f64>,
    pub in_domain: Vec<bool>,
}

impl ErrorProfile {
    /// Evaluates every input code of `map`. Relative error uses the same
    /// guarded denominator as the builder's ARE.
    pub fn measure<M: CodeMap + ?Sized>(
        f: &FunctionSpec,
        map: &M,
        in_scale: f64,
        out_scale: f64,
        are_epsilon: Option<f64>,
    ) -> Result<Self> {
        let (lo, hi) = map.input_range();
        let i_bit = (hi - lo + 1).trailing_zeros();
        let (_, range) = output_params(f, i_bit)?;
        let out = QuantParams::new(i_bit, out_scale)?;
        let eps = are_epsilon.unwrap_or(1e-6 * range);
        let grid = CodeGrid::with_output(f, i_bit, in_scale, out, eps)?;
        let mut p = ErrorProfile {
            codes: Vec::new(),
            outputs: Vec::new(),
            real_in: Vec::new(),
            real_out: Vec::new(),
            exact: Vec::new(),
            abs_err: Vec::new(),
            rel_err: Vec::new(),
            in_domain: grid.in_domain.clone(),
        };
        for (u, c) in (lo..=hi).enumerate() {
            let o = map.eval_code(c)?;
            let y = out.dequantize_value(o);
            p.codes.push(c);
            p.outputs.push(o);
            p.real_in.push(c as f64 * in_scale);
            p.real_out.push(y);
            p.exact.push(grid.fx[u]);
            p.abs_err.push((grid.fx[u] - y).abs());
            p.rel_err.push(grid.rel_err(u, o));
        }
        Ok(p)
    }

    fn max_over(&self, v: &[f64]) -> f64 {
        v.iter()
            .zip(&self.in_domain)
            .filter(|(_, &d)| d)
            .fold(0.0, |m, (&e, _)| m.max(e))
    }

    /// Largest relative error over in-domain codes.
    pub fn max_rel(&self) -> f64 {
        self.max_over(&self.rel_err)
    }

    pub fn max_abs(&self) -> f64 {
        self.max_over(&self.abs_err)
    }
}
