//! Softmax quantized after numerical stabilization.
//!
//! Subtracting the row maximum makes every logit non-positive, so a k-bit
//! quantizer only has to cover `[-i, 0]`. The truncation bound `i` is picked
//! from `1..=N` (scale `i / 2^(k-1)`) to minimize the distance between the
//! quantized-input softmax and the float softmax.
//!
//! All row-wise operations act along the last axis.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lut::{dulut_eval, DulutPair};
use crate::quant::{check_bits, fake_quantize, QuantParams, MAX_BITS, MIN_BITS};
use crate::tensor::{IntTensor, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorNorm {
    #[default]
    L1,
    L2,
}

impl std::str::FromStr for ErrorNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(ErrorNorm::L1),
            "l2" => Ok(ErrorNorm::L2),
            _ => Err(Error::InvalidParam(format!("unknown norm '{s}' (expected l1 or l2)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QansConfig {
    pub k: u32,
    /// Number of candidate truncation bounds.
    pub n: usize,
    pub norm: ErrorNorm,
    /// Use this candidate instead of searching (calibrated offline).
    pub frozen_i: Option<usize>,
}

impl Default for QansConfig {
    fn default() -> Self {
        Self {
            k: 8,
            n: 20,
            norm: ErrorNorm::L1,
            frozen_i: None,
        }
    }
}

impl QansConfig {
    pub fn new(k: u32, n: usize, norm: ErrorNorm) -> Result<Self> {
        let cfg = Self {
            k,
            n,
            norm,
            frozen_i: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_bits(self.k, MIN_BITS, MAX_BITS)?;
        if self.n == 0 {
            return Err(Error::InvalidParam("N must be >= 1".into()));
        }
        if let Some(i) = self.frozen_i {
            self.check_candidate(i)?;
        }
        Ok(())
    }

    fn check_candidate(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.n {
            return Err(Error::InvalidParam(format!("candidate {i} outside 1..={}", self.n)));
        }
        Ok(())
    }

    /// Scale of candidate `i`: `i / 2^(k-1)`.
    pub fn scale(&self, i: usize) -> f64 {
        i as f64 / (1u64 << (self.k - 1)) as f64
    }

    pub fn params(&self, i: usize) -> Result<QuantParams> {
        self.check_candidate(i)?;
        QuantParams::new(self.k, self.scale(i))
    }
}

fn check_rows(x: &Tensor) -> Result<()> {
    if x.row_len() == 0 {
        return Err(Error::Empty("softmax axis"));
    }
    Ok(())
}

/// Subtracts each row's maximum.
pub fn stabilize(logits: &Tensor) -> Result<Tensor> {
    check_rows(logits)?;
    let mut data = Vec::with_capacity(logits.len());
    for row in logits.rows() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        data.extend(row.iter().map(|&v| v - m));
    }
    Ok(Tensor::from_parts_unchecked(logits.shape().to_vec(), data))
}

/// Row-wise softmax, computed on the stabilized row.
pub fn softmax(x: &Tensor) -> Result<Tensor> {
    check_rows(x)?;
    let mut data = Vec::with_capacity(x.len());
    for row in x.rows() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = data.len();
        data.extend(row.iter().map(|&v| (v - m).exp()));
        let sum: f64 = data[start..].iter().sum();
        data[start..].iter_mut().for_each(|v| *v /= sum);
    }
    Ok(Tensor::from_parts_unchecked(x.shape().to_vec(), data))
}

/// `s_i * clamp(round(x_s / s_i), -2^(k-1), 2^(k-1) - 1)`, which lies in `[-i, 0]`.
pub fn quantize_stabilized(x_s: &Tensor, i: usize, cfg: &QansConfig) -> Result<Tensor> {
    if let Some(&v) = x_s.data().iter().find(|&&v| v > 0.0) {
        return Err(Error::PositiveInput(v));
    }
    Ok(fake_quantize(x_s, &cfg.params(i)?))
}

/// Mean over rows of the per-row distance between two distributions.
pub fn distribution_error(a: &Tensor, b: &Tensor, norm: ErrorNorm) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            expected: a.shape().to_vec(),
            actual: b.shape().to_vec(),
        });
    }
    check_rows(a)?;
    let rows = a.len() / a.row_len();
    let total: f64 = a
        .rows()
        .zip(b.rows())
        .map(|(ra, rb)| {
            let d = ra.iter().zip(rb).map(|(x, y)| x - y);
            match norm {
                ErrorNorm::L1 => d.map(f64::abs).sum::<f64>(),
                ErrorNorm::L2 => d.map(|v| v * v).sum::<f64>().sqrt(),
            }
        })
        .sum();
    Ok(total / rows as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QansResult {
    pub selected_i: usize,
    pub selected_scale: f64,
    /// Error of candidate `i` at index `i - 1`.
    pub per_candidate_error: Vec<f64>,
    pub p_q: Tensor,
    pub p_f: Tensor,
}

/// Index (1-based) of the smallest error, first on ties.
pub fn argmin_candidate(errors: &[f64]) -> usize {
    let mut best = 0;
    for (j, &e) in errors.iter().enumerate() {
        if e < errors[best] {
            best = j;
        }
    }
    best + 1
}

fn candidate_softmax(x_s: &Tensor, i: usize, cfg: &QansConfig) -> Result<Tensor> {
    softmax(&quantize_stabilized(x_s, i, cfg)?)
}

/// Softmax with the per-tensor truncation search. With `cfg.frozen_i` set,
/// that candidate is used as-is; the error trace is still reported.
pub fn qans_softmax(logits: &Tensor, cfg: &QansConfig) -> Result<QansResult> {
    cfg.validate()?;
    let x_s = stabilize(logits)?;
    let p_f = softmax(&x_s)?;
    let errors = (1..=cfg.n)
        .into_par_iter()
        .map(|i| distribution_error(&p_f, &candidate_softmax(&x_s, i, cfg)?, cfg.norm))
        .collect::<Result<Vec<f64>>>()?;
    let selected_i = cfg.frozen_i.unwrap_or_else(|| argmin_candidate(&errors));
    Ok(QansResult {
        selected_i,
        selected_scale: cfg.scale(selected_i),
        per_candidate_error: errors,
        p_q: candidate_softmax(&x_s, selected_i, cfg)?,
        p_f,
    })
}

/// Picks the candidate with the smallest error summed over calibration
/// batches, for later use through `QansConfig::frozen_i`.
pub fn calibrate_candidate(batches: &[Tensor], cfg: &QansConfig) -> Result<usize> {
    if batches.is_empty() {
        return Err(Error::Empty("calibration batches"));
    }
    let online = QansConfig {
        frozen_i: None,
        ..cfg.clone()
    };
    let mut total = vec![0.0; cfg.n];
    for b in batches {
        let r = qans_softmax(b, &online)?;
        total.iter_mut().zip(&r.per_candidate_error).for_each(|(t, e)| *t += e);
    }
    Ok(argmin_candidate(&total))
}

/// Quantizes the raw logits with one scale, then applies softmax.
pub fn naive_quant_softmax(logits: &Tensor, p: &QuantParams) -> Result<Tensor> {
    softmax(&fake_quantize(logits, p))
}

/// Fixed-point position of the integer softmax output.
pub const PROB_FRAC_BITS: u32 = 30;

/// Fully-integer softmax on stabilized, quantized logits: exponentials from
/// the table pair, `u64` row sums, one division per row into a reciprocal,
/// then `Q30` probabilities.
pub fn integer_softmax_via_dulut(logits_q: &IntTensor, pair: &DulutPair) -> Result<Tensor> {
    let n = logits_q.row_len();
    if n == 0 {
        return Err(Error::Empty("softmax axis"));
    }
    let i_bit = pair.i_bit();
    let needed = i_bit + (n as u64).next_power_of_two().trailing_zeros() + pair.table2().t_bit();
    if needed > 64 {
        return Err(Error::AccumulatorOverflow {
            needed,
            available: 64,
        });
    }
    let mut out = Vec::with_capacity(logits_q.len());
    let mut exps = Vec::with_capacity(n);
    for row in logits_q.rows() {
        exps.clear();
        for &c in row {
            let e = dulut_eval(c, pair)?;
            if e < 0 {
                return Err(Error::InvalidParam(format!(
                    "exponential table produced negative code {e}"
                )));
            }
            exps.push(e as u64);
        }
        let sum = exps
            .iter()
            .try_fold(0u64, |acc, &e| acc.checked_add(e))
            .ok_or(Error::AccumulatorOverflow {
                needed: 65,
                available: 64,
            })?;
        if sum == 0 {
            return Err(Error::InvalidParam("row of zero exponentials".into()));
        }
        let inv = (1u128 << (2 * PROB_FRAC_BITS + 2)) / u128::from(sum);
        let shift = PROB_FRAC_BITS + 2;
        let unit = (1u64 << PROB_FRAC_BITS) as f64;
        out.extend(exps.iter().map(|&e| {
            let p = (u128::from(e) * inv + (1u128 << (shift - 1))) >> shift;
            p as f64 / unit
        }));
    }
    Ok(Tensor::from_parts_unchecked(logits_q.shape().to_vec(), out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn t(rows: usize, data: Vec<f64>) -> Tensor {
        let cols = data.len() / rows;
        Tensor::new(vec![rows, cols], data).unwrap()
    }

    #[test]
    fn stabilize_examples() {
        assert_eq!(stabilize(&t(1, vec![0.0; 3])).unwrap().data(), &[0.0; 3]);
        assert_eq!(stabilize(&t(1, vec![500.0, -500.0])).unwrap().data(), &[0.0, -1000.0]);
        let s = stabilize(&t(2, vec![1.0, 3.0, -2.0, -7.0])).unwrap();
        assert_eq!(s.data(), &[-2.0, 0.0, 0.0, -5.0]);
        assert!(stabilize(&Tensor::new(vec![2, 0], vec![]).unwrap()).is_err());
    }

    #[test]
    fn quantize_stabilized_examples() {
        let cfg = QansConfig::default();
        assert_eq!(cfg.scale(20), 0.15625);
        let x = t(1, vec![0.0, -1000.0, -0.07]);
        assert_eq!(quantize_stabilized(&x, 20, &cfg).unwrap().data(), &[0.0, -20.0, 0.0]);
        assert_eq!(
            quantize_stabilized(&t(1, vec![0.5]), 3, &cfg),
            Err(Error::PositiveInput(0.5))
        );
        assert!(quantize_stabilized(&x, 21, &cfg).is_err());
    }

    #[test]
    fn equal_logits_pick_first_candidate() {
        let r = qans_softmax(&t(2, vec![3.0; 8]), &QansConfig::default()).unwrap();
        assert_eq!(r.selected_i, 1);
        assert!(r.per_candidate_error.iter().all(|&e| e == 0.0));
        assert_eq!(r.p_q.data(), &[0.25; 8]);
    }

    #[test]
    fn argmin_is_first_minimum() {
        assert_eq!(argmin_candidate(&[3.0, 1.0, 1.0, 2.0]), 2);
        assert_eq!(argmin_candidate(&[0.0]), 1);
    }

    #[test]
    fn frozen_candidate_is_used() {
        let cfg = QansConfig {
            frozen_i: Some(4),
            ..QansConfig::default()
        };
        let r = qans_softmax(&t(1, vec![0.0, -1.0, -9.0]), &cfg).unwrap();
        assert_eq!(r.selected_i, 4);
        assert_eq!(r.selected_scale, 4.0 / 128.0);
        let bad = QansConfig {
            frozen_i: Some(21),
            ..QansConfig::default()
        };
        assert!(qans_softmax(&t(1, vec![0.0]), &bad).is_err());
    }

    #[test]
    fn naive_small_range_matches_float() {
        let x = t(1, vec![-1.0, -0.3, 0.2, 0.9, 1.0]);
        let p = QuantParams::new(16, 1e-4).unwrap();
        let err = distribution_error(&softmax(&x).unwrap(), &naive_quant_softmax(&x, &p).unwrap(), ErrorNorm::L1)
            .unwrap();
        assert!(err < 1e-3);
        let flat = naive_quant_softmax(&t(1, vec![7.0; 4]), &QuantParams::new(8, 5.0).unwrap()).unwrap();
        assert_eq!(flat.data(), &[0.25; 4]);
    }

    #[test]
    fn l2_norm() {
        let a = t(1, vec![1.0, 0.0]);
        let b = t(1, vec![0.0, 1.0]);
        assert_relative_eq!(distribution_error(&a, &b, ErrorNorm::L2).unwrap(), 2f64.sqrt());
        assert_eq!(distribution_error(&a, &b, ErrorNorm::L1).unwrap(), 2.0);
    }
}
