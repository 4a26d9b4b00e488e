use rayon::prelude::*;

use super::{DulutPair, LutTable};
use crate::error::{Error, Result};
use crate::tensor::IntTensor;

/// Evaluates one signed input code through the interpolating kernel.
///
/// The code is offset to unsigned, split into a segment index and an
/// interpolation position, blended between the two bracketing knots and
/// rounded with add-half-then-shift. All arithmetic is exact in `i64`.
pub fn lut_eval(i_q: i32, table: &LutTable) -> Result<i32> {
    let (lo, hi) = (table.code_min(), table.code_max());
    if i_q < lo || i_q > hi {
        return Err(Error::CodeOutOfRange {
            code: i_q.into(),
            lo: lo.into(),
            hi: hi.into(),
        });
    }
    Ok(eval_unchecked(i_q, table))
}

#[inline]
pub(crate) fn eval_unchecked(i_q: i32, table: &LutTable) -> i32 {
    let shift_bit = table.shift_bit();
    let x = i64::from(i_q) + (1i64 << (table.i_bit - 1));
    let idx = (x >> shift_bit) as usize;
    let out = if shift_bit == 0 {
        i64::from(table.entries[idx])
    } else {
        let shift_num = 1i64 << shift_bit;
        let p = x & (shift_num - 1);
        let s = (shift_num - p) * i64::from(table.entries[idx])
            + p * i64::from(table.entries[idx + 1]);
        (s + (1i64 << (shift_bit - 1))) >> shift_bit
    };
    out.clamp(table.code_min().into(), table.code_max().into()) as i32
}

/// Element-wise [`lut_eval`]. The whole batch is range-checked first so an
/// error never leaves a partial result.
pub fn lut_eval_batch(q: &IntTensor, table: &LutTable) -> Result<IntTensor> {
    if let Some(&bad) = q
        .data()
        .iter()
        .find(|&&c| c < table.code_min() || c > table.code_max())
    {
        return lut_eval(bad, table).map(|_| unreachable!());
    }
    let out = q.data().par_iter().map(|&c| eval_unchecked(c, table)).collect();
    Ok(IntTensor::from_parts_unchecked(q.shape().to_vec(), out))
}

/// `lut_eval(lut_eval(i_q, table1), table2)`.
pub fn dulut_eval(i_q: i32, pair: &DulutPair) -> Result<i32> {
    let idx = lut_eval(i_q, pair.table1())?;
    lut_eval(idx, pair.table2())
}

/// Anything that maps signed input codes to output codes.
pub trait CodeMap {
    /// Inclusive range of accepted input codes.
    fn input_range(&self) -> (i32, i32);
    fn eval_code(&self, code: i32) -> Result<i32>;
}

impl CodeMap for LutTable {
    fn input_range(&self) -> (i32, i32) {
        (self.code_min(), self.code_max())
    }

    fn eval_code(&self, code: i32) -> Result<i32> {
        lut_eval(code, self)
    }
}

impl CodeMap for DulutPair {
    fn input_range(&self) -> (i32, i32) {
        self.table1().input_range()
    }

    fn eval_code(&self, code: i32) -> Result<i32> {
        dulut_eval(code, self)
    }
}

/// Number of adjacent code pairs in `[lo, hi]` whose outputs coincide.
pub fn count_collisions<M: CodeMap + ?Sized>(map: &M, lo: i32, hi: i32) -> Result<usize> {
    if lo > hi {
        return Err(Error::Empty("collision segment"));
    }
    let mut prev = map.eval_code(lo)?;
    let mut hits = 0;
    for c in lo + 1..=hi {
        let cur = map.eval_code(c)?;
        if cur == prev {
            hits += 1;
        }
        prev = cur;
    }
    Ok(hits)
}
