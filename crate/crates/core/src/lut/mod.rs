//! Fixed-point interpolating lookup tables and their two-table cascade.

mod format;
mod kernel;

pub use format::{decode_pair, decode_table, encode_pair, encode_table};
pub(crate) use kernel::eval_unchecked as kernel_fast;
pub use kernel::{count_collisions, dulut_eval, lut_eval, lut_eval_batch, CodeMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quant::check_bits;

pub const MIN_T_BIT: u32 = 2;
pub const MAX_T_BIT: u32 = 12;
pub const MIN_I_BIT: u32 = 4;
pub const MAX_I_BIT: u32 = 16;

/// A table of `2^t_bit + 1` knots over the signed `i_bit` input range.
///
/// Entries share the input's signed range, widened by one code at the top
/// (`[-2^(i-1), 2^(i-1)]`) so a knot may sit exactly on the upper end of the
/// range. Kernel outputs are still clipped to `[q_min, q_max]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTable")]
pub struct LutTable {
    t_bit: u32,
    i_bit: u32,
    entries: Vec<i32>,
}

#[derive(Deserialize)]
struct RawTable {
    t_bit: u32,
    i_bit: u32,
    entries: Vec<i32>,
}

impl TryFrom<RawTable> for LutTable {
    type Error = Error;

    fn try_from(raw: RawTable) -> Result<Self> {
        LutTable::new(raw.t_bit, raw.i_bit, raw.entries)
    }
}

impl LutTable {
    pub fn new(t_bit: u32, i_bit: u32, entries: Vec<i32>) -> Result<Self> {
        check_bits(i_bit, MIN_I_BIT, MAX_I_BIT)?;
        check_bits(t_bit, MIN_T_BIT, MAX_T_BIT.min(i_bit))?;
        let want = (1usize << t_bit) + 1;
        if entries.len() != want {
            return Err(Error::ShapeMismatch {
                expected: vec![want],
                actual: vec![entries.len()],
            });
        }
        let (lo, hi) = (-(1i32 << (i_bit - 1)), 1i32 << (i_bit - 1));
        if let Some((slot, &value)) = entries.iter().enumerate().find(|(_, &e)| e < lo || e > hi) {
            return Err(Error::EntryOutOfRange {
                slot,
                value: value.into(),
                lo: lo.into(),
                hi: hi.into(),
            });
        }
        Ok(Self {
            t_bit,
            i_bit,
            entries,
        })
    }

    /// Table whose kernel output equals its input on every code.
    pub fn identity(t_bit: u32, i_bit: u32) -> Result<Self> {
        check_bits(i_bit, MIN_I_BIT, MAX_I_BIT)?;
        check_bits(t_bit, MIN_T_BIT, MAX_T_BIT.min(i_bit))?;
        let step = 1i32 << (i_bit - t_bit);
        let half = 1i32 << (i_bit - 1);
        let entries = (0..=(1i32 << t_bit)).map(|j| j * step - half).collect();
        Self::new(t_bit, i_bit, entries)
    }

    pub fn t_bit(&self) -> u32 {
        self.t_bit
    }

    pub fn i_bit(&self) -> u32 {
        self.i_bit
    }

    pub fn entries(&self) -> &[i32] {
        &self.entries
    }

    pub fn segments(&self) -> usize {
        1 << self.t_bit
    }

    pub fn shift_bit(&self) -> u32 {
        self.i_bit - self.t_bit
    }

    /// Interpolation positions per segment.
    pub fn shift_num(&self) -> i64 {
        1 << self.shift_bit()
    }

    pub fn code_min(&self) -> i32 {
        -(1 << (self.i_bit - 1))
    }

    pub fn code_max(&self) -> i32 {
        (1 << (self.i_bit - 1)) - 1
    }

    pub fn entry_min(&self) -> i32 {
        self.code_min()
    }

    pub fn entry_max(&self) -> i32 {
        1 << (self.i_bit - 1)
    }

    pub fn is_monotone(&self) -> bool {
        self.entries.windows(2).all(|w| w[0] <= w[1])
    }

    /// Inclusive code range covered by segment `k`.
    pub fn segment_codes(&self, k: usize) -> (i32, i32) {
        let sn = self.shift_num() as i32;
        let lo = self.code_min() + k as i32 * sn;
        (lo, lo + sn - 1)
    }
}

/// Index-mapper table cascaded into a value table, with the real scales of
/// the input and output codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPair")]
pub struct DulutPair {
    table1: LutTable,
    table2: LutTable,
    in_scale: f64,
    out_scale: f64,
}

#[derive(Deserialize)]
struct RawPair {
    table1: LutTable,
    table2: LutTable,
    in_scale: f64,
    out_scale: f64,
}

impl TryFrom<RawPair> for DulutPair {
    type Error = Error;

    fn try_from(raw: RawPair) -> Result<Self> {
        DulutPair::new(raw.table1, raw.table2, raw.in_scale, raw.out_scale)
    }
}

impl DulutPair {
    pub fn new(table1: LutTable, table2: LutTable, in_scale: f64, out_scale: f64) -> Result<Self> {
        if table1.i_bit != table2.i_bit {
            return Err(Error::InvalidParam(format!(
                "table1 emits {}-bit codes but table2 expects {}-bit input",
                table1.i_bit, table2.i_bit
            )));
        }
        if !table1.is_monotone() {
            return Err(Error::InvariantViolation(
                "index mapper entries are not monotone".into(),
            ));
        }
        for (name, s) in [("in_scale", in_scale), ("out_scale", out_scale)] {
            if !s.is_finite() || s <= 0.0 {
                return Err(Error::InvalidParam(format!("{name} must be positive, got {s}")));
            }
        }
        Ok(Self {
            table1,
            table2,
            in_scale,
            out_scale,
        })
    }

    pub fn table1(&self) -> &LutTable {
        &self.table1
    }

    pub fn table2(&self) -> &LutTable {
        &self.table2
    }

    pub fn in_scale(&self) -> f64 {
        self.in_scale
    }

    pub fn out_scale(&self) -> f64 {
        self.out_scale
    }

    pub fn i_bit(&self) -> u32 {
        self.table1.i_bit
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_entries() {
        let t = LutTable::identity(3, 4).unwrap();
        assert_eq!(t.entries(), &[-8, -6, -4, -2, 0, 2, 4, 6, 8]);
        assert_eq!(t.shift_num(), 2);
        assert_eq!(t.segment_codes(0), (-8, -7));
        assert_eq!(t.segment_codes(7), (6, 7));
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(matches!(
            LutTable::new(3, 4, vec![0; 8]),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            LutTable::new(5, 4, vec![0; 33]),
            Err(Error::BitWidth { .. })
        ));
        assert!(matches!(
            LutTable::new(2, 4, vec![0, 0, 9, 0, 0]),
            Err(Error::EntryOutOfRange { slot: 2, .. })
        ));
        assert!(LutTable::new(2, 4, vec![-8, 0, 0, 0, 8]).is_ok());
    }

    #[test]
    fn table_json_shape() {
        let t = LutTable::identity(2, 4).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(s, r#"{"t_bit":2,"i_bit":4,"entries":[-8,-4,0,4,8]}"#);
        let bad = r#"{"t_bit":2,"i_bit":4,"entries":[-8,-4,0,4]}"#;
        assert!(serde_json::from_str::<LutTable>(bad).is_err());
    }

    #[test]
    fn pair_requires_monotone_mapper() {
        let t2 = LutTable::identity(2, 4).unwrap();
        let t1 = LutTable::new(2, 4, vec![-8, 0, -4, 4, 8]).unwrap();
        assert!(matches!(
            DulutPair::new(t1, t2.clone(), 1.0, 1.0),
            Err(Error::InvariantViolation(_))
        ));
        let other = LutTable::identity(2, 5).unwrap();
        assert!(DulutPair::new(other, t2, 1.0, 1.0).is_err());
    }
}
