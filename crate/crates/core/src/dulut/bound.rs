//! Linear-interpolation error bound `(h^2 / 8) * max|f''| + eps_hw`.

use serde::{Deserialize, Serialize};

use super::alloc::preimage;
use super::grid::ErrorProfile;
use crate::error::{Error, Result};
use crate::func::FunctionSpec;
use crate::lut::{DulutPair, LutTable};

const CURVATURE_SAMPLES: usize = 257;

fn max_abs_f2(f: &FunctionSpec, lo: f64, hi: f64, clamp: bool) -> Result<f64> {
    let mut m = 0.0f64;
    for i in 0..CURVATURE_SAMPLES {
        let mut x = lo + (hi - lo) * i as f64 / (CURVATURE_SAMPLES - 1) as f64;
        if clamp {
            x = f.clamp_to_domain(x);
        }
        let v = f.second_derivative(x).abs();
        if !v.is_finite() {
            return Err(Error::NonFinite("second derivative"));
        }
        m = m.max(v);
    }
    Ok(m)
}

/// Upper bound on the error of linearly interpolating `f` between the two
/// ends of `[lo, hi]`, plus a hardware rounding allowance.
pub fn interp_error_bound(f: &FunctionSpec, lo: f64, hi: f64, eps_hw: f64) -> Result<f64> {
    if !(hi > lo) {
        return Err(Error::InvalidParam(format!("segment [{lo}, {hi}] has no width")));
    }
    let h = hi - lo;
    Ok(h * h / 8.0 * max_abs_f2(f, lo, hi, false)? + eps_hw)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentDiagnostic {
    pub index: usize,
    pub lo_code: i32,
    pub hi_code: i32,
    pub are: f64,
    /// Largest measured absolute error over in-domain codes (0 if none).
    pub max_abs_error: f64,
    pub bound_eq4: f64,
}

/// Measured error and interpolation bound for each table1 segment.
///
/// The composite interpolates `f` exactly at the input-space preimages of
/// table2's knots, so those preimages delimit the interpolation pieces; `h`
/// is the widest piece overlapping the segment and `max|f''|` is taken over
/// all of them. `eps_hw` is one output quantization step.
pub fn segment_diagnostics(
    f: &FunctionSpec,
    pair: &DulutPair,
    are_epsilon: Option<f64>,
) -> Result<Vec<SegmentDiagnostic>> {
    let t1 = pair.table1();
    let t2 = pair.table2();
    let profile = ErrorProfile::measure(f, pair, pair.in_scale(), pair.out_scale(), are_epsilon)?;
    let half = -i64::from(t1.code_min());
    let sh1 = t1.shift_num();
    let sh2 = t2.shift_num();
    let big_u: Vec<i64> = t1.entries().iter().map(|&e| i64::from(e) + half).collect();

    let mut knots: Vec<f64> = (0..=t2.segments() as i64)
        .map(|j| preimage(&big_u, sh1, j * sh2))
        .collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();

    let to_real = |x: f64| (x - half as f64) * pair.in_scale();
    let mut out = Vec::with_capacity(t1.segments());
    for k in 0..t1.segments() {
        let (lo_code, hi_code) = t1.segment_codes(k);
        let (lo, hi) = ((k as i64 * sh1) as f64, ((k as i64 + 1) * sh1) as f64);
        let i0 = knots.partition_point(|&x| x <= lo).saturating_sub(1);
        let i1 = knots.partition_point(|&x| x < hi).min(knots.len() - 1);
        let pieces = &knots[i0..=i1];
        let h = pieces
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
            * pair.in_scale();
        let f2 = max_abs_f2(f, to_real(pieces[0]), to_real(pieces[pieces.len() - 1]), true)?;
        let bound = h * h / 8.0 * f2 + pair.out_scale();

        let range = k * sh1 as usize..(k + 1) * sh1 as usize;
        let (mut sum, mut cnt, mut worst) = (0.0, 0usize, 0.0f64);
        for u in range.filter(|&u| profile.in_domain[u]) {
            sum += profile.rel_err[u];
            cnt += 1;
            worst = worst.max(profile.abs_err[u]);
        }
        out.push(SegmentDiagnostic {
            index: k,
            lo_code,
            hi_code,
            are: if cnt == 0 { 0.0 } else { sum / cnt as f64 },
            max_abs_error: worst,
            bound_eq4: bound,
        });
    }
    Ok(out)
}

/// [`segment_diagnostics`] for a single table, viewed as a pair behind an
/// identity mapper with the same segmentation.
pub fn table_diagnostics(
    f: &FunctionSpec,
    table: &LutTable,
    in_scale: f64,
    out_scale: f64,
) -> Result<Vec<SegmentDiagnostic>> {
    let id = LutTable::identity(table.t_bit(), table.i_bit())?;
    let pair = DulutPair::new(id, table.clone(), in_scale, out_scale)?;
    segment_diagnostics(f, &pair, None)
}
