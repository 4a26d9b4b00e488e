//! Index-mapper allocations and their realization as a table pair.
//!
//! The mapper is described by how many table2 input codes ("u-width") each
//! table1 segment receives. Giving a segment more u-width stretches it across
//! more table2 knots, so table2 samples that part of the input more densely.

use super::grid::CodeGrid;
use crate::error::{Error, Result};
use crate::func::FunctionSpec;
use crate::lut::LutTable;

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub t1_bit: u32,
    pub t2_bit: u32,
    /// Input codes per table1 segment.
    pub sh1: i64,
    /// Input codes per table2 segment.
    pub sh2: i64,
}

impl Layout {
    pub fn new(i_bit: u32, m1: usize, m2: usize) -> Self {
        let t1_bit = m1.trailing_zeros();
        let t2_bit = m2.trailing_zeros();
        Self {
            t1_bit,
            t2_bit,
            sh1: 1 << (i_bit - t1_bit),
            sh2: 1 << (i_bit - t2_bit),
        }
    }

    pub fn m1(&self) -> usize {
        1 << self.t1_bit
    }

    /// The uniform allocation, which realizes the identity mapper.
    pub fn uniform(&self) -> Vec<i64> {
        vec![self.sh1; self.m1()]
    }
}

/// Unsigned mapper knots `U_k` from an allocation.
pub(crate) fn knots_from_alloc(alloc: &[i64]) -> Vec<i64> {
    let mut u = Vec::with_capacity(alloc.len() + 1);
    u.push(0);
    let mut acc = 0;
    for &a in alloc {
        acc += a;
        u.push(acc);
    }
    u
}

/// Real-valued preimage (unsigned input-code units) of a table2 knot `u`
/// under the piecewise-linear mapper with knots `(k * sh1, big_u[k])`.
/// A flat run of mapper knots sitting exactly on `u` maps to its centre.
pub(crate) fn preimage(big_u: &[i64], sh1: i64, u: i64) -> f64 {
    let m1 = big_u.len() - 1;
    let hits: Vec<usize> = (0..=m1).filter(|&k| big_u[k] == u).collect();
    if hits.len() >= 2 {
        let sum: f64 = hits.iter().map(|&k| (k as i64 * sh1) as f64).sum();
        return sum / hits.len() as f64;
    }
    let k = big_u.partition_point(|&v| v <= u).saturating_sub(1).min(m1 - 1);
    let a = big_u[k + 1] - big_u[k];
    if a == 0 {
        return (k as i64 * sh1) as f64;
    }
    (k as i64 * sh1) as f64 + (u - big_u[k]) as f64 * sh1 as f64 / a as f64
}

/// Builds table1 from the allocation and table2 from `f` sampled at the
/// preimage of each table2 knot.
pub(crate) fn realize(
    f: &FunctionSpec,
    grid: &CodeGrid,
    layout: &Layout,
    alloc: &[i64],
) -> Result<(LutTable, LutTable)> {
    let half = i64::from(grid.half());
    let big_u = knots_from_alloc(alloc);
    if big_u.last() != Some(&(2 * half)) || alloc.iter().any(|&a| a < 0) {
        return Err(Error::InvariantViolation(format!(
            "allocation {alloc:?} does not cover the code range"
        )));
    }
    let t1: Vec<i32> = big_u.iter().map(|&u| (u - half) as i32).collect();
    if t1.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvariantViolation("index mapper is not monotone".into()));
    }
    let m2 = 1i64 << layout.t2_bit;
    let t2: Vec<i32> = (0..=m2)
        .map(|j| {
            let x = preimage(&big_u, layout.sh1, j * layout.sh2);
            let real = (x - half as f64) * grid.in_scale;
            grid.knot_value(f.eval(f.clamp_to_domain(real)))
        })
        .collect();
    Ok((
        LutTable::new(layout.t1_bit, grid.i_bit, t1)?,
        LutTable::new(layout.t2_bit, grid.i_bit, t2)?,
    ))
}

/// Mapper outputs and composite outputs of a realized pair on every code.
pub(crate) struct Evaluation {
    pub mapped: Vec<i32>,
    pub are: Vec<f64>,
}

impl Evaluation {
    pub fn new(grid: &CodeGrid, layout: &Layout, t1: &LutTable, t2: &LutTable) -> Self {
        let mapped = grid.eval_table(t1);
        let outputs = mapped
            .iter()
            .map(|&g| crate::lut::kernel_fast(g, t2))
            .collect::<Vec<_>>();
        let are = grid.block_are(&outputs, layout.sh1 as usize);
        Self { mapped, are }
    }
}

/// `(max, mean)` of a per-segment score.
pub(crate) fn objective(scores: &[f64]) -> (f64, f64) {
    let max = scores.iter().fold(0.0f64, |m, &v| m.max(v));
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    (max, mean)
}

pub(crate) fn lex_less(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Segment indices ordered by score, ties by index.
pub(crate) fn order_by(scores: &[f64], descending: bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        let c = scores[a].total_cmp(&scores[b]);
        if descending {
            c.reverse()
        } else {
            c
        }
    });
    idx
}
