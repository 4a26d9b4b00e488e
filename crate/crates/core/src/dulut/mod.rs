//! Cascaded-LUT construction.
//!
//! [`build_dulut`] adapts table1 (the index mapper) so that table2's fixed
//! number of knots is spent where the target function bends, one move at a
//! time: the segment with the smallest average relative error (ARE) gives up
//! a quantum of table2 codes and the segment with the largest receives it.

mod alloc;
mod bound;
mod grid;

pub use bound::{interp_error_bound, segment_diagnostics, table_diagnostics, SegmentDiagnostic};
pub use grid::{input_scale, output_params, ErrorProfile};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::func::FunctionSpec;
use crate::lut::{DulutPair, LutTable, MAX_I_BIT, MAX_T_BIT, MIN_I_BIT, MIN_T_BIT};
use crate::quant::check_bits;
use alloc::{lex_less, objective, order_by, realize, Evaluation, Layout};
use grid::CodeGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    /// Input bit-width.
    pub b: u32,
    /// Integer points per segment the hardware can resolve; defaults to the
    /// interpolation positions of the coarser table.
    pub k_hw: Option<u32>,
    pub m1: usize,
    pub m2: usize,
    pub delta: f64,
    pub max_iters: usize,
    /// Guard added to `|f|` in relative errors; defaults to 1e-6 of the
    /// output range.
    pub are_epsilon: Option<f64>,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            b: 8,
            k_hw: None,
            m1: 32,
            m2: 32,
            delta: 1e-3,
            max_iters: 1024,
            are_epsilon: None,
        }
    }
}

impl BuildConfig {
    pub fn with_sizes(m1: usize, m2: usize) -> Self {
        Self {
            m1,
            m2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_bits(self.b, MIN_I_BIT, MAX_I_BIT)?;
        let codes = 1usize << self.b;
        for (name, m) in [("m1", self.m1), ("m2", self.m2)] {
            if !m.is_power_of_two()
                || m < 1 << MIN_T_BIT
                || m > (1 << MAX_T_BIT).min(codes)
            {
                return Err(Error::InvalidParam(format!(
                    "{name} = {m} must be a power of two in [{}, {}]",
                    1 << MIN_T_BIT,
                    (1usize << MAX_T_BIT).min(codes)
                )));
            }
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidParam(format!("delta must be > 0, got {}", self.delta)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParam("max_iters must be >= 1".into()));
        }
        let k_hw = self.k_hw() as usize;
        if k_hw == 0 {
            return Err(Error::InvalidParam("k_hw must be >= 1".into()));
        }
        if self.m1 * k_hw < codes || self.m2 * k_hw < codes {
            return Err(Error::Infeasible(format!(
                "{} + {} entries at {k_hw} points per segment cannot cover {codes} codes",
                self.m1, self.m2
            )));
        }
        Ok(())
    }

    pub fn k_hw(&self) -> u32 {
        self.k_hw
            .unwrap_or_else(|| (1u32 << self.b) / self.m1.min(self.m2).max(1) as u32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    /// Segment that gave up table2 codes.
    pub merged_segment: usize,
    /// Segment that received them.
    pub split_segment: usize,
    pub global_max_are: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub per_segment_are: Vec<f64>,
    pub global_max_are: f64,
    pub global_mean_are: f64,
    pub iterations_used: usize,
    pub history: Vec<HistoryEntry>,
}

impl ErrorReport {
    fn new(are: Vec<f64>, history: Vec<HistoryEntry>) -> Self {
        let (max, mean) = objective(&are);
        Self {
            per_segment_are: are,
            global_max_are: max,
            global_mean_are: mean,
            iterations_used: history.len(),
            history,
        }
    }
}

/// Uniform single table: knot `j` holds the quantized value of `f` at the
/// input code on segment boundary `j`. Returns the table and its output scale.
pub fn build_linear_lut(
    f: &FunctionSpec,
    i_bit: u32,
    t_bit: u32,
    in_scale: f64,
) -> Result<(LutTable, f64)> {
    check_bits(i_bit, MIN_I_BIT, MAX_I_BIT)?;
    check_bits(t_bit, MIN_T_BIT, MAX_T_BIT.min(i_bit))?;
    f.check_resolution(i_bit)?;
    let grid = CodeGrid::new(f, i_bit, in_scale, None)?;
    let step = 1i64 << (i_bit - t_bit);
    let half = i64::from(grid.half());
    let entries = (0..=(1i64 << t_bit))
        .map(|j| {
            let x = (j * step - half) as f64 * in_scale;
            grid.knot_value(f.eval(f.clamp_to_domain(x)))
        })
        .collect();
    Ok((LutTable::new(t_bit, i_bit, entries)?, grid.out.scale()))
}

struct Setup {
    grid: CodeGrid,
    layout: Layout,
}

impl Setup {
    fn new(f: &FunctionSpec, cfg: &BuildConfig, in_scale: f64) -> Result<Self> {
        cfg.validate()?;
        f.check_resolution(cfg.b)?;
        Ok(Self {
            grid: CodeGrid::new(f, cfg.b, in_scale, cfg.are_epsilon)?,
            layout: Layout::new(cfg.b, cfg.m1, cfg.m2),
        })
    }

    fn evaluate(&self, f: &FunctionSpec, alloc: &[i64]) -> Result<(LutTable, LutTable, Evaluation)> {
        let (t1, t2) = realize(f, &self.grid, &self.layout, alloc)?;
        let ev = Evaluation::new(&self.grid, &self.layout, &t1, &t2);
        Ok((t1, t2, ev))
    }

    fn finish(self, t1: LutTable, t2: LutTable, report: ErrorReport) -> Result<(DulutPair, ErrorReport)> {
        let pair = DulutPair::new(t1, t2, self.grid.in_scale, self.grid.out.scale())?;
        Ok((pair, report))
    }
}

/// One greedy pass of the allocation search: walk receivers from the
/// worst-scored segment and donors from the best, returning the first move
/// the caller's `accept` admits.
fn first_move<T: Send>(
    alloc: &[i64],
    scores: &[f64],
    quantum: i64,
    accept: impl Fn(&[i64]) -> Option<T> + Sync,
) -> Option<(usize, usize, Vec<i64>, T)> {
    let donors = order_by(scores, false);
    for b in order_by(scores, true) {
        let hit = donors.par_iter().find_map_first(|&m| {
            if m == b || alloc[m] < quantum {
                return None;
            }
            let mut next = alloc.to_vec();
            next[m] -= quantum;
            next[b] += quantum;
            accept(&next).map(|t| (m, next, t))
        });
        if let Some((m, next, t)) = hit {
            return Some((m, b, next, t));
        }
    }
    None
}

/// Builds a table pair for `f` by iterative re-allocation of table1.
///
/// A move is accepted when it lowers `(global max ARE, global mean ARE)`
/// lexicographically and keeps the mapper from merging adjacent codes whose
/// correctly rounded outputs differ. The loop stops once the max ARE is at
/// most `delta`, no move is accepted, or `max_iters` moves were made.
pub fn build_dulut(
    f: &FunctionSpec,
    cfg: &BuildConfig,
    in_scale: f64,
) -> Result<(DulutPair, ErrorReport)> {
    let setup = Setup::new(f, cfg, in_scale)?;
    let quantum = setup.layout.sh1.min(setup.layout.sh2);
    let mut alloc = setup.layout.uniform();
    let (mut t1, mut t2, ev) = setup.evaluate(f, &alloc)?;
    let mut are = ev.are;
    let mut obj = objective(&are);
    let mut history = Vec::new();

    while history.len() < cfg.max_iters && obj.0 > cfg.delta {
        let step = first_move(&alloc, &are, quantum, |next| {
            let (n1, n2, ev) = setup.evaluate(f, next).ok()?;
            let o = objective(&ev.are);
            (setup.grid.resolution_ok(&ev.mapped) && lex_less(o, obj)).then_some((n1, n2, ev.are, o))
        });
        let Some((merged, split, next, (n1, n2, next_are, o))) = step else {
            break;
        };
        if o.0 > obj.0 {
            return Err(Error::InvariantViolation("max ARE increased".into()));
        }
        alloc = next;
        (t1, t2, are, obj) = (n1, n2, next_are, o);
        history.push(HistoryEntry {
            merged_segment: merged,
            split_segment: split,
            global_max_are: o.0,
        });
    }
    setup.finish(t1, t2, ErrorReport::new(are, history))
}

/// Baseline that re-allocates table1 by curvature alone: each segment is
/// scored by `(h^2 / 8) * max|f''|` for its table2 piece width `h`, with no
/// regard for the kernel's interpolation resolution. It reproduces the
/// collisions that the resolution constraint in [`build_dulut`] prevents.
pub fn curvature_only_merge(
    f: &FunctionSpec,
    cfg: &BuildConfig,
    in_scale: f64,
) -> Result<(DulutPair, ErrorReport)> {
    let setup = Setup::new(f, cfg, in_scale)?;
    let Layout { sh1, sh2, .. } = setup.layout;
    let half = setup.grid.half() as f64;
    let (lo, hi) = f.domain();
    // Curvature per table1 segment, sampled over its in-domain part.
    let curv: Vec<f64> = (0..setup.layout.m1())
        .map(|k| {
            let a = ((k as i64 * sh1) as f64 - half) * in_scale;
            let b = (((k as i64 + 1) * sh1) as f64 - half) * in_scale;
            let (a, b) = (a.max(lo), b.min(hi));
            if a > b {
                return 0.0;
            }
            (0..=64)
                .map(|i| f.second_derivative(a + (b - a) * i as f64 / 64.0).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let score = |alloc: &[i64]| -> Vec<f64> {
        alloc
            .iter()
            .zip(&curv)
            .map(|(&a, &c)| {
                if c == 0.0 {
                    0.0
                } else if a == 0 {
                    f64::INFINITY
                } else {
                    let w = (sh1 * sh2) as f64 / a as f64 * in_scale;
                    w * w / 8.0 * c
                }
            })
            .collect()
    };

    let mut alloc = setup.layout.uniform();
    let mut sc = score(&alloc);
    let mut obj = objective(&sc);
    let mut history = Vec::new();
    while history.len() < cfg.max_iters {
        let step = first_move(&alloc, &sc, 1, |next| {
            let s = score(next);
            let o = objective(&s);
            lex_less(o, obj).then_some((s, o))
        });
        let Some((merged, split, next, (s, o))) = step else {
            break;
        };
        let (_, _, ev) = setup.evaluate(f, &next)?;
        history.push(HistoryEntry {
            merged_segment: merged,
            split_segment: split,
            global_max_are: objective(&ev.are).0,
        });
        (alloc, sc, obj) = (next, s, o);
    }
    let (t1, t2, ev) = setup.evaluate(f, &alloc)?;
    setup.finish(t1, t2, ErrorReport::new(ev.are, history))
}

/// Per-segment ARE of an arbitrary pair, using its own table1 segments.
pub fn pair_report(f: &FunctionSpec, pair: &DulutPair, are_epsilon: Option<f64>) -> Result<ErrorReport> {
    let profile = ErrorProfile::measure(f, pair, pair.in_scale(), pair.out_scale(), are_epsilon)?;
    let width = pair.table1().shift_num() as usize;
    let are = profile
        .rel_err
        .chunks(width)
        .zip(profile.in_domain.chunks(width))
        .map(|(r, d)| {
            let (s, c) = r
                .iter()
                .zip(d)
                .filter(|(_, &d)| d)
                .fold((0.0, 0usize), |(s, c), (v, _)| (s + v, c + 1));
            if c == 0 {
                0.0
            } else {
                s / c as f64
            }
        })
        .collect();
    Ok(ErrorReport::new(are, Vec::new()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::func::FunctionKind;
    use crate::lut::{count_collisions, dulut_eval, lut_eval};

    fn spec(kind: FunctionKind) -> FunctionSpec {
        FunctionSpec::with_default_domain(kind).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(BuildConfig::default().validate().is_ok());
        let bad = BuildConfig::with_sizes(24, 32);
        assert!(matches!(bad.validate(), Err(Error::InvalidParam(_))));
        let infeasible = BuildConfig {
            k_hw: Some(4),
            ..BuildConfig::default()
        };
        assert!(matches!(infeasible.validate(), Err(Error::Infeasible(_))));
        let zero_delta = BuildConfig {
            delta: 0.0,
            ..BuildConfig::default()
        };
        assert!(zero_delta.validate().is_err());
    }

    #[test]
    fn linear_identity_reproduces_codes() {
        let f = spec(FunctionKind::Identity);
        let s = input_scale(&f, 8).unwrap();
        let (t, out_scale) = build_linear_lut(&f, 8, 5, s).unwrap();
        assert_eq!(out_scale, s);
        for c in -128..=127 {
            assert_eq!(lut_eval(c, &t).unwrap(), c);
        }
    }

    #[test]
    fn identity_converges_immediately() {
        let f = spec(FunctionKind::Identity);
        let s = input_scale(&f, 8).unwrap();
        let (pair, report) = build_dulut(&f, &BuildConfig::default(), s).unwrap();
        assert_eq!(report.iterations_used, 0);
        assert_eq!(report.global_max_are, 0.0);
        for c in -128..=127 {
            assert_eq!(dulut_eval(c, &pair).unwrap(), c);
        }
        let (curv, _) = curvature_only_merge(&f, &BuildConfig::default(), s).unwrap();
        assert_eq!(count_collisions(&curv, -128, 127).unwrap(), 0);
    }

    #[test]
    fn exp_mapper_is_monotone_and_budget_is_kept() {
        let f = spec(FunctionKind::Exp);
        let s = input_scale(&f, 8).unwrap();
        assert_eq!(s, 0.15625);
        let (pair, report) = build_dulut(&f, &BuildConfig::default(), s).unwrap();
        let e = pair.table1().entries();
        assert!(pair.table1().is_monotone());
        assert_eq!((e[0], e[e.len() - 1]), (-128, 128));
        assert!(report.iterations_used > 0);
        assert!(report
            .history
            .windows(2)
            .all(|w| w[1].global_max_are <= w[0].global_max_are));
        assert_eq!(report.per_segment_are.len(), 32);
    }

    #[test]
    fn pair_report_matches_builder() {
        let f = spec(FunctionKind::Gelu);
        let s = input_scale(&f, 8).unwrap();
        let (pair, report) = build_dulut(&f, &BuildConfig::with_sizes(16, 16), s).unwrap();
        let again = pair_report(&f, &pair, None).unwrap();
        assert_eq!(again.per_segment_are, report.per_segment_are);
    }

    #[test]
    fn custom_needs_dense_samples() {
        let sparse = FunctionSpec::custom((0..100).map(|i| (i as f64, i as f64)).collect()).unwrap();
        assert!(build_dulut(&sparse, &BuildConfig::default(), 1.0).is_err());
        let dense = FunctionSpec::custom(
            (0..=256).map(|i| (i as f64 / 256.0, (i as f64 / 256.0).powi(2))).collect(),
        )
        .unwrap();
        let s = input_scale(&dense, 8).unwrap();
        let (pair, _) = build_dulut(&dense, &BuildConfig::default(), s).unwrap();
        assert!(pair.table1().is_monotone());
    }
}
