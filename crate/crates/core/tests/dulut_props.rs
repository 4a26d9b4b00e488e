use fqkit_core::dulut::{
    build_dulut, build_linear_lut, curvature_only_merge, input_scale, pair_report, segment_diagnostics, BuildConfig,
    ErrorProfile, ErrorReport,
};
use fqkit_core::func::{FunctionKind, FunctionSpec};
use fqkit_core::lut::{count_collisions, dulut_eval, encode_pair, DulutPair, LutTable};
use fqkit_core::quant::calibrate_range;
use proptest::prelude::*;

fn silu_half_scale() -> FunctionSpec {
    FunctionSpec::new(FunctionKind::Silu, -64.0, 63.5).unwrap()
}

fn adjacent_equal(pair: &DulutPair, lo: i32, hi: i32) -> usize {
    let outs: Vec<i32> = (lo..=hi).map(|c| dulut_eval(c, pair).unwrap()).collect();
    outs.windows(2).filter(|w| w[0] == w[1]).count()
}

#[test]
fn collision_lemma_silu_int8() {
    let f = silu_half_scale();
    let cfg = BuildConfig::with_sizes(32, 32);
    assert_eq!(cfg.k_hw(), 8);

    // Correctly rounded SiLU has no repeated outputs on [16, 24] at this scale.
    let (out, _) = fqkit_core::dulut::output_params(&f, 8).unwrap();
    let target: Vec<i32> = (16..=24).map(|c| out.quantize_value(f.eval(f64::from(c) * 0.5))).collect();
    assert!(target.windows(2).all(|w| w[0] != w[1]), "{target:?}");

    let (curv, _) = curvature_only_merge(&f, &cfg, 0.5).unwrap();
    let (dulut, _) = build_dulut(&f, &cfg, 0.5).unwrap();
    let c_curv = adjacent_equal(&curv, 16, 24);
    assert!(c_curv >= 1, "curvature-only merge should collide on [16, 24]");
    assert_eq!(count_collisions(&curv, 16, 24).unwrap(), c_curv);
    assert_eq!(adjacent_equal(&dulut, 16, 24), 0);
    assert_eq!(count_collisions(&dulut, 16, 24).unwrap(), 0);
}

#[test]
fn compressed_mapper_segment_collides() {
    // Table1's first segment squeezes 4 codes into a span of 2, so two of
    // them must share a mapped index and hence an output.
    let t1 = LutTable::new(2, 4, vec![-8, -6, 0, 4, 8]).unwrap();
    let t2 = LutTable::identity(2, 4).unwrap();
    let pair = DulutPair::new(t1, t2, 1.0, 1.0).unwrap();
    let mapped: Vec<i32> = (-8..=-5).map(|c| fqkit_core::lut::lut_eval(c, pair.table1()).unwrap()).collect();
    assert!(mapped.windows(2).any(|w| w[0] == w[1]), "{mapped:?}");
    assert!(adjacent_equal(&pair, -8, -5) >= 1);
    assert_eq!(count_collisions(&pair, -8, -5).unwrap(), adjacent_equal(&pair, -8, -5));
}

fn check_loop(report: &ErrorReport, pair: &DulutPair, cfg: &BuildConfig) {
    let hist: Vec<f64> = report.history.iter().map(|h| h.global_max_are).collect();
    assert!(hist.windows(2).all(|w| w[1] <= w[0]), "{hist:?}");
    if let Some(&last) = hist.last() {
        assert_eq!(last, report.global_max_are);
    }
    assert!(report.iterations_used <= cfg.max_iters);
    let t1 = pair.table1();
    let half = 1i32 << (cfg.b - 1);
    assert_eq!(t1.entries().len(), cfg.m1 + 1);
    assert_eq!(pair.table2().entries().len(), cfg.m2 + 1);
    assert_eq!(t1.entries()[0], -half);
    assert_eq!(t1.entries()[cfg.m1], half);
    assert!(t1.is_monotone());
    let widths: i64 = t1.entries().windows(2).map(|w| i64::from(w[1] - w[0])).sum();
    assert_eq!(widths, 1i64 << cfg.b);
}

#[test]
fn loop_properties_and_determinism() {
    for kind in [FunctionKind::Exp, FunctionKind::Silu, FunctionKind::Gelu] {
        let f = FunctionSpec::with_default_domain(kind).unwrap();
        let s = input_scale(&f, 8).unwrap();
        for (m1, m2) in [(16, 16), (16, 32), (32, 32)] {
            let cfg = BuildConfig::with_sizes(m1, m2);
            let (pair, report) = build_dulut(&f, &cfg, s).unwrap();
            check_loop(&report, &pair, &cfg);
            let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
            let (again, rep2) = serial.install(|| build_dulut(&f, &cfg, s)).unwrap();
            assert_eq!(encode_pair(&again), encode_pair(&pair));
            assert_eq!(rep2, report);
            // The returned report describes the returned pair.
            let re = pair_report(&f, &pair, None).unwrap();
            assert_eq!(re.per_segment_are, report.per_segment_are);
        }
    }
}

#[test]
fn builder_never_worse_than_identity_start() {
    for kind in [FunctionKind::Exp, FunctionKind::Silu, FunctionKind::Gelu, FunctionKind::Sigmoid] {
        let f = FunctionSpec::with_default_domain(kind).unwrap();
        let s = input_scale(&f, 8).unwrap();
        let cfg = BuildConfig::with_sizes(32, 32);
        let (t2, out_scale) = build_linear_lut(&f, 8, 5, s).unwrap();
        let start = DulutPair::new(LutTable::identity(5, 8).unwrap(), t2, s, out_scale).unwrap();
        let start_max = pair_report(&f, &start, None).unwrap().global_max_are;
        let (_, report) = build_dulut(&f, &cfg, s).unwrap();
        assert!(report.global_max_are <= start_max, "{kind}: {} > {start_max}", report.global_max_are);
    }
}

#[test]
fn are_is_the_segment_mean_of_relative_error() {
    let f = FunctionSpec::with_default_domain(FunctionKind::Exp).unwrap();
    let s = input_scale(&f, 8).unwrap();
    let (pair, report) = build_dulut(&f, &BuildConfig::default(), s).unwrap();
    let prof = ErrorProfile::measure(&f, &pair, s, pair.out_scale(), None).unwrap();
    let (_, range) = fqkit_core::dulut::output_params(&f, 8).unwrap();
    let eps = 1e-6 * range;
    let (lo, hi) = f.domain();
    for (k, &are) in report.per_segment_are.iter().enumerate() {
        let codes = (k * 8)..(k * 8 + 8);
        let mut errs = Vec::new();
        for u in codes {
            let x = f64::from(u as i32 - 128) * s;
            if x < lo || x > hi {
                continue;
            }
            let exact = x.exp();
            let approx = f64::from(dulut_eval(u as i32 - 128, &pair).unwrap()) * pair.out_scale();
            let rel = (exact - approx).abs() / (exact.abs() + eps);
            assert!((rel - prof.rel_err[u]).abs() <= 1e-12 * (1.0 + rel));
            errs.push(rel);
        }
        let mean = if errs.is_empty() { 0.0 } else { errs.iter().sum::<f64>() / errs.len() as f64 };
        assert!((mean - are).abs() <= 1e-12 * (1.0 + are), "segment {k}: {mean} vs {are}");
    }
    assert!(prof.max_rel() >= report.global_max_are);
}

/// Worst measured error of each table1 segment, straight from the kernel.
fn segment_worst(f: &FunctionSpec, pair: &DulutPair, lo_code: i32, hi_code: i32) -> f64 {
    let (lo, hi) = f.domain();
    (lo_code..=hi_code)
        .map(|c| (c, f64::from(c) * pair.in_scale()))
        .filter(|&(_, x)| x >= lo && x <= hi)
        .map(|(c, x)| (f.eval(x) - f64::from(dulut_eval(c, pair).unwrap()) * pair.out_scale()).abs())
        .fold(0.0, f64::max)
}

#[test]
fn eq4_bound_holds_on_every_segment() {
    for kind in [FunctionKind::Exp, FunctionKind::Silu, FunctionKind::Gelu] {
        let f = FunctionSpec::with_default_domain(kind).unwrap();
        let s = input_scale(&f, 8).unwrap();
        let mut pairs = Vec::new();
        for (m1, m2) in [(16, 16), (16, 32), (32, 32), (64, 64)] {
            pairs.push(build_dulut(&f, &BuildConfig::with_sizes(m1, m2), s).unwrap().0);
        }
        for t_bit in [4, 5, 8] {
            let (t2, os) = build_linear_lut(&f, 8, t_bit, s).unwrap();
            pairs.push(DulutPair::new(LutTable::identity(5, 8).unwrap(), t2, s, os).unwrap());
        }
        for pair in &pairs {
            for d in segment_diagnostics(&f, pair, None).unwrap() {
                let worst = segment_worst(&f, pair, d.lo_code, d.hi_code);
                assert!((worst - d.max_abs_error).abs() <= 1e-12);
                assert!(d.bound_eq4 >= pair.out_scale());
                assert!(worst <= d.bound_eq4, "{kind} segment {}: {worst} > {}", d.index, d.bound_eq4);
            }
        }
    }
}

#[test]
fn curvature_baseline_exceeds_eq4() {
    // Merging by curvature alone stretches flat regions past what the
    // kernel resolves, so the measured error leaves the smooth bound behind.
    for kind in [FunctionKind::Silu, FunctionKind::Gelu] {
        let f = FunctionSpec::with_default_domain(kind).unwrap();
        let s = input_scale(&f, 8).unwrap();
        for (m1, m2) in [(16, 16), (32, 32), (64, 64)] {
            let (pair, _) = curvature_only_merge(&f, &BuildConfig::with_sizes(m1, m2), s).unwrap();
            let over = segment_diagnostics(&f, &pair, None)
                .unwrap()
                .iter()
                .filter(|d| segment_worst(&f, &pair, d.lo_code, d.hi_code) > d.bound_eq4)
                .count();
            assert!(over > 0, "{kind} ({m1},{m2})");
        }
    }
}

#[test]
fn infeasible_budgets_are_rejected() {
    let f = FunctionSpec::with_default_domain(FunctionKind::Exp).unwrap();
    let cfg = BuildConfig {
        k_hw: Some(4),
        ..BuildConfig::with_sizes(32, 32)
    };
    assert!(matches!(build_dulut(&f, &cfg, 0.078125), Err(fqkit_core::Error::Infeasible(_))));
    let bad = BuildConfig::with_sizes(24, 32);
    assert!(build_dulut(&f, &bad, 0.078125).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_builds_keep_invariants(
        kind in prop::sample::select(vec![FunctionKind::Exp, FunctionKind::Silu, FunctionKind::Gelu, FunctionKind::Sigmoid]),
        b in 5u32..=8,
        t1 in 2u32..=4,
        t2 in 2u32..=4,
        delta in prop::sample::select(vec![1e-4, 1e-3, 1e-2]),
    ) {
        let f = FunctionSpec::with_default_domain(kind).unwrap();
        let (lo, hi) = f.domain();
        let s = calibrate_range(lo, hi, b).unwrap().scale();
        let cfg = BuildConfig { b, delta, ..BuildConfig::with_sizes(1 << t1, 1 << t2) };
        let (pair, report) = build_dulut(&f, &cfg, s).unwrap();
        check_loop(&report, &pair, &cfg);
        prop_assert!(report.global_max_are <= delta || report.iterations_used == cfg.max_iters
            || report.history.last().map_or(true, |h| h.global_max_are == report.global_max_are));
    }
}
