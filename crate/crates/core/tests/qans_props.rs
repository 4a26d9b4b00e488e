use fqkit_core::attn::{synthetic_logit_suite, SuiteConfig};
use fqkit_core::dulut::{build_dulut, BuildConfig};
use fqkit_core::func::{FunctionKind, FunctionSpec};
use fqkit_core::qans::{
    argmin_candidate, calibrate_candidate, integer_softmax_via_dulut, qans_softmax, quantize_stabilized, softmax,
    stabilize, ErrorNorm, QansConfig,
};
use fqkit_core::{Error, IntTensor, Tensor};
use proptest::prelude::*;

/// Softmax of one row with plain loops and the textbook shift.
fn ref_softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::MIN, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Candidate `i` error computed from scratch: stabilize, round half away
/// from zero at `s = i / 2^(k-1)`, clamp, softmax, mean row L1 or L2.
fn ref_error(x: &Tensor, i: usize, k: u32, norm: ErrorNorm) -> f64 {
    let s = i as f64 / f64::from(1u32 << (k - 1));
    let q_min = -f64::from(1u32 << (k - 1));
    let mut total = 0.0;
    let mut rows = 0;
    for row in x.rows() {
        let m = row.iter().cloned().fold(f64::MIN, f64::max);
        let xs: Vec<f64> = row.iter().map(|v| v - m).collect();
        let xq: Vec<f64> = xs.iter().map(|v| (v / s).round().max(q_min).min(0.0) * s).collect();
        let (pf, pq) = (ref_softmax(&xs), ref_softmax(&xq));
        let d = pf.iter().zip(&pq).map(|(a, b)| a - b);
        total += match norm {
            ErrorNorm::L1 => d.map(f64::abs).sum::<f64>(),
            ErrorNorm::L2 => d.map(|v| v * v).sum::<f64>().sqrt(),
        };
        rows += 1;
    }
    total / rows as f64
}

fn suite() -> Vec<Tensor> {
    synthetic_logit_suite(&SuiteConfig::default()).unwrap()
}

#[test]
fn selection_matches_brute_force_on_suite() {
    let cfg = QansConfig::default();
    for x in suite() {
        let r = qans_softmax(&x, &cfg).unwrap();
        let brute: Vec<f64> = (1..=cfg.n).map(|i| ref_error(&x, i, cfg.k, cfg.norm)).collect();
        for (a, b) in r.per_candidate_error.iter().zip(&brute) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
        let mut best = 0;
        for i in 1..brute.len() {
            if brute[i] < brute[best] {
                best = i;
            }
        }
        assert_eq!(r.selected_i, best + 1);
        assert!(r.selected_i <= cfg.n);
        assert_eq!(r.selected_scale, r.selected_i as f64 / 128.0);
    }
}

#[test]
fn suite_error_plateaus_and_single_bound_fails() {
    let err_at = |n: usize| {
        let cfg = QansConfig::new(8, n, ErrorNorm::L1).unwrap();
        let s = suite();
        s.iter()
            .map(|x| {
                let r = qans_softmax(x, &cfg).unwrap();
                r.per_candidate_error[r.selected_i - 1]
            })
            .sum::<f64>()
            / s.len() as f64
    };
    let (e1, e20, e40) = (err_at(1), err_at(20), err_at(40));
    assert!(e1 > 10.0 * e20, "{e1} vs {e20}");
    assert!((e20 - e40).abs() <= 0.05 * e20, "{e20} vs {e40}");
}

#[test]
fn frozen_candidate_and_calibration() {
    let s = suite();
    let cfg = QansConfig::default();
    let i = calibrate_candidate(&s[..4], &cfg).unwrap();
    let mut total = vec![0.0; cfg.n];
    for x in &s[..4] {
        for (j, t) in total.iter_mut().enumerate() {
            *t += ref_error(x, j + 1, 8, ErrorNorm::L1);
        }
    }
    assert_eq!(i, argmin_candidate(&total));
    let frozen = QansConfig {
        frozen_i: Some(i),
        ..cfg.clone()
    };
    let r = qans_softmax(&s[5], &frozen).unwrap();
    assert_eq!(r.selected_i, i);
    assert!(calibrate_candidate(&[], &cfg).is_err());
    assert!(QansConfig { frozen_i: Some(21), ..cfg }.validate().is_err());
}

#[test]
fn positive_stabilized_input_rejected() {
    let x = Tensor::new(vec![1, 2], vec![0.0, 0.5]).unwrap();
    assert_eq!(quantize_stabilized(&x, 3, &QansConfig::default()), Err(Error::PositiveInput(0.5)));
}

fn exp_pair(i: usize, k: u32) -> fqkit_core::lut::DulutPair {
    let cfg = QansConfig::new(k, i.max(1), ErrorNorm::L1).unwrap();
    let f = FunctionSpec::new(FunctionKind::Exp, -(i as f64), 0.0).unwrap();
    build_dulut(&f, &BuildConfig { b: k, ..BuildConfig::default() }, cfg.scale(i)).unwrap().0
}

#[test]
fn integer_softmax_tracks_float() {
    let pair = exp_pair(13, 8);
    let cfg = QansConfig::default();
    let s = suite();
    let x = &s[0];
    let p = cfg.params(13).unwrap();
    let codes = fqkit_core::quant::quantize(&stabilize(x).unwrap(), &p);
    let pi = integer_softmax_via_dulut(&codes, &pair).unwrap();
    let pf = softmax(x).unwrap();
    for (ri, rf) in pi.rows().zip(pf.rows()) {
        let sum: f64 = ri.iter().sum();
        assert!((sum - 1.0).abs() <= ri.len() as f64 * 2f64.powi(-30), "{sum}");
        let l1: f64 = ri.iter().zip(rf).map(|(a, b)| (a - b).abs()).sum();
        assert!(l1 < 0.05, "{l1}");
    }
}

#[test]
fn integer_softmax_edges() {
    let pair = exp_pair(13, 8);
    let one = integer_softmax_via_dulut(&IntTensor::from_vec(vec![0]), &pair).unwrap();
    assert_eq!(one.data(), &[1.0]);
    let uniform = integer_softmax_via_dulut(&IntTensor::new(vec![1, 4], vec![0; 4]).unwrap(), &pair).unwrap();
    assert_eq!(uniform.data(), &[0.25; 4]);
    // Codes far below the table's support give zero exponentials.
    assert!(integer_softmax_via_dulut(&IntTensor::from_vec(vec![-128, -128]), &pair).is_err());
    assert!(integer_softmax_via_dulut(&IntTensor::from_vec(vec![0, 200]), &pair).is_err());
}

fn logits() -> impl Strategy<Value = Tensor> {
    (1usize..5, 2usize..24).prop_flat_map(|(r, c)| {
        proptest::collection::vec(-600.0f64..600.0, r * c).prop_map(move |d| Tensor::new(vec![r, c], d).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stabilization_preserves_softmax(x in logits(), shift in -1e3f64..1e3) {
        let shifted = x.map(|v| v + shift);
        let (a, b) = (softmax(&x).unwrap(), softmax(&shifted).unwrap());
        for (u, v) in a.data().iter().zip(b.data()) {
            prop_assert!((u - v).abs() <= 1e-9);
        }
        let xs = stabilize(&x).unwrap();
        prop_assert!(xs.data().iter().all(|&v| v <= 0.0));
        for row in xs.rows() {
            prop_assert!(row.iter().any(|&v| v == 0.0));
        }
    }

    #[test]
    fn quantized_stabilized_inside_band(x in logits(), i in 1usize..=40) {
        let cfg = QansConfig::new(8, 40, ErrorNorm::L1).unwrap();
        let q = quantize_stabilized(&stabilize(&x).unwrap(), i, &cfg).unwrap();
        prop_assert!(q.data().iter().all(|&v| v <= 0.0 && v >= -(i as f64)));
    }

    #[test]
    fn selection_is_brute_force_argmin(x in logits(), n in 1usize..=30, l2 in any::<bool>()) {
        let norm = if l2 { ErrorNorm::L2 } else { ErrorNorm::L1 };
        let cfg = QansConfig::new(8, n, norm).unwrap();
        let r = qans_softmax(&x, &cfg).unwrap();
        let brute: Vec<f64> = (1..=n).map(|i| ref_error(&x, i, 8, norm)).collect();
        for (a, b) in r.per_candidate_error.iter().zip(&brute) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        let best = brute.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(r.per_candidate_error[r.selected_i - 1], r.per_candidate_error.iter().cloned().fold(f64::INFINITY, f64::min));
        prop_assert!((brute[r.selected_i - 1] - best).abs() <= 1e-12);
        prop_assert!(r.per_candidate_error[..r.selected_i - 1].iter().all(|&e| e > r.per_candidate_error[r.selected_i - 1]));
    }
}
