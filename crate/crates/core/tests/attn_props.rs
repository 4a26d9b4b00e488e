use fqkit_core::attn::{
    ablation_sweep, attention_probs, fuse_and_quantize, fusion_preset, run_attention, surrogate_pe,
    synthetic_image, synthetic_logit_suite, AblationConfig, FusionScenario, SoftmaxMode, SuiteConfig,
    CAMERA_RAY_RANGE, IMG_RANGE, QFPE_RANGE,
};
use fqkit_core::dulut::BuildConfig;
use fqkit_core::qans::QansConfig;
use fqkit_core::quant::QuantParams;
use fqkit_core::Tensor;
use proptest::prelude::*;

/// Code count of a band of width `w` under the symmetric INT8 scale of a
/// tensor whose extremes are `+-r`, derived directly: s = 2r / 256.
fn bins(w: f64, r: f64) -> u64 {
    (w / (2.0 * r / 256.0)).floor() as u64 + 1
}

#[test]
fn fusion_domination() {
    let shape = vec![64, 64];
    let cr = fusion_preset(7, CAMERA_RAY_RANGE, 8, shape.clone()).unwrap();
    let qd = fusion_preset(7, QFPE_RANGE, 8, shape).unwrap();
    assert!((cr.scale - 1.015625).abs() < 1e-12);
    assert!((cr.fused_max_abs - CAMERA_RAY_RANGE).abs() < 1e-9);
    assert!((qd.fused_max_abs - QFPE_RANGE).abs() < 1e-9);
    assert_eq!(cr.effective_bins, bins(cr.img_range, CAMERA_RAY_RANGE));
    assert_eq!(qd.effective_bins, bins(qd.img_range, QFPE_RANGE));
    assert!((3..=9).contains(&cr.effective_bins), "{}", cr.effective_bins);
    assert!(qd.effective_bins >= 4 * cr.effective_bins, "{} vs {}", qd.effective_bins, cr.effective_bins);
    // Clipped Gaussian image features reach the band edges at this size.
    assert!(cr.img_range > 2.0 * IMG_RANGE - 0.5);
}

#[test]
fn fused_codes_are_the_rounded_sum() {
    let img = synthetic_image(1, vec![8, 8]);
    let pe = surrogate_pe(2, &img, 30.0).unwrap();
    let (q, r) = fuse_and_quantize(&FusionScenario {
        img_feat: img.clone(),
        pe_feat: pe.clone(),
        k: 8,
    })
    .unwrap();
    let p = QuantParams::new(8, r.scale).unwrap();
    for ((a, b), c) in img.data().iter().zip(pe.data()).zip(q.data()) {
        assert_eq!(*c, p.quantize_value(a + b));
    }
    let bad = FusionScenario {
        img_feat: img,
        pe_feat: Tensor::zeros(vec![4]),
        k: 8,
    };
    assert!(fuse_and_quantize(&bad).is_err());
}

#[test]
fn naive_quant_distorts_and_qans_does_not() {
    let suite = synthetic_logit_suite(&SuiteConfig::default()).unwrap();
    let naive = SoftmaxMode::NaiveQuant(QuantParams::new(8, 5.0).unwrap());
    let qans = SoftmaxMode::Qans(QansConfig::default());
    let mut any_shift = false;
    for x in &suite {
        let (_, mn) = attention_probs(x, &naive).unwrap();
        let (_, mq) = attention_probs(x, &qans).unwrap();
        any_shift |= mn.argmax_shift_rate > 0.0;
        assert_eq!(mq.argmax_shift_rate, 0.0);
        assert!(mq.l1_error < mn.l1_error, "{} vs {}", mq.l1_error, mn.l1_error);
        assert_eq!(mn.effective_bins, 5);
    }
    assert!(any_shift);
}

#[test]
fn integer_path_close_to_float() {
    let cfg = SuiteConfig {
        instances: 2,
        rows: 4,
        ..SuiteConfig::default()
    };
    let mode = SoftmaxMode::QansDulut {
        qans: QansConfig::default(),
        build: BuildConfig::default(),
    };
    for x in synthetic_logit_suite(&cfg).unwrap() {
        let (p, m) = attention_probs(&x, &mode).unwrap();
        assert!(m.l1_error < 0.1, "{}", m.l1_error);
        for row in p.rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn attention_output_is_probability_weighted_values() {
    let q = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 2.0]).unwrap();
    let k = Tensor::new(vec![3, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
    let v = Tensor::new(vec![3, 1], vec![1.0, 2.0, 3.0]).unwrap();
    let (out, m) = run_attention(&q, &k, &v, &SoftmaxMode::Float).unwrap();
    assert_eq!(m.l1_error, 0.0);
    let r = 1.0 / 2f64.sqrt();
    for (qi, want_logits) in [[r, 0.0, r], [0.0, 2.0 * r, 2.0 * r]].iter().enumerate() {
        let z: f64 = want_logits.iter().map(|l| l.exp()).sum();
        let want: f64 = want_logits.iter().zip([1.0, 2.0, 3.0]).map(|(l, v)| l.exp() / z * v).sum();
        assert!((out.data()[qi] - want).abs() < 1e-12);
    }
    assert!(run_attention(&q, &v, &v, &SoftmaxMode::Float).is_err());
}

#[test]
fn ablation_rows_and_trends() {
    let cfg = AblationConfig {
        suite: SuiteConfig {
            instances: 4,
            ..SuiteConfig::default()
        },
        ..AblationConfig::default()
    };
    let rows = ablation_sweep(&cfg).unwrap();
    assert_eq!(rows.len(), 4 + 6 + 4);
    let vals = |s: &str| rows.iter().filter(|r| r.sweep == s).map(|r| r.value).collect::<Vec<_>>();
    let fit = vals("anchors");
    assert!(fit.windows(2).all(|w| w[1] < w[0]), "{fit:?}");
    let qn = vals("qans_n");
    assert!(qn.windows(2).all(|w| w[1] <= w[0]), "{qn:?}");
    assert!(vals("dulut").iter().all(|&v| v >= 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn wider_pe_never_adds_bins(seed in 0u64..500, a in 4.5f64..300.0, b in 4.5f64..300.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let shape = vec![16, 16];
        let narrow = fusion_preset(seed, lo, 8, shape.clone()).unwrap();
        let wide = fusion_preset(seed, hi, 8, shape).unwrap();
        prop_assert!(wide.effective_bins <= narrow.effective_bins);
        prop_assert!(narrow.effective_bins <= narrow.img_only_bins);
        prop_assert!(wide.retention <= 1.0);
    }
}
