//! Synthetic studies of two INT8 failure modes: a wide position embedding
//! dominating the shared scale of a fused tensor, and softmax distortion
//! when logits are quantized before max-subtraction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dulut::{build_dulut, BuildConfig};
use crate::error::{Error, Result};
use crate::func::{FunctionKind, FunctionSpec};
use crate::posembed::{AnchorAxis, Axis};
use crate::qans::{
    distribution_error, integer_softmax_via_dulut, naive_quant_softmax, qans_softmax, softmax,
    stabilize, ErrorNorm, QansConfig,
};
use crate::quant::{calibrate, quantize, QuantParams};
use crate::tensor::{IntTensor, Tensor};

/// Half-width of the synthetic image-feature band.
pub const IMG_RANGE: f64 = 4.0;
/// Surrogate position-embedding half-ranges: camera-ray and QFPE.
pub const CAMERA_RAY_RANGE: f64 = 130.0;
pub const QFPE_RANGE: f64 = 29.7;
/// Width of the stabilized-logit band that still matters to `exp`.
pub const EXP_BAND: f64 = 20.0;

/// Image-like features: Gaussian with 3 sigma at the band edge, clipped.
pub fn synthetic_image(seed: u64, shape: Vec<usize>) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, IMG_RANGE / 3.0).expect("valid sigma");
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| normal.sample(&mut rng).clamp(-IMG_RANGE, IMG_RANGE))
        .collect();
    Tensor::from_parts_unchecked(shape, data)
}

/// Position-embedding stand-in whose sum with `img` spans exactly
/// `[-range, range]`: uniform draws, clipped so the fused value stays in
/// range, with the two extremes pinned.
pub fn surrogate_pe(seed: u64, img: &Tensor, range: f64) -> Result<Tensor> {
    if !(range >= 0.0) || !range.is_finite() {
        return Err(Error::InvalidParam(format!("PE range must be >= 0, got {range}")));
    }
    if range == 0.0 {
        return Ok(Tensor::zeros(img.shape().to_vec()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data: Vec<f64> = img
        .data()
        .iter()
        .map(|&x| rng.random_range(-range..=range).clamp(-range - x, range - x))
        .collect();
    if data.len() >= 2 {
        data[0] = range - img.data()[0];
        data[1] = -range - img.data()[1];
    }
    Ok(Tensor::from_parts_unchecked(img.shape().to_vec(), data))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionScenario {
    pub img_feat: Tensor,
    pub pe_feat: Tensor,
    pub k: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionReport {
    pub scale: f64,
    pub img_range: f64,
    pub fused_max_abs: f64,
    /// Codes the image band occupies under the fused scale.
    pub effective_bins: u64,
    /// Codes it would occupy if quantized on its own.
    pub img_only_bins: u64,
    pub retention: f64,
}

fn band_bins(range: f64, scale: f64) -> u64 {
    (range / scale).floor() as u64 + 1
}

/// Calibrates one scale on `img + pe`, quantizes the sum and counts how many
/// codes the image band alone still spans.
pub fn fuse_and_quantize(s: &FusionScenario) -> Result<(IntTensor, FusionReport)> {
    if s.img_feat.shape() != s.pe_feat.shape() {
        return Err(Error::ShapeMismatch {
            expected: s.img_feat.shape().to_vec(),
            actual: s.pe_feat.shape().to_vec(),
        });
    }
    let fused = Tensor::from_parts_unchecked(
        s.img_feat.shape().to_vec(),
        s.img_feat.data().iter().zip(s.pe_feat.data()).map(|(a, b)| a + b).collect(),
    );
    let p = calibrate(std::slice::from_ref(&fused), s.k)?;
    let alone = calibrate(std::slice::from_ref(&s.img_feat), s.k)?;
    let (lo, hi) = s.img_feat.min_max().ok_or(Error::Empty("image features"))?;
    let img_range = hi - lo;
    let effective_bins = band_bins(img_range, p.scale());
    let img_only_bins = band_bins(img_range, alone.scale());
    Ok((
        quantize(&fused, &p),
        FusionReport {
            scale: p.scale(),
            img_range,
            fused_max_abs: fused.max_abs(),
            effective_bins,
            img_only_bins,
            retention: effective_bins as f64 / img_only_bins as f64,
        },
    ))
}

/// Synthetic fusion with a surrogate PE of half-range `pe_range`.
pub fn fusion_preset(seed: u64, pe_range: f64, k: u32, shape: Vec<usize>) -> Result<FusionReport> {
    let img = synthetic_image(seed, shape);
    let pe = surrogate_pe(seed.wrapping_add(1), &img, pe_range)?;
    let (_, r) = fuse_and_quantize(&FusionScenario {
        img_feat: img,
        pe_feat: pe,
        k,
    })?;
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionMetrics {
    pub l1_error: f64,
    pub argmax_shift_rate: f64,
    pub peak_attenuation: f64,
    /// Codes covering the `[-20, 0]` exp band at the logit scale (0 for float).
    pub effective_bins: u64,
}

impl DistortionMetrics {
    pub const ZERO: DistortionMetrics = DistortionMetrics {
        l1_error: 0.0,
        argmax_shift_rate: 0.0,
        peak_attenuation: 0.0,
        effective_bins: 0,
    };
}

/// First index of the largest element.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Compares quantized-path probabilities against the float path.
pub fn distortion(p_f: &Tensor, p_q: &Tensor, logit_scale: Option<f64>, k: u32) -> Result<DistortionMetrics> {
    let l1_error = distribution_error(p_f, p_q, ErrorNorm::L1)?;
    let rows = (p_f.len() / p_f.row_len()) as f64;
    let (mut shifts, mut atten) = (0usize, 0.0);
    for (rf, rq) in p_f.rows().zip(p_q.rows()) {
        let a = argmax(rf);
        if argmax(rq) != a {
            shifts += 1;
        }
        atten += rf[a] - rq[a];
    }
    let effective_bins = logit_scale.map_or(0, |s| band_bins(EXP_BAND, s).min((1u64 << (k - 1)) + 1));
    Ok(DistortionMetrics {
        l1_error,
        argmax_shift_rate: shifts as f64 / rows,
        peak_attenuation: atten / rows,
        effective_bins,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum SoftmaxMode {
    Float,
    /// Quantize raw logits with one scale, then softmax.
    NaiveQuant(QuantParams),
    /// Stabilize, then quantize with the searched truncation bound.
    Qans(QansConfig),
    /// As `Qans`, but the exponentials and normalization run in integers
    /// through a table pair built for `exp` on `[-i, 0]`.
    QansDulut { qans: QansConfig, build: BuildConfig },
}

/// Softmax of `logits` through `mode`, with distortion against float.
pub fn attention_probs(logits: &Tensor, mode: &SoftmaxMode) -> Result<(Tensor, DistortionMetrics)> {
    let p_f = softmax(logits)?;
    let (p_q, scale, k) = match mode {
        SoftmaxMode::Float => return Ok((p_f, DistortionMetrics::ZERO)),
        SoftmaxMode::NaiveQuant(p) => (naive_quant_softmax(logits, p)?, p.scale(), p.bit_width()),
        SoftmaxMode::Qans(cfg) => {
            let r = qans_softmax(logits, cfg)?;
            (r.p_q, r.selected_scale, cfg.k)
        }
        SoftmaxMode::QansDulut { qans, build } => {
            let r = qans_softmax(logits, qans)?;
            let p = qans.params(r.selected_i)?;
            let f = FunctionSpec::new(FunctionKind::Exp, -(r.selected_i as f64), 0.0)?;
            let cfg = BuildConfig { b: qans.k, ..build.clone() };
            let (pair, _) = build_dulut(&f, &cfg, p.scale())?;
            let codes = quantize(&stabilize(logits)?, &p);
            (integer_softmax_via_dulut(&codes, &pair)?, p.scale(), qans.k)
        }
    };
    let m = distortion(&p_f, &p_q, Some(scale), k)?;
    Ok((p_q, m))
}

fn matmul(a: &[f64], b: &[f64], n: usize, inner: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for t in 0..inner {
            let x = a[i * inner + t];
            for j in 0..m {
                out[i * m + j] += x * b[t * m + j];
            }
        }
    }
    out
}

/// Scaled dot-product attention `softmax(Q K^T / sqrt(d)) V`.
pub fn run_attention(
    queries: &Tensor,
    keys: &Tensor,
    values: &Tensor,
    mode: &SoftmaxMode,
) -> Result<(Tensor, DistortionMetrics)> {
    let dims = |t: &Tensor| -> Result<(usize, usize)> {
        match *t.shape() {
            [r, c] => Ok((r, c)),
            _ => Err(Error::InvalidParam(format!("expected a matrix, got shape {:?}", t.shape()))),
        }
    };
    let (nq, d) = dims(queries)?;
    let (nk, dk) = dims(keys)?;
    let (nv, dv) = dims(values)?;
    if dk != d || nv != nk {
        return Err(Error::ShapeMismatch {
            expected: vec![nk, d],
            actual: vec![nv, dk],
        });
    }
    if nq > 1024 || nk == 0 {
        return Err(Error::InvalidParam(format!("{nq} queries x {nk} keys out of range")));
    }
    let mut kt = vec![0.0; d * nk];
    for j in 0..nk {
        for t in 0..d {
            kt[t * nk + j] = keys.data()[j * d + t];
        }
    }
    let scale = 1.0 / (d as f64).sqrt();
    let logits: Vec<f64> = matmul(queries.data(), &kt, nq, d, nk).into_iter().map(|v| v * scale).collect();
    let logits = Tensor::new(vec![nq, nk], logits)?;
    let (p, m) = attention_probs(&logits, mode)?;
    let out = matmul(p.data(), values.data(), nq, nk, dv);
    Ok((Tensor::from_parts_unchecked(vec![nq, dv], out), m))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub seed: u64,
    pub instances: usize,
    pub rows: usize,
    pub keys: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            instances: 16,
            rows: 16,
            keys: 256,
        }
    }
}

/// Wide-range attention logits. Each row has a peak near the top of
/// `[440, 500]`, a tight cluster of 4 to 12 runner-up keys spaced 0.5 to
/// 2.5 apart below it, and a background spread uniformly down to -500.
pub fn synthetic_logit_suite(cfg: &SuiteConfig) -> Result<Vec<Tensor>> {
    if cfg.keys < 13 || cfg.rows == 0 || cfg.instances == 0 {
        return Err(Error::InvalidParam("suite needs >= 1 instance, >= 1 row, >= 13 keys".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.instances)
        .map(|_| {
            let mut data = Vec::with_capacity(cfg.rows * cfg.keys);
            for _ in 0..cfg.rows {
                let top: f64 = rng.random_range(440.0..500.0);
                let mut row: Vec<f64> = (0..cfg.keys)
                    .map(|_| rng.random_range(-500.0..top - 25.0))
                    .collect();
                let cluster = rng.random_range(4..=12usize);
                let slots = rand::seq::index::sample(&mut rng, cfg.keys, cluster);
                let mut v = top;
                for (n, j) in slots.into_iter().enumerate() {
                    if n > 0 {
                        v -= rng.random_range(0.5..2.5);
                    }
                    row[j] = v;
                }
                data.extend(row);
            }
            Tensor::new(vec![cfg.rows, cfg.keys], data)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub sweep: String,
    pub setting: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub suite: SuiteConfig,
    pub k: u32,
    pub anchor_counts: Vec<usize>,
    pub n_values: Vec<usize>,
    pub dulut_sizes: Vec<(usize, usize)>,
    pub dulut_functions: Vec<FunctionKind>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            suite: SuiteConfig::default(),
            k: 8,
            anchor_counts: vec![2, 3, 4, 5],
            n_values: vec![1, 5, 10, 20, 30, 40],
            dulut_sizes: vec![(16, 16), (16, 32), (32, 32), (64, 64)],
            dulut_functions: vec![FunctionKind::Exp],
        }
    }
}

/// Smooth reference embedding of a normalized coordinate.
fn reference_embedding(v: f64, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|c| {
            let freq = std::f64::consts::PI * (1 + c / 2) as f64 / 2.0;
            if c % 2 == 0 {
                (freq * v).sin()
            } else {
                (freq * v).cos()
            }
        })
        .collect()
}

/// Mean absolute error of approximating [`reference_embedding`] by
/// interpolating `count` uniformly spaced anchors set to its values.
pub fn anchor_fit_error(count: usize, dim: usize, samples: usize) -> Result<f64> {
    if count < 2 || samples < 2 {
        return Err(Error::InvalidParam("need >= 2 anchors and >= 2 samples".into()));
    }
    let locs: Vec<f64> = (0..count).map(|i| i as f64 / (count - 1) as f64).collect();
    let emb = locs.iter().map(|&l| reference_embedding(l, dim)).collect();
    let axis = AnchorAxis::new(Axis::X, locs, emb, 1.0)?;
    let mut total = 0.0;
    for s in 0..samples {
        let v = s as f64 / (samples - 1) as f64;
        let want = reference_embedding(v, dim);
        total += axis.embed(v).iter().zip(&want).map(|(a, b)| (a - b).abs()).sum::<f64>();
    }
    Ok(total / (samples * dim) as f64)
}

fn row(sweep: &str, setting: String, metric: &str, value: f64) -> AblationRow {
    AblationRow {
        sweep: sweep.into(),
        setting,
        metric: metric.into(),
        value,
    }
}

/// Runs the three sweeps; each emits one metric per setting.
///
/// * `anchors`: mean fit error of anchor interpolation to a smooth embedding.
/// * `qans_n`: suite mean softmax L1 error when searching `1..=N`.
/// * `dulut`: exhaustive max absolute error, in output steps, of each
///   `(m1, m2)` pair per function.
pub fn ablation_sweep(cfg: &AblationConfig) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for &count in &cfg.anchor_counts {
        rows.push(row("anchors", count.to_string(), "fit_error", anchor_fit_error(count, 16, 1001)?));
    }
    if !cfg.n_values.is_empty() {
        let suite = synthetic_logit_suite(&cfg.suite)?;
        for &n in &cfg.n_values {
            let qcfg = QansConfig::new(cfg.k, n, ErrorNorm::L1)?;
            let errs = suite
                .par_iter()
                .map(|inst| Ok(qans_softmax(inst, &qcfg)?.per_candidate_error.iter().copied().fold(f64::INFINITY, f64::min)))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row("qans_n", n.to_string(), "softmax_l1", errs.iter().sum::<f64>() / errs.len() as f64));
        }
    }
    for &kind in &cfg.dulut_functions {
        let f = FunctionSpec::with_default_domain(kind)?;
        let s = crate::dulut::input_scale(&f, cfg.k)?;
        for &(m1, m2) in &cfg.dulut_sizes {
            let build = BuildConfig {
                b: cfg.k,
                ..BuildConfig::with_sizes(m1, m2)
            };
            let (pair, _) = build_dulut(&f, &build, s)?;
            let prof = crate::dulut::ErrorProfile::measure(&f, &pair, s, pair.out_scale(), None)?;
            rows.push(row(
                "dulut",
                format!("{kind}:{m1}x{m2}"),
                "max_abs_ulp",
                prof.max_abs() / pair.out_scale(),
            ));
        }
    }
    Ok(rows)
}
