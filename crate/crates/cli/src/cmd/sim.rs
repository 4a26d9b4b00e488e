use std::path::PathBuf;

use clap::{Args, ValueEnum};
use fqkit_core::attn::{
    ablation_sweep, attention_probs, fusion_preset, synthetic_logit_suite, AblationConfig, DistortionMetrics,
    SoftmaxMode, SuiteConfig, CAMERA_RAY_RANGE, IMG_RANGE, QFPE_RANGE,
};
use fqkit_core::dulut::BuildConfig;
use fqkit_core::func::FunctionKind;
use fqkit_core::qans::{ErrorNorm, QansConfig};
use fqkit_core::quant::QuantParams;
use rayon::prelude::*;
use serde::Serialize;

use super::config_value;
use crate::io::{self, g9};
use crate::{Common, Outcome, Usage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Fusion,
    Attention,
    Ablation,
}

#[derive(Args, Debug, Serialize)]
pub struct SimArgs {
    #[arg(long, value_enum)]
    pub scenario: Scenario,
    #[arg(long, default_value = "metrics.csv")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub k: u32,
    /// Extra PE half-ranges for the fusion scenario.
    #[arg(long, value_delimiter = ',')]
    pub pe_range: Vec<f64>,
    #[arg(long, default_value_t = 16)]
    pub instances: usize,
    #[arg(long, default_value_t = 16)]
    pub rows: usize,
    #[arg(long, default_value_t = 256)]
    pub keys: usize,
    /// Candidate count for the truncation search.
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    /// Logit scale of the naive baseline.
    #[arg(long, default_value_t = 5.0)]
    pub naive_scale: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [2usize, 3, 4, 5])]
    pub anchor_counts: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 5, 10, 20, 30, 40])]
    pub n_values: Vec<usize>,
    /// Table sizes as `m1xm2`.
    #[arg(long, value_delimiter = ',', default_values_t = ["16x16".to_string(), "16x32".into(), "32x32".into(), "64x64".into()])]
    pub dulut_sizes: Vec<String>,
    #[arg(long, value_delimiter = ',', default_values_t = ["exp".to_string()])]
    pub dulut_fns: Vec<String>,
    #[command(flatten)]
    pub common: Common,
}

fn suite(a: &SimArgs) -> SuiteConfig {
    SuiteConfig {
        seed: a.common.seed,
        instances: a.instances,
        rows: a.rows,
        keys: a.keys,
    }
}

fn fusion(a: &SimArgs) -> anyhow::Result<(Vec<&'static str>, Vec<Vec<String>>)> {
    let mut presets: Vec<(String, f64)> = vec![
        ("camera-ray".into(), CAMERA_RAY_RANGE),
        ("qfpe".into(), QFPE_RANGE),
        ("matched".into(), IMG_RANGE),
        ("none".into(), 0.0),
    ];
    presets.extend(a.pe_range.iter().map(|&r| ("custom".to_string(), r)));
    let rows = presets
        .into_iter()
        .map(|(name, range)| {
            let r = fusion_preset(a.common.seed, range, a.k, vec![64, 256])?;
            Ok(vec![
                name,
                g9(range),
                g9(r.scale),
                g9(r.img_range),
                g9(r.fused_max_abs),
                r.effective_bins.to_string(),
                r.img_only_bins.to_string(),
                g9(r.retention),
            ])
        })
        .collect::<anyhow::Result<_>>()?;
    Ok((
        vec!["preset", "pe_range", "scale", "img_range", "fused_max_abs", "effective_bins", "img_only_bins", "retention"],
        rows,
    ))
}

fn metric_row(instance: String, mode: &str, m: &DistortionMetrics) -> Vec<String> {
    vec![
        instance,
        mode.into(),
        g9(m.l1_error),
        g9(m.argmax_shift_rate),
        g9(m.peak_attenuation),
        m.effective_bins.to_string(),
    ]
}

fn attention(a: &SimArgs) -> anyhow::Result<(Vec<&'static str>, Vec<Vec<String>>)> {
    let qans = QansConfig::new(a.k, a.n, ErrorNorm::L1)?;
    let modes = [
        ("float", SoftmaxMode::Float),
        ("naive_quant", SoftmaxMode::NaiveQuant(QuantParams::new(a.k, a.naive_scale)?)),
        ("qans", SoftmaxMode::Qans(qans.clone())),
        (
            "qans_dulut",
            SoftmaxMode::QansDulut {
                qans,
                build: BuildConfig::default(),
            },
        ),
    ];
    let suite = synthetic_logit_suite(&suite(a))?;
    let per_instance: Vec<Vec<DistortionMetrics>> = suite
        .par_iter()
        .map(|logits| modes.iter().map(|(_, m)| Ok(attention_probs(logits, m)?.1)).collect())
        .collect::<fqkit_core::Result<_>>()?;
    let mut rows = Vec::new();
    for (i, ms) in per_instance.iter().enumerate() {
        for ((name, _), m) in modes.iter().zip(ms) {
            rows.push(metric_row(i.to_string(), name, m));
        }
    }
    let count = per_instance.len() as f64;
    for (j, (name, _)) in modes.iter().enumerate() {
        let mean = |f: fn(&DistortionMetrics) -> f64| per_instance.iter().map(|ms| f(&ms[j])).sum::<f64>() / count;
        let m = DistortionMetrics {
            l1_error: mean(|m| m.l1_error),
            argmax_shift_rate: mean(|m| m.argmax_shift_rate),
            peak_attenuation: mean(|m| m.peak_attenuation),
            effective_bins: per_instance[0][j].effective_bins,
        };
        rows.push(metric_row("mean".into(), name, &m));
    }
    Ok((
        vec!["instance", "mode", "l1_error", "argmax_shift_rate", "peak_attenuation", "effective_bins"],
        rows,
    ))
}

fn parse_size(s: &str) -> anyhow::Result<(usize, usize)> {
    let bad = || Usage(format!("table size '{s}' is not m1xm2"));
    let (a, b) = s.split_once('x').ok_or_else(bad)?;
    Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
}

fn ablation(a: &SimArgs) -> anyhow::Result<(Vec<&'static str>, Vec<Vec<String>>)> {
    let cfg = AblationConfig {
        suite: suite(a),
        k: a.k,
        anchor_counts: a.anchor_counts.clone(),
        n_values: a.n_values.clone(),
        dulut_sizes: a.dulut_sizes.iter().map(|s| parse_size(s)).collect::<anyhow::Result<_>>()?,
        dulut_functions: a
            .dulut_fns
            .iter()
            .map(|s| s.parse::<FunctionKind>())
            .collect::<fqkit_core::Result<_>>()?,
    };
    let rows = ablation_sweep(&cfg)?
        .into_iter()
        .map(|r| vec![r.sweep, r.setting, r.metric, g9(r.value)])
        .collect();
    Ok((vec!["sweep", "setting", "metric", "value"], rows))
}

pub fn run(a: SimArgs) -> anyhow::Result<Outcome> {
    let (header, rows) = match a.scenario {
        Scenario::Fusion => fusion(&a)?,
        Scenario::Attention => attention(&a)?,
        Scenario::Ablation => ablation(&a)?,
    };
    io::write_csv(&a.out, &header, &rows)?;
    println!("{} rows written to {}", rows.len(), a.out.display());
    Ok(Outcome {
        config: config_value(&a)?,
        inputs: Vec::new(),
        outputs: vec![a.out.clone()],
        primary: a.out.clone(),
        seed: a.common.seed,
        manifest: a.common.manifest.clone(),
    })
}
