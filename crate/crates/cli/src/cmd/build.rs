use std::path::PathBuf;

use clap::{Args, ValueEnum};
use fqkit_core::dulut::{
    build_dulut, build_linear_lut, curvature_only_merge, input_scale, pair_report, segment_diagnostics, BuildConfig,
    ErrorReport,
};
use fqkit_core::lut::{encode_pair, DulutPair, LutTable};
use serde::Serialize;

use super::{config_value, resolve_function, FunctionMeta};
use crate::io::{self, g9};
use crate::{Common, Outcome, Usage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Error-driven allocation of table2 knots.
    Dulut,
    /// Merge by curvature alone, ignoring hardware resolution.
    CurvatureOnly,
    /// A single uniform table of `m2` segments behind an identity mapper.
    Linear,
}

#[derive(Args, Debug, Serialize)]
pub struct BuildArgs {
    /// exp, silu, gelu, sigmoid, inverse_sigmoid, identity or custom.
    #[arg(long = "fn")]
    pub function: String,
    #[arg(long, default_value_t = 8)]
    pub i_bit: u32,
    #[arg(long, default_value_t = 32)]
    pub m1: usize,
    #[arg(long, default_value_t = 32)]
    pub m2: usize,
    /// Real input domain `lo:hi`; defaults to the function's.
    #[arg(long, value_parser = io::parse_domain, allow_hyphen_values = true)]
    pub domain: Option<(f64, f64)>,
    #[arg(long, default_value_t = 1e-3)]
    pub delta: f64,
    #[arg(long, default_value_t = 1024)]
    pub max_iters: usize,
    #[arg(long)]
    pub k_hw: Option<u32>,
    /// Input scale; defaults to symmetric calibration of the domain.
    #[arg(long)]
    pub in_scale: Option<f64>,
    #[arg(long, value_enum, default_value_t = Method::Dulut)]
    pub method: Method,
    /// `x,y` samples for `--fn custom`.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    #[arg(long, default_value = "pair.json")]
    pub out: PathBuf,
    /// Per-segment CSV; defaults to report.csv next to `--out`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Binary dump; defaults to pair.bin next to `--out`.
    #[arg(long)]
    pub bin: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Serialize)]
struct PairFile<'a> {
    #[serde(flatten)]
    pair: &'a DulutPair,
    function: FunctionMeta,
    method: Method,
    report: &'a ErrorReport,
}

fn read_samples(path: &PathBuf) -> anyhow::Result<Vec<(f64, f64)>> {
    let rows: Vec<Vec<f64>> = io::parse_numeric_csv(&io::read_text(path)?, "samples")?;
    rows.into_iter()
        .map(|r| match r[..] {
            [x, y] => Ok((x, y)),
            _ => anyhow::bail!(Usage("samples CSV needs exactly two columns x,y".into())),
        })
        .collect()
}

pub fn run(a: BuildArgs) -> anyhow::Result<Outcome> {
    let samples = match &a.samples {
        Some(p) => read_samples(p)?,
        None => Vec::new(),
    };
    let f = resolve_function(&a.function, a.domain, &samples)?;
    let in_scale = match a.in_scale {
        Some(s) => s,
        None => input_scale(&f, a.i_bit)?,
    };
    let cfg = BuildConfig {
        b: a.i_bit,
        k_hw: a.k_hw,
        m1: a.m1,
        m2: a.m2,
        delta: a.delta,
        max_iters: a.max_iters,
        are_epsilon: None,
    };
    let (pair, report) = match a.method {
        Method::Dulut => build_dulut(&f, &cfg, in_scale)?,
        Method::CurvatureOnly => curvature_only_merge(&f, &cfg, in_scale)?,
        Method::Linear => {
            cfg.validate()?;
            let (t2, out_scale) = build_linear_lut(&f, a.i_bit, a.m2.trailing_zeros(), in_scale)?;
            let t1 = LutTable::identity(a.m1.trailing_zeros(), a.i_bit)?;
            let pair = DulutPair::new(t1, t2, in_scale, out_scale)?;
            let report = pair_report(&f, &pair, None)?;
            (pair, report)
        }
    };

    let report_path = a.report.clone().unwrap_or_else(|| io::sibling(&a.out, "report.csv"));
    let bin_path = a.bin.clone().unwrap_or_else(|| io::sibling(&a.out, "pair.bin"));
    io::write_json(
        &a.out,
        &PairFile {
            pair: &pair,
            function: FunctionMeta::of(&f),
            method: a.method,
            report: &report,
        },
    )?;
    let rows: Vec<Vec<String>> = segment_diagnostics(&f, &pair, None)?
        .into_iter()
        .map(|d| {
            vec![
                d.index.to_string(),
                d.lo_code.to_string(),
                d.hi_code.to_string(),
                g9(d.are),
                g9(d.bound_eq4),
            ]
        })
        .collect();
    io::write_csv(&report_path, &["segment_index", "lo_code", "hi_code", "are", "bound_eq4"], &rows)?;
    io::write_bytes(&bin_path, &encode_pair(&pair))?;
    println!(
        "{} {}: global max ARE {} after {} moves",
        a.function,
        a.method.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default(),
        g9(report.global_max_are),
        report.iterations_used
    );

    let mut inputs = Vec::new();
    inputs.extend(a.samples.clone());
    Ok(Outcome {
        config: config_value(&a)?,
        inputs,
        outputs: vec![a.out.clone(), report_path, bin_path],
        primary: a.out.clone(),
        seed: a.common.seed,
        manifest: a.common.manifest.clone(),
    })
}
