use std::path::PathBuf;

use clap::Args;
use fqkit_core::qans::{qans_softmax, ErrorNorm, QansConfig};
use fqkit_core::Tensor;
use serde::Serialize;

use super::config_value;
use crate::io::{self, g9};
use crate::{Common, Outcome, Usage};

/// Wide-range attention logits shipped with the tool, 16 rows of 64 keys.
pub const SAMPLE_LOGITS: &str = include_str!("../../data/sample_logits.csv");

#[derive(Args, Debug, Serialize)]
pub struct QansArgs {
    /// Logits CSV, one row per softmax row; the bundled sample if omitted.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub k: u32,
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    /// l1 or l2.
    #[arg(long, default_value = "l1")]
    pub norm: String,
    /// Skip the search and use this candidate.
    #[arg(long)]
    pub frozen_i: Option<usize>,
    /// Summary JSON.
    #[arg(long, default_value = "qans.json")]
    pub out: PathBuf,
    /// Per-candidate CSV; defaults to qans.csv next to `--out`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Serialize)]
struct Summary {
    rows: usize,
    cols: usize,
    k: u32,
    n: usize,
    norm: ErrorNorm,
    selected_i: usize,
    selected_scale: f64,
    selected_error: f64,
    per_candidate_error: Vec<f64>,
}

pub fn load_logits(text: &str) -> anyhow::Result<Tensor> {
    let rows: Vec<Vec<f64>> = io::parse_numeric_csv(text, "logits")?;
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 {
        anyhow::bail!("logits CSV is empty");
    }
    if rows.iter().any(|r| r.len() != cols) {
        anyhow::bail!("logits rows have different lengths");
    }
    Ok(Tensor::new(vec![rows.len(), cols], rows.concat())?)
}

pub fn run(a: QansArgs) -> anyhow::Result<Outcome> {
    let norm: ErrorNorm = a.norm.parse().map_err(|e| Usage(format!("{e}")))?;
    let cfg = QansConfig {
        frozen_i: a.frozen_i,
        ..QansConfig::new(a.k, a.n, norm)?
    };
    let text = match &a.input {
        Some(p) => io::read_text(p)?,
        None => SAMPLE_LOGITS.to_string(),
    };
    let logits = load_logits(&text)?;
    let r = qans_softmax(&logits, &cfg)?;

    let report = a.report.clone().unwrap_or_else(|| io::sibling(&a.out, "qans.csv"));
    let rows: Vec<Vec<String>> = r
        .per_candidate_error
        .iter()
        .enumerate()
        .map(|(j, &e)| {
            let i = j + 1;
            vec![
                i.to_string(),
                g9(cfg.scale(i)),
                g9(e),
                u8::from(i == r.selected_i).to_string(),
            ]
        })
        .collect();
    io::write_csv(&report, &["candidate_i", "scale", "error", "selected"], &rows)?;
    io::write_json(
        &a.out,
        &Summary {
            rows: logits.shape()[0],
            cols: logits.shape()[1],
            k: a.k,
            n: a.n,
            norm,
            selected_i: r.selected_i,
            selected_scale: r.selected_scale,
            selected_error: r.per_candidate_error[r.selected_i - 1],
            per_candidate_error: r.per_candidate_error.clone(),
        },
    )?;
    println!(
        "selected i = {} (scale {}), error {}",
        r.selected_i,
        g9(r.selected_scale),
        g9(r.per_candidate_error[r.selected_i - 1])
    );

    Ok(Outcome {
        config: config_value(&a)?,
        inputs: a.input.iter().cloned().collect(),
        outputs: vec![a.out.clone(), report],
        primary: a.out.clone(),
        seed: a.common.seed,
        manifest: a.common.manifest.clone(),
    })
}
