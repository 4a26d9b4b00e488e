use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use fqkit_core::posembed::{magnitude_report, ray_grid, AnchorAxisSet, MlpSpec, PeKind, PerceptionRange};
use serde::{Deserialize, Serialize};

use super::config_value;
use crate::io::{self, g9};
use crate::{Common, Outcome, Usage};

#[derive(Args, Debug, Serialize)]
pub struct PeArgs {
    /// camera-ray or qfpe.
    #[arg(long)]
    pub kind: String,
    /// JSON overrides for [`PeConfig`].
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "pe_report.csv")]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

/// Embedding setup. Random weights and anchors are drawn from the seed
/// unless given explicitly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeConfig {
    /// Depth samples per camera ray; the MLP input is three per depth.
    pub depths: usize,
    pub hidden: usize,
    pub d_out: usize,
    pub mlp_gamma: f64,
    pub anchor_count: usize,
    /// Embedding width per axis.
    pub anchor_dim: usize,
    pub anchor_gamma: f64,
    pub anchors: Option<AnchorAxisSet>,
    pub mlp: Option<MlpSpec>,
    pub range: PerceptionRange,
    pub azimuths: usize,
    pub elevations: usize,
}

impl Default for PeConfig {
    fn default() -> Self {
        Self {
            depths: 64,
            hidden: 256,
            d_out: 256,
            mlp_gamma: 0.05,
            anchor_count: 4,
            anchor_dim: 64,
            anchor_gamma: 2.6,
            anchors: None,
            mlp: None,
            range: PerceptionRange::default(),
            azimuths: 72,
            elevations: 9,
        }
    }
}

pub fn run(a: PeArgs) -> anyhow::Result<Outcome> {
    let kind: PeKind = a.kind.parse().map_err(|e| Usage(format!("{e}")))?;
    let cfg: PeConfig = match &a.config {
        Some(p) => serde_json::from_str(&io::read_text(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => PeConfig::default(),
    };
    let anchors = match (&cfg.anchors, kind) {
        (Some(s), _) => Some(s.clone()),
        (None, PeKind::Qfpe) => Some(AnchorAxisSet::random(
            a.common.seed.wrapping_add(1),
            cfg.anchor_count,
            cfg.anchor_dim,
            cfg.anchor_gamma,
        )?),
        (None, PeKind::CameraRay) => None,
    };
    let mlp = match &cfg.mlp {
        Some(m) => m.clone(),
        None => {
            let d_in = match (kind, &anchors) {
                (PeKind::Qfpe, Some(s)) => s.dim(),
                _ => 3 * cfg.depths,
            };
            MlpSpec::random(a.common.seed, d_in, cfg.hidden, cfg.d_out, cfg.mlp_gamma)?
        }
    };
    let rays = ray_grid(cfg.azimuths, cfg.elevations);
    let r = magnitude_report(&mlp, kind, anchors.as_ref(), &cfg.range, &rays)?;

    let rows: Vec<Vec<String>> = [
        ("kind", a.kind.clone()),
        ("stage1_max", g9(r.stage1_max)),
        ("eta_max", g9(r.eta_max)),
        ("mlp_gamma", g9(r.mlp_gamma)),
        ("d_in", r.d_in.to_string()),
        ("hidden", r.hidden.to_string()),
        ("analytic_bound", g9(r.analytic_bound)),
        ("reference_bound", g9(r.reference_bound)),
        ("reference_ratio", g9(r.reference_ratio)),
        ("empirical_max", g9(r.empirical_max)),
        ("grid_points", r.grid_points.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| vec![k.to_string(), v])
    .collect();
    io::write_csv(&a.out, &["metric", "value"], &rows)?;
    println!(
        "{}: eta_max {}, bound {}, measured max {}",
        a.kind,
        g9(r.eta_max),
        g9(r.analytic_bound),
        g9(r.empirical_max)
    );

    let mut config = config_value(&a)?;
    config["resolved"] = config_value(&cfg)?;
    Ok(Outcome {
        config,
        inputs: a.config.iter().cloned().collect(),
        outputs: vec![a.out.clone()],
        primary: a.out.clone(),
        seed: a.common.seed,
        manifest: a.common.manifest.clone(),
    })
}
