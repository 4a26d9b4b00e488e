use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use fqkit_core::dulut::ErrorProfile;
use fqkit_core::func::FunctionSpec;
use fqkit_core::lut::{decode_pair, decode_table, CodeMap, DulutPair, LutTable};
use serde::{Deserialize, Serialize};

use super::{config_value, resolve_function, FunctionMeta};
use crate::io::{self, g9};
use crate::{Common, Outcome, Usage};

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    /// pair.json, a table JSON, or an FQDP/FQLT binary.
    #[arg(long)]
    pub table: PathBuf,
    /// CSV of input codes (first column, optional header); all codes if omitted.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Reference function; defaults to the one recorded in pair.json.
    #[arg(long = "fn")]
    pub function: Option<String>,
    #[arg(long, value_parser = io::parse_domain, allow_hyphen_values = true)]
    pub domain: Option<(f64, f64)>,
    /// Scales for a bare table (pairs carry their own).
    #[arg(long)]
    pub in_scale: Option<f64>,
    #[arg(long)]
    pub out_scale: Option<f64>,
    #[arg(long, default_value = "eval.csv")]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

enum Loaded {
    Pair(DulutPair, Option<FunctionMeta>),
    Table(LutTable),
}

#[derive(Deserialize)]
struct PairMeta {
    function: Option<FunctionMeta>,
}

fn load(path: &Path) -> anyhow::Result<Loaded> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(match bytes.get(..4) {
        Some(b"FQDP") => Loaded::Pair(decode_pair(&bytes)?, None),
        Some(b"FQLT") => Loaded::Table(decode_table(&bytes)?),
        _ => {
            let v: serde_json::Value =
                serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))?;
            if v.get("table1").is_some() {
                let meta: PairMeta = serde_json::from_value(v.clone())?;
                Loaded::Pair(serde_json::from_value(v)?, meta.function)
            } else {
                Loaded::Table(serde_json::from_value(v)?)
            }
        }
    })
}

fn reference(a: &EvalArgs, meta: Option<&FunctionMeta>, code_range: (f64, f64)) -> anyhow::Result<FunctionSpec> {
    match (&a.function, meta) {
        (Some(name), m) => {
            let samples = m.map(|m| m.samples.clone()).unwrap_or_default();
            let domain = a.domain.or(m.filter(|m| &m.name == name).map(|m| m.domain));
            resolve_function(name, domain.or(Some(code_range)), &samples)
        }
        (None, Some(m)) => match a.domain {
            Some(d) => resolve_function(&m.name, Some(d), &m.samples),
            None => m.spec(),
        },
        (None, None) => Err(Usage("no function recorded with this table; pass --fn".into()).into()),
    }
}

pub fn run(a: EvalArgs) -> anyhow::Result<Outcome> {
    let loaded = load(&a.table)?;
    let (map, in_scale, out_scale, meta): (Box<dyn CodeMap>, f64, f64, Option<FunctionMeta>) = match loaded {
        Loaded::Pair(p, meta) => {
            let (i, o) = (p.in_scale(), p.out_scale());
            (Box::new(p), i, o, meta)
        }
        Loaded::Table(t) => (Box::new(t), a.in_scale.unwrap_or(1.0), a.out_scale.unwrap_or(1.0), None),
    };
    let (lo, hi) = map.input_range();
    let f = reference(&a, meta.as_ref(), (f64::from(lo) * in_scale, f64::from(hi) * in_scale))?;
    let prof = ErrorProfile::measure(&f, map.as_ref(), in_scale, out_scale, None)?;

    let codes: Vec<i32> = match &a.input {
        Some(p) => io::parse_numeric_csv::<i32>(&io::read_text(p)?, "input codes")?
            .into_iter()
            .map(|r| r[0])
            .collect(),
        None => (lo..=hi).collect(),
    };
    let rows = codes
        .iter()
        .map(|&c| {
            if c < lo || c > hi {
                anyhow::bail!("input code {c} outside the table's range [{lo}, {hi}]");
            }
            let u = (c - lo) as usize;
            Ok(vec![
                c.to_string(),
                prof.outputs[u].to_string(),
                g9(prof.real_in[u]),
                g9(prof.real_out[u]),
                g9(prof.abs_err[u]),
                g9(prof.rel_err[u]),
            ])
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    io::write_csv(&a.out, &["code_in", "code_out", "real_in", "real_out", "abs_err", "rel_err"], &rows)?;

    let mut inputs = vec![a.table.clone()];
    inputs.extend(a.input.clone());
    Ok(Outcome {
        config: config_value(&a)?,
        inputs,
        outputs: vec![a.out.clone()],
        primary: a.out.clone(),
        seed: a.common.seed,
        manifest: a.common.manifest.clone(),
    })
}
