pub mod build;
pub mod eval;
pub mod pe;
pub mod qans;
pub mod sim;

use fqkit_core::func::{FunctionKind, FunctionSpec};
use serde::{Deserialize, Serialize};

/// Function identity stored next to a pair so it can be re-evaluated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionMeta {
    pub name: String,
    pub domain: (f64, f64),
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<(f64, f64)>,
}

impl FunctionMeta {
    pub fn of(f: &FunctionSpec) -> Self {
        Self {
            name: f.kind().name().into(),
            domain: f.domain(),
            samples: f.samples().to_vec(),
        }
    }

    pub fn spec(&self) -> anyhow::Result<FunctionSpec> {
        resolve_function(&self.name, Some(self.domain), &self.samples)
    }
}

/// Builds a function from its name, an optional domain override and, for
/// `custom`, its samples.
pub fn resolve_function(
    name: &str,
    domain: Option<(f64, f64)>,
    samples: &[(f64, f64)],
) -> anyhow::Result<FunctionSpec> {
    let kind: FunctionKind = name.parse()?;
    Ok(match (kind, domain) {
        (FunctionKind::Custom, _) => FunctionSpec::custom(samples.to_vec())?,
        (k, Some((lo, hi))) => FunctionSpec::new(k, lo, hi)?,
        (k, None) => FunctionSpec::with_default_domain(k)?,
    })
}

pub fn config_value<T: Serialize>(v: &T) -> anyhow::Result<serde_json::Value> {
    Ok(serde_json::to_value(v)?)
}
