//! Target functions for table building, with their second derivatives.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionKind {
    Exp,
    Silu,
    Gelu,
    Sigmoid,
    InverseSigmoid,
    Identity,
    Custom,
}

impl FunctionKind {
    pub const BUILTIN: [FunctionKind; 6] = [
        FunctionKind::Exp,
        FunctionKind::Silu,
        FunctionKind::Gelu,
        FunctionKind::Sigmoid,
        FunctionKind::InverseSigmoid,
        FunctionKind::Identity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FunctionKind::Exp => "exp",
            FunctionKind::Silu => "silu",
            FunctionKind::Gelu => "gelu",
            FunctionKind::Sigmoid => "sigmoid",
            FunctionKind::InverseSigmoid => "inverse_sigmoid",
            FunctionKind::Identity => "identity",
            FunctionKind::Custom => "custom",
        }
    }

    /// Input interval used when none is given. Exp covers stabilized softmax
    /// inputs, below -20 the result is negligible.
    pub fn default_domain(self) -> Option<(f64, f64)> {
        match self {
            FunctionKind::Exp => Some((-20.0, 0.0)),
            FunctionKind::Silu | FunctionKind::Gelu | FunctionKind::Sigmoid => Some((-8.0, 8.0)),
            FunctionKind::InverseSigmoid => Some((0.01, 0.99)),
            FunctionKind::Identity => Some((-1.0, 1.0)),
            FunctionKind::Custom => None,
        }
    }
}

impl fmt::Display for FunctionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FunctionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        [FunctionKind::Custom]
            .into_iter()
            .chain(FunctionKind::BUILTIN)
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::UnknownFunction(s.to_string()))
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// A scalar function on a real input interval.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionSpec {
    kind: FunctionKind,
    domain_lo: f64,
    domain_hi: f64,
    /// Sorted `(x, f(x))` pairs, only for `Custom`.
    samples: Vec<(f64, f64)>,
}

impl FunctionSpec {
    pub fn new(kind: FunctionKind, domain_lo: f64, domain_hi: f64) -> Result<Self> {
        if kind == FunctionKind::Custom {
            return Err(Error::InvalidParam(
                "custom functions are built from samples".into(),
            ));
        }
        if !(domain_lo.is_finite() && domain_hi.is_finite() && domain_lo < domain_hi) {
            return Err(Error::InvalidParam(format!(
                "domain [{domain_lo}, {domain_hi}] is empty"
            )));
        }
        if kind == FunctionKind::InverseSigmoid && (domain_lo <= 0.0 || domain_hi >= 1.0) {
            return Err(Error::InvalidParam(
                "inverse_sigmoid domain must lie inside (0, 1)".into(),
            ));
        }
        Ok(Self {
            kind,
            domain_lo,
            domain_hi,
            samples: Vec::new(),
        })
    }

    pub fn with_default_domain(kind: FunctionKind) -> Result<Self> {
        let (lo, hi) = kind
            .default_domain()
            .ok_or_else(|| Error::InvalidParam(format!("{kind} has no default domain")))?;
        Self::new(kind, lo, hi)
    }

    /// Piecewise-linear function through `samples`; the domain is their x span.
    pub fn custom(mut samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidParam("custom function needs >= 2 samples".into()));
        }
        if samples.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::NonFinite("custom samples"));
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        if samples.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidParam("duplicate x in custom samples".into()));
        }
        Ok(Self {
            kind: FunctionKind::Custom,
            domain_lo: samples[0].0,
            domain_hi: samples[samples.len() - 1].0,
            samples,
        })
    }

    pub fn kind(&self) -> FunctionKind {
        self.kind
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.domain_lo, self.domain_hi)
    }

    /// Interpolation points of a custom function; empty for builtins.
    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn clamp_to_domain(&self, x: f64) -> f64 {
        x.clamp(self.domain_lo, self.domain_hi)
    }

    /// Custom functions need at least one sample per input code.
    pub fn check_resolution(&self, i_bit: u32) -> Result<()> {
        if self.kind == FunctionKind::Custom && self.samples.len() < 1usize << i_bit {
            return Err(Error::InvalidParam(format!(
                "custom function has {} samples, {}-bit input needs >= {}",
                self.samples.len(),
                i_bit,
                1usize << i_bit
            )));
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.kind {
            FunctionKind::Exp => x.exp(),
            FunctionKind::Silu => x * sigmoid(x),
            FunctionKind::Gelu => 0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2)),
            FunctionKind::Sigmoid => sigmoid(x),
            FunctionKind::InverseSigmoid => (x / (1.0 - x)).ln(),
            FunctionKind::Identity => x,
            FunctionKind::Custom => self.interp(x),
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match self.kind {
            FunctionKind::Exp => x.exp(),
            FunctionKind::Silu => {
                let s = sigmoid(x);
                s * (1.0 - s) * (2.0 + x * (1.0 - 2.0 * s))
            }
            FunctionKind::Gelu => {
                let phi = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
                phi * (2.0 - x * x)
            }
            FunctionKind::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s) * (1.0 - 2.0 * s)
            }
            FunctionKind::InverseSigmoid => (2.0 * x - 1.0) / (x * x * (1.0 - x) * (1.0 - x)),
            FunctionKind::Identity => 0.0,
            FunctionKind::Custom => {
                // Central difference at the sample spacing of the interpolant.
                let h = (self.domain_hi - self.domain_lo) / (self.samples.len() - 1) as f64;
                let x = x.clamp(self.domain_lo + h, self.domain_hi - h);
                (self.interp(x + h) - 2.0 * self.interp(x) + self.interp(x - h)) / (h * h)
            }
        }
    }

    fn interp(&self, x: f64) -> f64 {
        let s = &self.samples;
        let x = self.clamp_to_domain(x);
        let i = s.partition_point(|p| p.0 <= x).clamp(1, s.len() - 1);
        let (x0, y0) = s[i - 1];
        let (x1, y1) = s[i];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}
