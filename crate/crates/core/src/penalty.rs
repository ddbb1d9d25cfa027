//! Folded-concave penalties (SCAD and MCP).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default SCAD/MCP shape parameter.
pub const DEFAULT_SCAD_A: f64 = 3.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyFamily {
    Scad,
    Mcp,
}

impl std::str::FromStr for PenaltyFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "scad" => Ok(PenaltyFamily::Scad),
            "mcp" => Ok(PenaltyFamily::Mcp),
            other => Err(Error::invalid(format!("unknown penalty family `{other}`"))),
        }
    }
}

/// A penalty family with its shape `a` and level `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub family: PenaltyFamily,
    pub a: f64,
    pub lambda: f64,
}

impl PenaltySpec {
    pub fn new(family: PenaltyFamily, a: f64, lambda: f64) -> Result<Self> {
        let min_a = match family {
            PenaltyFamily::Scad => 2.0,
            PenaltyFamily::Mcp => 1.0,
        };
        if !(a > min_a) || !a.is_finite() {
            return Err(Error::invalid(format!(
                "{family:?} requires a > {min_a}, got {a}"
            )));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(Self { family, a, lambda })
    }

    pub fn scad(lambda: f64) -> Result<Self> {
        Self::new(PenaltyFamily::Scad, DEFAULT_SCAD_A, lambda)
    }

    /// Same family and shape at a different level.
    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    /// `p′λ(t)` for `t ≥ 0`. At the kinks the left derivative is used.
    #[inline]
    pub fn deriv(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0);
        let (a, lam) = (self.a, self.lambda);
        match self.family {
            PenaltyFamily::Scad => {
                if t <= lam {
                    lam
                } else if t < a * lam {
                    (a * lam - t) / (a - 1.0)
                } else {
                    0.0
                }
            }
            PenaltyFamily::Mcp => (lam - t / a).max(0.0),
        }
    }

    /// `pλ(t)` for `t ≥ 0`.
    pub fn value(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0);
        let (a, lam) = (self.a, self.lambda);
        match self.family {
            PenaltyFamily::Scad => {
                if t <= lam {
                    lam * t
                } else if t < a * lam {
                    (2.0 * a * lam * t - t * t - lam * lam) / (2.0 * (a - 1.0))
                } else {
                    0.5 * (a + 1.0) * lam * lam
                }
            }
            PenaltyFamily::Mcp => {
                if t <= a * lam {
                    lam * t - t * t / (2.0 * a)
                } else {
                    0.5 * a * lam * lam
                }
            }
        }
    }
}

/// Checked `p′λ(t)`; negative `t` is rejected.
pub fn penalty_deriv(spec: &PenaltySpec, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::invalid(format!("penalty argument must be >= 0, got {t}")));
    }
    Ok(spec.deriv(t))
}

/// Checked `pλ(t)`; negative `t` is rejected.
pub fn penalty_value(spec: &PenaltySpec, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::invalid(format!("penalty argument must be >= 0, got {t}")));
    }
    Ok(spec.value(t))
}
