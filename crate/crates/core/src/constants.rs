//! Calibrated values for the universal constants the convergence results
//! leave unspecified.
//!
//! Each constant is fitted once on a calibration suite and frozen in a JSON
//! file. The bundled file is used unless [`CONSTANTS_ENV`] names another one.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const CONSTANTS_ENV: &str = "EOSGD_CONSTANTS";
pub const CONSTANTS_SCHEMA: &str = "eosgd.constants/1";

const BUNDLED: &str = include_str!("../constants.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub schema: String,
    /// Stepsize and regularization-gate constant of both stepsize rules.
    pub c1: f64,
    /// Phase-transition constant in both `τ` bounds.
    pub c2: f64,
    /// Stable-phase risk decay under the small-regularization rule.
    pub c3_risk_small_reg: f64,
    /// Stable-phase risk decay under the general-regularization rule
    /// (the bound is `C₃/η · e^{−λη(t−τ̂)}`).
    pub c3_risk_general_reg: f64,
    /// Stable-phase parameter decay.
    pub c3_param: f64,
    /// Loss sandwich `1/(Ct) ≤ L(w_t) ≤ C/t` and `‖w_t‖ ≤ C ln t` on the hard dataset.
    pub sandwich_c: f64,
    /// Constant of the one-dimensional step budget.
    pub budget_1d_c: f64,
    /// Adaptive GD stops at `⌈K/γ²⌉` steps.
    pub adaptive_k: f64,
    /// How each value was obtained.
    #[serde(default)]
    pub provenance: Vec<String>,
}

impl Constants {
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED).expect("bundled constants file parses")
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        if c.schema != CONSTANTS_SCHEMA {
            return Err(Error::Format(format!("unexpected constants schema {:?}", c.schema)));
        }
        let vals = [
            c.c1,
            c.c2,
            c.c3_risk_small_reg,
            c.c3_risk_general_reg,
            c.c3_param,
            c.sandwich_c,
            c.budget_1d_c,
            c.adaptive_k,
        ];
        if vals.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Format("constants must be finite and positive".into()));
        }
        Ok(c)
    }

    /// The file named by `EOSGD_CONSTANTS`, else the bundled calibration.
    pub fn load() -> Result<Self> {
        match std::env::var_os(CONSTANTS_ENV) {
            Some(p) if !p.is_empty() => Self::from_path(Path::new(&p)),
            _ => Ok(Self::bundled()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("constants serialize") + "\n"
    }

    /// SHA-256 of the canonical JSON encoding, for output metadata.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_parses_and_roundtrips() {
        let c = Constants::bundled();
        assert_eq!(Constants::from_json(&c.to_json()).unwrap(), c);
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = Constants::bundled();
        c.c2 = -1.0;
        assert!(Constants::from_json(&c.to_json()).is_err());
        let mut c = Constants::bundled();
        c.schema = "other".into();
        assert!(Constants::from_json(&c.to_json()).is_err());
    }
}
