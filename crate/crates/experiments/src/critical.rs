//! Critical-stepsize scans across a regularization grid.

use std::collections::BTreeMap;

use eosgd_core::analysis::{find_critical_stepsize, CriticalReport, InitPolicy};
use eosgd_core::{Constants, Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emit::{cell_f, PlotPoint, Tabular};
use crate::source::DatasetSource;

pub const CRITICAL_SCHEMA: &str = "eosgd.critical/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CriticalConfig {
    pub dataset: DatasetSource,
    pub lambda_grid: Vec<f64>,
    pub w0_policy: InitPolicy,
    pub horizon: usize,
    pub tol: f64,
}

impl Default for CriticalConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::Hard { gamma: 0.099 },
            lambda_grid: vec![1e-2, 1e-3, 1e-4, 1e-5],
            w0_policy: InitPolicy::RandomBall { radius_factor: 0.1, seed: 0, seeds: 5 },
            horizon: 2_000_000,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalScan {
    pub reports: Vec<CriticalReport>,
    /// `η_convergent_max · λ ln(1/λ)` per row.
    pub normalized: Vec<f64>,
    /// Largest over smallest normalized value.
    pub band_ratio: f64,
    /// Every bracket's divergent end is at most `2.01/λ`.
    pub divergent_below_ceiling: bool,
}

pub fn critical_scan(cfg: &CriticalConfig, constants: &Constants) -> Result<CriticalScan> {
    if cfg.lambda_grid.is_empty() {
        return Err(Error::Domain("lambda grid must be nonempty".into()));
    }
    let ds = cfg.dataset.load()?;
    let reports = cfg
        .lambda_grid
        .par_iter()
        .map(|&lambda| find_critical_stepsize(&ds, lambda, cfg.w0_policy, cfg.horizon, cfg.tol, constants))
        .collect::<Result<Vec<_>>>()?;
    let normalized: Vec<f64> =
        reports.iter().map(|r| r.eta_convergent_max * r.lambda * (1.0 / r.lambda).ln()).collect();
    let hi = normalized.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = normalized.iter().copied().fold(f64::INFINITY, f64::min);
    let divergent_below_ceiling = reports.iter().all(|r| r.eta_divergent_min <= 2.01 / r.lambda * (1.0 + 1e-12));
    Ok(CriticalScan { reports, normalized, band_ratio: hi / lo, divergent_below_ceiling })
}

impl Tabular for CriticalScan {
    const SCHEMA: &'static str = CRITICAL_SCHEMA;

    fn columns(&self) -> Vec<&'static str> {
        vec![
            "lambda",
            "eta_formula",
            "eta_start",
            "eta_start_rule",
            "eta_convergent_max",
            "eta_divergent_min",
            "bracket_ratio",
            "normalized",
            "indeterminate",
            "horizon",
        ]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.reports
            .iter()
            .zip(&self.normalized)
            .map(|(r, nrm)| {
                vec![
                    cell_f(r.lambda),
                    cell_f(r.eta_formula),
                    cell_f(r.eta_start),
                    r.eta_start_rule.clone(),
                    cell_f(r.eta_convergent_max),
                    cell_f(r.eta_divergent_min),
                    cell_f(r.bracket_ratio),
                    cell_f(*nrm),
                    r.indeterminate.iter().map(|e| cell_f(*e)).collect::<Vec<_>>().join(" "),
                    r.horizon.to_string(),
                ]
            })
            .collect()
    }

    fn notes(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("band_ratio".into(), cell_f(self.band_ratio));
        m.insert("divergent_below_ceiling".into(), self.divergent_below_ceiling.to_string());
        m
    }

    fn plot(&self) -> Vec<PlotPoint> {
        self.reports
            .iter()
            .flat_map(|r| {
                [
                    PlotPoint::new("eta_convergent_max", r.lambda, r.eta_convergent_max),
                    PlotPoint::new("eta_divergent_min", r.lambda, r.eta_divergent_min),
                    PlotPoint::new("eta_formula", r.lambda, r.eta_formula),
                ]
            })
            .collect()
    }
}
