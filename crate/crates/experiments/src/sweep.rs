//! Step complexity as a function of the regularization strength.

use std::collections::BTreeMap;

use eosgd_core::analysis::{
    eta_general_reg, eta_small_reg, general_reg_gate, small_reg_gate, tau_shape_general_reg, tau_shape_small_reg,
    DatasetMeta,
};
use eosgd_core::optimizers::{summarize_gd, ConvergenceTest, Regime, TerminalStatus};
use eosgd_core::reference::{solve_minimizer, DEFAULT_TOL};
use eosgd_core::{Constants, Error, GDConfig, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emit::{cell_f, cell_json, cell_opt_u, PlotPoint, Tabular};
use crate::source::DatasetSource;

pub const SWEEP_SCHEMA: &str = "eosgd.sweep/1";

/// How the stepsize is chosen for each `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum EtaRule {
    Fixed { value: f64 },
    /// `min{γ/√(C₁λ), γ²/(C₁nλ)}`, gated by `λ ≤ γ²/(C₁ n ln n)`.
    SmallReg,
    /// `(γ²/(C₁λ))^{1/3}`, gated by `λ ≤ γ²/C₁`.
    GeneralReg,
    /// `1/(1 + λ)`.
    InverseSmoothness,
}

impl EtaRule {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Fixed { .. } => "fixed",
            Self::SmallReg => "small_reg",
            Self::GeneralReg => "general_reg",
            Self::InverseSmoothness => "inverse_smoothness",
        }
    }

    /// The stepsize, or the reason the rule's gate rejects `λ`.
    pub fn stepsize(&self, meta: DatasetMeta, lambda: f64, c1: f64) -> std::result::Result<f64, String> {
        match *self {
            Self::Fixed { value } => Ok(value),
            Self::InverseSmoothness => Ok(1.0 / (1.0 + lambda)),
            Self::SmallReg => {
                if small_reg_gate(meta.gamma, meta.n, lambda, c1) {
                    Ok(eta_small_reg(meta.gamma, meta.n, lambda, c1))
                } else {
                    Err(format!("lambda {lambda} exceeds gamma^2/(C1 n ln n)"))
                }
            }
            Self::GeneralReg => {
                if general_reg_gate(meta.gamma, lambda, c1) {
                    Ok(eta_general_reg(meta.gamma, lambda, c1))
                } else {
                    Err(format!("lambda {lambda} exceeds gamma^2/C1"))
                }
            }
        }
    }

    /// Whether the rule comes with a phase-transition guarantee.
    pub fn is_certified(&self) -> bool {
        matches!(self, Self::SmallReg | Self::GeneralReg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub dataset: DatasetSource,
    pub lambda_grid: Vec<f64>,
    pub eta_rule: EtaRule,
    pub eps: f64,
    /// Seeds replacing the seed of a random dataset source, one row per
    /// seed and `λ`. Empty keeps the source's own seed.
    pub seeds: Vec<u64>,
    pub horizon: usize,
    /// Leave the two largest `λ` out of the exponent fit.
    pub drop_largest_two: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::Separable { n: 2, d: 2, gamma: 0.5, seed: 0 },
            lambda_grid: vec![1e-3, 1e-4, 1e-5, 1e-6],
            eta_rule: EtaRule::SmallReg,
            eps: 1e-8,
            seeds: vec![],
            horizon: 50_000_000,
            drop_largest_two: false,
        }
    }
}

impl SweepConfig {
    pub fn check(&self) -> Result<()> {
        if self.lambda_grid.is_empty() {
            return Err(Error::Domain("lambda grid must be nonempty".into()));
        }
        if self.lambda_grid.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Domain("every lambda must be positive".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Domain("eps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub seed: Option<u64>,
    pub gamma: f64,
    pub n: usize,
    /// Absent when the rule's gate skipped the row.
    pub eta: Option<f64>,
    pub skipped: Option<String>,
    /// The rule carries a phase-transition guarantee and its gate held.
    pub certified: bool,
    pub status: Option<TerminalStatus>,
    pub steps_run: usize,
    pub steps_to_eps: Option<usize>,
    pub tau_empirical: Option<usize>,
    pub regime: Option<Regime>,
    pub converged: bool,
    pub min_risk: f64,
    pub tau_shape_small_reg: Option<f64>,
    pub tau_shape_general_reg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
    pub points: usize,
}

/// Ordinary least squares of `ln y` on `ln x`.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Option<LogLogFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Some(LogLogFit { slope, intercept, residual: (rss / k).sqrt(), points: lx.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub eta_rule: EtaRule,
    pub eps: f64,
    pub rows: Vec<SweepRow>,
    /// Slope of `ln(steps)` against `ln(1/λ)`; needs three converged rows.
    pub fitted_exponent: Option<f64>,
    pub fit_residual: Option<f64>,
    pub fit_points: usize,
    pub drop_rule: String,
}

/// Runs GD to `R − min R ≤ eps` for every `(λ, seed)` and fits the exponent.
pub fn sweep_step_complexity(cfg: &SweepConfig, constants: &Constants) -> Result<SweepResult> {
    cfg.check()?;
    let seeds: Vec<Option<u64>> = match cfg.dataset.seed() {
        Some(_) if !cfg.seeds.is_empty() => cfg.seeds.iter().map(|&s| Some(s)).collect(),
        _ => vec![None],
    };
    let jobs: Vec<(f64, Option<u64>)> =
        cfg.lambda_grid.iter().flat_map(|&l| seeds.iter().map(move |&s| (l, s))).collect();
    let mut rows = jobs
        .par_iter()
        .map(|&(lambda, seed)| sweep_row(cfg, constants, lambda, seed))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| b.lambda.total_cmp(&a.lambda).then(a.seed.cmp(&b.seed)));

    let mut lambdas: Vec<f64> = rows.iter().map(|r| r.lambda).collect();
    lambdas.dedup();
    let dropped: Vec<f64> = if cfg.drop_largest_two { lambdas.iter().take(2).copied().collect() } else { vec![] };
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| !dropped.contains(&r.lambda))
        .filter_map(|r| r.steps_to_eps.filter(|&s| r.converged && s > 0).map(|s| (1.0 / r.lambda, s as f64)))
        .unzip();
    let fit = if xs.len() >= 3 { fit_loglog(&xs, &ys) } else { None };
    Ok(SweepResult {
        eta_rule: cfg.eta_rule,
        eps: cfg.eps,
        rows,
        fitted_exponent: fit.as_ref().map(|f| f.slope),
        fit_residual: fit.as_ref().map(|f| f.residual),
        fit_points: xs.len(),
        drop_rule: if cfg.drop_largest_two {
            format!("two largest lambda dropped: {dropped:?}")
        } else {
            "none".into()
        },
    })
}

fn sweep_row(cfg: &SweepConfig, constants: &Constants, lambda: f64, seed: Option<u64>) -> Result<SweepRow> {
    let ds = cfg.dataset.load_seeded(seed)?;
    let meta = DatasetMeta::of(&ds)?;
    let reference = solve_minimizer(&ds, lambda, DEFAULT_TOL)?;
    let mut row = SweepRow {
        lambda,
        seed,
        gamma: meta.gamma,
        n: meta.n,
        eta: None,
        skipped: None,
        certified: false,
        status: None,
        steps_run: 0,
        steps_to_eps: None,
        tau_empirical: None,
        regime: None,
        converged: false,
        min_risk: reference.min_risk,
        tau_shape_small_reg: None,
        tau_shape_general_reg: None,
    };
    let eta = match cfg.eta_rule.stepsize(meta, lambda, constants.c1) {
        Ok(eta) => eta,
        Err(reason) => {
            row.skipped = Some(reason);
            return Ok(row);
        }
    };
    let gd = GDConfig::new(eta, lambda, ds.dim(), cfg.horizon).with_convergence(ConvergenceTest::Gap(cfg.eps));
    let s = summarize_gd(&ds, &gd, Some(&reference), Some(cfg.eps))?;
    row.eta = Some(eta);
    row.certified = cfg.eta_rule.is_certified();
    row.status = Some(s.status);
    row.steps_run = s.steps_run;
    row.steps_to_eps = s.steps_to_eps;
    row.converged = s.status == TerminalStatus::Converged;
    row.tau_empirical = (s.status != TerminalStatus::Diverged).then_some(s.tau_hat);
    row.regime = Some(s.regime);
    row.tau_shape_small_reg = Some(tau_shape_small_reg(meta.gamma, meta.n, eta));
    row.tau_shape_general_reg = Some(tau_shape_general_reg(meta.gamma, eta));
    Ok(row)
}

impl Tabular for SweepResult {
    const SCHEMA: &'static str = SWEEP_SCHEMA;

    fn columns(&self) -> Vec<&'static str> {
        vec![
            "lambda",
            "seed",
            "gamma",
            "n",
            "eta",
            "certified",
            "status",
            "steps_run",
            "steps_to_eps",
            "tau_empirical",
            "regime",
            "converged",
            "skipped",
        ]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    cell_f(r.lambda),
                    r.seed.map(|s| s.to_string()).unwrap_or_default(),
                    cell_f(r.gamma),
                    r.n.to_string(),
                    r.eta.map(cell_f).unwrap_or_default(),
                    r.certified.to_string(),
                    r.status.as_ref().map(cell_json).unwrap_or_default(),
                    r.steps_run.to_string(),
                    cell_opt_u(r.steps_to_eps),
                    cell_opt_u(r.tau_empirical),
                    r.regime.as_ref().map(cell_json).unwrap_or_default(),
                    r.converged.to_string(),
                    r.skipped.clone().unwrap_or_default(),
                ]
            })
            .collect()
    }

    fn notes(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("eta_rule".into(), self.eta_rule.name().into());
        m.insert("eps".into(), cell_f(self.eps));
        m.insert("fitted_exponent".into(), self.fitted_exponent.map(cell_f).unwrap_or_else(|| "none".into()));
        m.insert("fit_residual".into(), self.fit_residual.map(cell_f).unwrap_or_else(|| "none".into()));
        m.insert("drop_rule".into(), self.drop_rule.clone());
        m
    }

    fn plot(&self) -> Vec<PlotPoint> {
        self.rows
            .iter()
            .filter_map(|r| r.steps_to_eps.map(|s| PlotPoint::new(self.eta_rule.name(), 1.0 / r.lambda, s as f64)))
            .collect()
    }
}
