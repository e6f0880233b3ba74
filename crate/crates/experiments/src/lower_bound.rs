//! Stable-regime gradient descent on the hard two-point dataset.

use std::collections::BTreeMap;

use eosgd_core::analysis::DatasetMeta;
use eosgd_core::datasets::make_hard_dataset;
use eosgd_core::objective::evaluate_slice;
use eosgd_core::optimizers::{drive_gd, drive_gd_while, summarize_gd, ConvergenceTest, TerminalStatus, MONOTONE_RTOL};
use eosgd_core::reference::{solve_minimizer, ReferenceSolution, DEFAULT_TOL};
use eosgd_core::{Constants, Dataset, Error, GDConfig, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emit::{cell_f, cell_opt_f, cell_opt_u, PlotPoint, Tabular};
use crate::sweep::{fit_loglog, EtaRule};

pub const LOWER_BOUND_SCHEMA: &str = "eosgd.lowerbound/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LowerBoundConfig {
    pub gamma: f64,
    pub lambda_grid: Vec<f64>,
    pub eps: f64,
    /// Stepsizes whose first step must raise the risk.
    pub increase_etas: Vec<f64>,
    pub increase_lambda: f64,
    /// The monotone scan tries `scan_max·k/scan_points` for `k = 1..=scan_points`.
    pub scan_points: usize,
    pub scan_max: f64,
    pub eos_lambda: f64,
    pub eos_rule: EtaRule,
    pub horizon: usize,
}

impl Default for LowerBoundConfig {
    fn default() -> Self {
        Self {
            gamma: 0.05,
            lambda_grid: vec![1e-3, 1e-4, 1e-5],
            eps: 1e-8,
            increase_etas: vec![21.0, 30.0, 100.0],
            increase_lambda: 1e-4,
            scan_points: 40,
            scan_max: 20.0,
            eos_lambda: 1e-4,
            eos_rule: EtaRule::SmallReg,
            horizon: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncreaseCheck {
    pub eta: f64,
    pub risk0: f64,
    pub risk1: f64,
    pub increased: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneRow {
    pub lambda: f64,
    /// Fastest stepsize of the scan whose risk never increased.
    pub best_eta: Option<f64>,
    pub steps_to_eps: Option<usize>,
    /// Scanned stepsizes that stayed monotone and reached `eps`.
    pub monotone_count: usize,
    /// `1/(λ ln²(1/λ))`.
    pub scale: f64,
    /// `C₂ λ ln²(1/λ)`; `eps` must lie below it.
    pub eps_ceiling: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EosComparison {
    pub lambda: f64,
    pub eta: Option<f64>,
    pub skipped: Option<String>,
    pub steps_eos: Option<usize>,
    pub steps_monotone: Option<usize>,
    /// `steps_monotone / steps_eos`.
    pub speedup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichRow {
    pub lambda: f64,
    pub eta: f64,
    /// Smallest `C` with `L(w_t)·t ∈ [1/C, C]` and `‖w_t‖ ≤ C ln t` for
    /// `t ∈ [10, 1/(Cλ ln(1/λ))]`.
    pub required_c: f64,
    pub window_end: usize,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundResult {
    pub gamma: f64,
    pub eps: f64,
    pub increase: Vec<IncreaseCheck>,
    pub monotone: Vec<MonotoneRow>,
    /// Slope of `ln(steps)` against `ln(1/λ)` for the best monotone stepsize.
    pub exponent_inv_lambda: Option<f64>,
    /// Slope of `ln(steps)` against `ln(1/(λ ln²(1/λ)))`.
    pub exponent_scale: Option<f64>,
    pub eos: EosComparison,
    pub sandwich: Vec<SandwichRow>,
    pub sandwich_c: f64,
}

pub fn lower_bound_experiment(cfg: &LowerBoundConfig, constants: &Constants) -> Result<LowerBoundResult> {
    if !(cfg.gamma > 0.0 && cfg.gamma < 0.1) {
        return Err(Error::Domain(format!("gamma must lie in (0, 0.1), got {}", cfg.gamma)));
    }
    if cfg.lambda_grid.is_empty() || cfg.lambda_grid.iter().any(|&l| !(l > 0.0 && l < (-1.0f64).exp())) {
        return Err(Error::Domain("every lambda must lie in (0, 1/e)".into()));
    }
    if !(cfg.eps > 0.0) || cfg.scan_points == 0 || !(cfg.scan_max > 0.0) {
        return Err(Error::Domain("eps, scan_points and scan_max must be positive".into()));
    }
    let ds = make_hard_dataset::<f64>(cfg.gamma)?;

    let increase = cfg
        .increase_etas
        .iter()
        .map(|&eta| first_step_increase(&ds, eta, cfg.increase_lambda))
        .collect::<Result<Vec<_>>>()?;

    let mut grid = cfg.lambda_grid.clone();
    if !grid.contains(&cfg.eos_lambda) {
        grid.push(cfg.eos_lambda);
    }
    let scans = grid
        .par_iter()
        .map(|&lambda| {
            let reference = solve_minimizer(&ds, lambda, DEFAULT_TOL)?;
            let best = best_monotone(&ds, &reference, cfg)?;
            Ok((lambda, reference, best))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut monotone = Vec::new();
    for (lambda, _, best) in scans.iter().filter(|(l, ..)| cfg.lambda_grid.contains(l)) {
        let ln = (1.0 / lambda).ln();
        if cfg.eps >= constants.c2 * lambda * ln * ln {
            return Err(Error::Domain(format!("eps must lie below C2 λ ln²(1/λ) at λ = {lambda}")));
        }
        monotone.push(MonotoneRow {
            lambda: *lambda,
            best_eta: best.map(|b| b.0),
            steps_to_eps: best.map(|b| b.1),
            monotone_count: best.map_or(0, |b| b.2),
            scale: 1.0 / (lambda * ln * ln),
            eps_ceiling: constants.c2 * lambda * ln * ln,
        });
    }
    let pts: Vec<(f64, f64, f64)> =
        monotone.iter().filter_map(|r| r.steps_to_eps.map(|s| (1.0 / r.lambda, r.scale, s as f64))).collect();
    let (inv, scale, steps): (Vec<f64>, Vec<f64>, Vec<f64>) =
        pts.iter().fold((vec![], vec![], vec![]), |mut acc, &(a, b, c)| {
            acc.0.push(a);
            acc.1.push(b);
            acc.2.push(c);
            acc
        });
    let enough = steps.len() >= 2;
    let exponent_inv_lambda = enough.then(|| fit_loglog(&inv, &steps)).flatten().map(|f| f.slope);
    let exponent_scale = enough.then(|| fit_loglog(&scale, &steps)).flatten().map(|f| f.slope);

    let (_, eos_ref, eos_best) = scans.iter().find(|(l, ..)| *l == cfg.eos_lambda).expect("eos lambda scanned");
    let eos = eos_arm(&ds, eos_ref, cfg, constants, eos_best.map(|b| b.1))?;

    let sandwich = scans
        .iter()
        .filter(|(l, ..)| cfg.lambda_grid.contains(l))
        .filter_map(|(lambda, _, best)| best.map(|b| sandwich_row(&ds, *lambda, b.0, constants.sandwich_c)))
        .collect::<Result<Vec<_>>>()?;

    Ok(LowerBoundResult {
        gamma: cfg.gamma,
        eps: cfg.eps,
        increase,
        monotone,
        exponent_inv_lambda,
        exponent_scale,
        eos,
        sandwich,
        sandwich_c: constants.sandwich_c,
    })
}

/// `R(w₀)` and `R(w₁)` for one step from the origin.
pub fn first_step_increase(ds: &Dataset, eta: f64, lambda: f64) -> Result<IncreaseCheck> {
    let w0 = vec![0.0; ds.dim()];
    let e0 = evaluate_slice(ds, &w0, lambda)?;
    let w1: Vec<f64> = e0.grad_risk.iter().map(|g| -eta * g).collect();
    let e1 = evaluate_slice(ds, &w1, lambda)?;
    Ok(IncreaseCheck { eta, risk0: e0.risk, risk1: e1.risk, increased: e1.risk > e0.risk })
}

/// Runs GD until the risk first increases; `Some(steps)` when it reaches
/// `eps` without ever increasing.
pub fn monotone_steps(ds: &Dataset, reference: &ReferenceSolution, eta: f64, eps: f64, horizon: usize) -> Result<Option<usize>> {
    let cfg = GDConfig::new(eta, reference.lambda, ds.dim(), horizon).with_convergence(ConvergenceTest::Gap(eps));
    let mut prev = f64::INFINITY;
    let out = drive_gd_while(ds, &cfg, Some(reference), |v| {
        let up = v.risk > prev + MONOTONE_RTOL * prev.abs();
        prev = v.risk;
        !up
    })?;
    Ok((out.status == TerminalStatus::Converged).then_some(out.steps_run))
}

/// `(η, steps, count)` of the fastest monotone stepsize in the scan.
fn best_monotone(
    ds: &Dataset,
    reference: &ReferenceSolution,
    cfg: &LowerBoundConfig,
) -> Result<Option<(f64, usize, usize)>> {
    let etas: Vec<f64> = (1..=cfg.scan_points).map(|k| cfg.scan_max * k as f64 / cfg.scan_points as f64).collect();
    let results = etas
        .par_iter()
        .map(|&eta| Ok((eta, monotone_steps(ds, reference, eta, cfg.eps, cfg.horizon)?)))
        .collect::<Result<Vec<_>>>()?;
    let ok: Vec<(f64, usize)> = results.into_iter().filter_map(|(e, s)| s.map(|s| (e, s))).collect();
    let count = ok.len();
    Ok(ok.into_iter().min_by_key(|&(_, s)| s).map(|(e, s)| (e, s, count)))
}

fn eos_arm(
    ds: &Dataset,
    reference: &ReferenceSolution,
    cfg: &LowerBoundConfig,
    constants: &Constants,
    steps_monotone: Option<usize>,
) -> Result<EosComparison> {
    let meta = DatasetMeta::of(ds)?;
    let lambda = cfg.eos_lambda;
    let mut out =
        EosComparison { lambda, eta: None, skipped: None, steps_eos: None, steps_monotone, speedup: None };
    match cfg.eos_rule.stepsize(meta, lambda, constants.c1) {
        Err(reason) => out.skipped = Some(reason),
        Ok(eta) => {
            let gd = GDConfig::new(eta, lambda, ds.dim(), cfg.horizon).with_convergence(ConvergenceTest::Gap(cfg.eps));
            let s = summarize_gd(ds, &gd, Some(reference), Some(cfg.eps))?;
            out.eta = Some(eta);
            out.steps_eos = s.steps_to_eps;
            if let (Some(m), Some(e)) = (steps_monotone, s.steps_to_eps) {
                out.speedup = Some(m as f64 / e.max(1) as f64);
            }
        }
    }
    Ok(out)
}

fn sandwich_row(ds: &Dataset, lambda: f64, eta: f64, c: f64) -> Result<SandwichRow> {
    let ln = (1.0 / lambda).ln();
    let end_at = |c: f64| (1.0 / (c * lambda * ln)).floor() as usize;
    let t_max = end_at(1.0);
    let cfg = GDConfig::new(eta, lambda, ds.dim(), t_max).with_convergence(ConvergenceTest::Never);
    // Running maximum of the three ratios over t ∈ [10, t].
    let mut prefix = Vec::with_capacity(t_max + 1);
    let mut worst = 0.0f64;
    drive_gd(ds, &cfg, None, |v| {
        if v.t >= 10 {
            let t = v.t as f64;
            let lt = v.loss * t;
            worst = worst.max(lt).max(1.0 / lt).max(v.param_norm / t.ln());
        }
        prefix.push(worst);
    })?;
    let need = |c: f64| -> f64 {
        let end = end_at(c);
        if end < 10 {
            0.0
        } else {
            prefix[end.min(prefix.len() - 1)]
        }
    };
    // need(c) is nonincreasing in c, so the smallest c with need(c) ≤ c is bracketed.
    let (mut lo, mut hi) = (1.0f64, 1.0f64);
    if need(1.0) <= 1.0 {
        hi = 1.0;
    } else {
        while need(hi) > hi {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if need(mid) <= mid {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    Ok(SandwichRow { lambda, eta, required_c: hi, window_end: end_at(c), holds: hi <= c })
}

impl Tabular for LowerBoundResult {
    const SCHEMA: &'static str = LOWER_BOUND_SCHEMA;

    fn columns(&self) -> Vec<&'static str> {
        vec!["lambda", "best_monotone_eta", "steps_to_eps", "monotone_count", "scale", "sandwich_required_c"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.monotone
            .iter()
            .map(|r| {
                let sw = self.sandwich.iter().find(|s| s.lambda == r.lambda).map(|s| s.required_c);
                vec![
                    cell_f(r.lambda),
                    cell_opt_f(r.best_eta),
                    cell_opt_u(r.steps_to_eps),
                    r.monotone_count.to_string(),
                    cell_f(r.scale),
                    cell_opt_f(sw),
                ]
            })
            .collect()
    }

    fn notes(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("gamma".into(), cell_f(self.gamma));
        m.insert("eps".into(), cell_f(self.eps));
        for c in &self.increase {
            m.insert(
                format!("first_step_eta_{}", c.eta),
                format!("R0={} R1={} increased={}", cell_f(c.risk0), cell_f(c.risk1), c.increased),
            );
        }
        m.insert("exponent_inv_lambda".into(), cell_opt_f(self.exponent_inv_lambda));
        m.insert("exponent_scale".into(), cell_opt_f(self.exponent_scale));
        m.insert(
            "eos_comparison".into(),
            format!(
                "lambda={} eta={} steps_eos={} steps_monotone={} speedup={}",
                cell_f(self.eos.lambda),
                cell_opt_f(self.eos.eta),
                cell_opt_u(self.eos.steps_eos),
                cell_opt_u(self.eos.steps_monotone),
                cell_opt_f(self.eos.speedup)
            ),
        );
        m.insert("sandwich_c".into(), cell_f(self.sandwich_c));
        m
    }

    fn plot(&self) -> Vec<PlotPoint> {
        self.monotone
            .iter()
            .filter_map(|r| r.steps_to_eps.map(|s| PlotPoint::new("best_monotone", 1.0 / r.lambda, s as f64)))
            .collect()
    }
}
