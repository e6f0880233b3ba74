//! Population risk reached by several gradient methods, estimated by Monte Carlo.

use std::collections::BTreeMap;

use eosgd_core::analysis::{eta_general_reg, general_reg_gate};
use eosgd_core::datasets::{sample_population, DistributionSpec};
use eosgd_core::objective::{evaluate_slice, pointwise_logistic};
use eosgd_core::optimizers::{drive_adaptive, drive_gd, drive_nesterov, ConvergenceTest, TerminalStatus};
use eosgd_core::reference::{solve_minimizer, DEFAULT_TOL};
use eosgd_core::{AdaptiveConfig, Constants, Dataset, Error, GDConfig, NesterovConfig, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emit::{cell_f, cell_json, cell_opt_f, PlotPoint, Tabular};

pub const POPULATION_SCHEMA: &str = "eosgd.population/1";

const MC_CHUNK: usize = 1 << 16;
const TEST_SEED_OFFSET: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    /// `λ = 1/n`, `η = 1`.
    GdSmall,
    /// `λ = 1/n`, `η = (γ²n/C₁)^{1/3}`.
    GdLarge,
    /// `λ = 1/n`, constant momentum.
    Nesterov,
    /// `λ = 0`, `η = 1`, stopped after `4n` steps.
    GdUnregEarlystop,
    /// `λ = 0`, `η = ln n`, averaged iterate after `⌈K/γ²⌉` steps.
    Adaptive,
}

impl Arm {
    pub const ALL: [Arm; 5] = [Arm::GdSmall, Arm::GdLarge, Arm::Nesterov, Arm::GdUnregEarlystop, Arm::Adaptive];

    pub fn name(self) -> &'static str {
        match self {
            Arm::GdSmall => "gd_small",
            Arm::GdLarge => "gd_large",
            Arm::Nesterov => "nesterov",
            Arm::GdUnregEarlystop => "gd_unreg_earlystop",
            Arm::Adaptive => "adaptive",
        }
    }

    pub fn is_regularized(self) -> bool {
        matches!(self, Arm::GdSmall | Arm::GdLarge | Arm::Nesterov)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationConfig {
    pub spec: DistributionSpec,
    pub n_grid: Vec<usize>,
    pub delta: f64,
    /// Initial Monte-Carlo sample count; doubled until the standard error is
    /// at most 5% of the estimate or `mc_cap` is reached.
    pub mc_samples: usize,
    pub mc_cap: usize,
    pub seed: u64,
    pub arms: Vec<Arm>,
    /// Step cap for the regularized arms.
    pub max_steps: usize,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            spec: DistributionSpec::axis_aligned(10, 0.5, 0.9, 0.5).expect("valid default spec"),
            n_grid: vec![64, 256, 1024, 4096],
            delta: 0.05,
            mc_samples: 100_000,
            mc_cap: 10_000_000,
            seed: 0,
            arms: Arm::ALL.to_vec(),
            max_steps: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub arm: Arm,
    pub n_train: usize,
    pub lambda: f64,
    pub eta: Option<f64>,
    pub skipped: Option<String>,
    pub steps_used: usize,
    /// Regularized arms: `‖ŵ − w_λ‖ ≤ n⁻²` was reached; others: budget spent.
    pub reached_target: bool,
    pub train_loss: f64,
    pub w_norm: f64,
    pub mc_risk: f64,
    pub mc_stderr: f64,
    pub mc_samples: usize,
    /// Fast-rate bound with unit constant.
    pub bound_value: f64,
    /// `mc_risk · n · γ²`.
    pub risk_scaled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationResult {
    pub gamma: f64,
    pub delta: f64,
    pub rows: Vec<RiskEstimate>,
}

impl PopulationResult {
    pub fn get(&self, arm: Arm, n: usize) -> Option<&RiskEstimate> {
        self.rows.iter().find(|r| r.arm == arm && r.n_train == n)
    }
}

/// `loss_hat + max{1, w_norm²}·(ln³n + ln(1/δ))/n`.
pub fn compute_fast_rate_bound(loss_hat: f64, w_norm: f64, n: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    if n < 2 || !(loss_hat >= 0.0) || !(w_norm >= 0.0) {
        return Err(Error::Domain("need n ≥ 2 and nonnegative loss and norm".into()));
    }
    let nf = n as f64;
    Ok(loss_hat + (w_norm * w_norm).max(1.0) * (nf.ln().powi(3) + (1.0 / delta).ln()) / nf)
}

/// `1/n`.
pub fn compute_optimal_lambda(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain(format!("n must be at least 2, got {n}")));
    }
    Ok(1.0 / n as f64)
}

/// Minimizes the fast-rate bound over a log-spaced `λ` grid in
/// `[lambda_min, γ²)`, with `L(w_λ)` and `‖w_λ‖` replaced by their envelopes
/// `λ(2 + ln²(γ²/λ))/(2γ²)` and `(√2 + ln(γ²/λ))/γ`. Returns `(λ, bound)`.
pub fn envelope_lambda_search(n: usize, gamma: f64, delta: f64, lambda_min: f64, points: usize) -> Result<(f64, f64)> {
    let g2 = gamma * gamma;
    if !(lambda_min > 0.0 && lambda_min < g2) || points < 2 {
        return Err(Error::Domain("need 0 < lambda_min < γ² and at least two grid points".into()));
    }
    let (lo, hi) = (lambda_min.ln(), g2.ln());
    let mut best = (f64::NAN, f64::INFINITY);
    for k in 0..points {
        // Stay strictly below γ².
        let lambda = (lo + (hi - lo) * k as f64 / points as f64).exp();
        let lg = (g2 / lambda).ln();
        let loss = lambda * (2.0 + lg * lg) / (2.0 * g2);
        let norm = (2f64.sqrt() + lg) / gamma;
        let b = compute_fast_rate_bound(loss, norm, n, delta)?;
        if b < best.1 {
            best = (lambda, b);
        }
    }
    Ok(best)
}

pub fn population_experiment(cfg: &PopulationConfig, constants: &Constants) -> Result<PopulationResult> {
    if cfg.n_grid.is_empty() || cfg.n_grid.windows(2).any(|w| w[0] >= w[1]) || cfg.n_grid[0] < 2 {
        return Err(Error::Domain("n_grid must be strictly ascending with n ≥ 2".into()));
    }
    if cfg.mc_samples == 0 || cfg.mc_cap < cfg.mc_samples {
        return Err(Error::Domain("need 0 < mc_samples ≤ mc_cap".into()));
    }
    let jobs: Vec<(usize, Arm)> =
        cfg.n_grid.iter().flat_map(|&n| cfg.arms.iter().map(move |&a| (n, a))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(n, arm)| {
            let train = sample_population::<f64>(&cfg.spec, n, cfg.seed)?;
            run_arm(cfg, constants, &train, n, arm)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PopulationResult { gamma: cfg.spec.margin, delta: cfg.delta, rows })
}

fn run_arm(cfg: &PopulationConfig, constants: &Constants, train: &Dataset, n: usize, arm: Arm) -> Result<RiskEstimate> {
    let gamma = cfg.spec.margin;
    let d = train.dim();
    let nf = n as f64;
    let lambda = if arm.is_regularized() { compute_optimal_lambda(n)? } else { 0.0 };
    let target = ConvergenceTest::ParamDistance(1.0 / (nf * nf));
    let mut est = RiskEstimate {
        arm,
        n_train: n,
        lambda,
        eta: None,
        skipped: None,
        steps_used: 0,
        reached_target: false,
        train_loss: 0.0,
        w_norm: 0.0,
        mc_risk: 0.0,
        mc_stderr: 0.0,
        mc_samples: 0,
        bound_value: 0.0,
        risk_scaled: 0.0,
    };
    let reference = if arm.is_regularized() { Some(solve_minimizer(train, lambda, DEFAULT_TOL)?) } else { None };
    let (w, steps, status) = match arm {
        Arm::GdSmall | Arm::GdLarge => {
            let eta = if arm == Arm::GdSmall {
                1.0
            } else if general_reg_gate(gamma, lambda, constants.c1) {
                eta_general_reg(gamma, lambda, constants.c1)
            } else {
                est.skipped = Some(format!("lambda {lambda} exceeds gamma^2/C1"));
                return Ok(est);
            };
            est.eta = Some(eta);
            let gd = GDConfig::new(eta, lambda, d, cfg.max_steps).with_convergence(target);
            let out = drive_gd(train, &gd, reference.as_ref(), |_| {})?;
            (out.final_w, out.steps_run, out.status)
        }
        Arm::Nesterov => {
            let mut nc = NesterovConfig::new(lambda, d, cfg.max_steps);
            nc.convergence = target;
            est.eta = Some(1.0 / nc.smoothness());
            let out = drive_nesterov(train, &nc, reference.as_ref(), |_| {})?;
            (out.final_w, out.steps_run, out.status)
        }
        Arm::GdUnregEarlystop => {
            est.eta = Some(1.0);
            let gd = GDConfig::new(1.0, 0.0, d, 4 * n).with_convergence(ConvergenceTest::Never);
            let out = drive_gd(train, &gd, None, |_| {})?;
            (out.final_w, out.steps_run, out.status)
        }
        Arm::Adaptive => {
            let eta = nf.ln();
            est.eta = Some(eta);
            let steps = (constants.adaptive_k / (gamma * gamma)).ceil() as usize;
            let ac = AdaptiveConfig::new(eta, d, steps.max(1));
            let out = drive_adaptive(train, &ac, |_, _| {})?;
            (out.final_w, out.steps_run, out.status)
        }
    };
    est.steps_used = steps;
    est.reached_target = match arm {
        Arm::GdSmall | Arm::GdLarge | Arm::Nesterov => status == TerminalStatus::Converged,
        _ => status == TerminalStatus::BudgetExhausted,
    };
    est.train_loss = evaluate_slice(train, &w, 0.0)?.loss;
    est.w_norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (risk, stderr, m) = mc_population_risk(&cfg.spec, &w, cfg.seed, cfg.mc_samples, cfg.mc_cap)?;
    est.mc_risk = risk;
    est.mc_stderr = stderr;
    est.mc_samples = m;
    est.bound_value = compute_fast_rate_bound(est.train_loss, est.w_norm, n, cfg.delta)?;
    est.risk_scaled = risk * nf * gamma * gamma;
    Ok(est)
}

/// Monte-Carlo estimate of `E ln(1 + exp(−y xᵀw))` with its standard error.
///
/// Fresh points come in fixed chunks, so estimates for different `w` share
/// the same draws. The count doubles until `stderr ≤ 0.05·risk` or `cap`.
pub fn mc_population_risk(
    spec: &DistributionSpec,
    w: &[f64],
    seed: u64,
    initial: usize,
    cap: usize,
) -> Result<(f64, f64, usize)> {
    let chunks_for = |m: usize| m.div_ceil(MC_CHUNK).max(1);
    let max_chunks = chunks_for(cap).max(1);
    let mut target = chunks_for(initial).min(max_chunks);
    let (mut sum, mut sumsq, mut count) = (0.0f64, 0.0f64, 0usize);
    let mut done = 0;
    loop {
        while done < target {
            let chunk = sample_population::<f64>(spec, MC_CHUNK, seed.wrapping_add(TEST_SEED_OFFSET).wrapping_add(done as u64))?;
            for i in 0..chunk.count() {
                let z: f64 = chunk.signed_row(i).iter().zip(w).map(|(a, b)| a * b).sum();
                let l = pointwise_logistic(z)?.0;
                sum += l;
                sumsq += l * l;
            }
            count += chunk.count();
            done += 1;
        }
        let m = count as f64;
        let mean = sum / m;
        let var = ((sumsq - m * mean * mean) / (m - 1.0)).max(0.0);
        let stderr = (var / m).sqrt();
        if stderr <= 0.05 * mean || done >= max_chunks {
            return Ok((mean, stderr, count));
        }
        target = (2 * done).min(max_chunks);
    }
}

impl Tabular for PopulationResult {
    const SCHEMA: &'static str = POPULATION_SCHEMA;

    fn columns(&self) -> Vec<&'static str> {
        vec![
            "arm",
            "n",
            "lambda",
            "eta",
            "steps_used",
            "reached_target",
            "train_loss",
            "w_norm",
            "mc_risk",
            "mc_stderr",
            "mc_samples",
            "bound_value",
            "risk_scaled",
            "skipped",
        ]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    cell_json(&r.arm),
                    r.n_train.to_string(),
                    cell_f(r.lambda),
                    cell_opt_f(r.eta),
                    r.steps_used.to_string(),
                    r.reached_target.to_string(),
                    cell_f(r.train_loss),
                    cell_f(r.w_norm),
                    cell_f(r.mc_risk),
                    cell_f(r.mc_stderr),
                    r.mc_samples.to_string(),
                    cell_f(r.bound_value),
                    cell_f(r.risk_scaled),
                    r.skipped.clone().unwrap_or_default(),
                ]
            })
            .collect()
    }

    fn notes(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("gamma".into(), cell_f(self.gamma));
        m.insert("delta".into(), cell_f(self.delta));
        m
    }

    fn plot(&self) -> Vec<PlotPoint> {
        let mut pts: Vec<PlotPoint> = self
            .rows
            .iter()
            .filter(|r| r.skipped.is_none())
            .map(|r| PlotPoint::new(format!("{}_risk", r.arm.name()), r.n_train as f64, r.mc_risk))
            .collect();
        pts.extend(
            self.rows
                .iter()
                .filter(|r| r.skipped.is_none())
                .map(|r| PlotPoint::new(format!("{}_steps", r.arm.name()), r.n_train as f64, r.steps_used as f64)),
        );
        pts
    }
}
