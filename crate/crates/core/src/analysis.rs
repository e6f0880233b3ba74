//! Phase detection, steps-to-ε, inequality checks along trajectories,
//! critical-stepsize bracketing and the one-dimensional analysis.

use std::f64::consts::E;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::constants::Constants;
use crate::datasets::{seeded_rng, LabeledDataset};
use crate::error::{domain, Error, Result};
use crate::objective::ParamVector;
use crate::optimizers::{
    classify_regime, monotone_suffix_start, regime_from, summarize_gd, ConvergenceTest, GDConfig, Regime,
    TerminalStatus, Trajectory,
};
use crate::reference::{solve_margin, solve_minimizer, ReferenceSolution, DEFAULT_TOL};

/// Absolute slack before a bound check counts as violated.
pub const ABS_SLACK: f64 = 1e-10;
const STREAM_BALL: u64 = 3;

/// `(γ, n)` of the dataset a trajectory was run on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub gamma: f64,
    pub n: usize,
}

impl DatasetMeta {
    /// Uses the construction-time margin when present, else solves for it.
    pub fn of(ds: &LabeledDataset<f64>) -> Result<Self> {
        let gamma = match ds.gamma() {
            Some(g) => g,
            None => solve_margin(ds)?.gamma,
        };
        Ok(Self { gamma, n: ds.count() })
    }
}

/// Largest stepsize of the small-regularization rule,
/// `min{γ/√(C₁λ), γ²/(C₁nλ)}`.
pub fn eta_small_reg(gamma: f64, n: usize, lambda: f64, c1: f64) -> f64 {
    (gamma / (c1 * lambda).sqrt()).min(gamma * gamma / (c1 * n as f64 * lambda))
}

/// `λ ≤ γ²/(C₁ n ln n)` with `n ≥ 2`.
pub fn small_reg_gate(gamma: f64, n: usize, lambda: f64, c1: f64) -> bool {
    n >= 2 && lambda > 0.0 && lambda <= gamma * gamma / (c1 * n as f64 * (n as f64).ln())
}

/// Largest stepsize of the general-regularization rule, `(γ²/(C₁λ))^{1/3}`.
pub fn eta_general_reg(gamma: f64, lambda: f64, c1: f64) -> f64 {
    (gamma * gamma / (c1 * lambda)).cbrt()
}

/// `λ ≤ γ²/C₁`.
pub fn general_reg_gate(gamma: f64, lambda: f64, c1: f64) -> bool {
    lambda > 0.0 && lambda <= gamma * gamma / c1
}

/// `max{η, n, n ln n/η}/γ²`, the small-regularization transition time without `C₂`.
pub fn tau_shape_small_reg(gamma: f64, n: usize, eta: f64) -> f64 {
    let nf = n as f64;
    eta.max(nf).max(nf * nf.ln() / eta) / (gamma * gamma)
}

/// `max{1, η²}/γ²`, the general-regularization transition time without `C₂`.
pub fn tau_shape_general_reg(gamma: f64, eta: f64) -> f64 {
    (eta * eta).max(1.0) / (gamma * gamma)
}

/// `1/(λ ln(1/λ))`.
pub fn eta_critical(lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda < (-1.0f64).exp()) {
        return Err(domain(format!("lambda must lie in (0, 1/e), got {lambda}")));
    }
    Ok(1.0 / (lambda * (1.0 / lambda).ln()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    /// Start of the monotone risk suffix; absent for diverged runs.
    pub tau_empirical: Option<usize>,
    pub regime: Regime,
    pub tau_bound_small_reg: f64,
    pub tau_bound_general_reg: f64,
    pub c1: f64,
    pub c2: f64,
    pub steps_run: usize,
    /// The monotone suffix is shorter than ten times the prefix before it.
    pub censored: bool,
}

/// Phase report from the start of the monotone suffix of a finished run.
pub fn phase_report(
    tau_hat: usize,
    steps_run: usize,
    status: TerminalStatus,
    eta: f64,
    meta: DatasetMeta,
    constants: &Constants,
) -> PhaseReport {
    let tau_empirical = (status != TerminalStatus::Diverged).then_some(tau_hat);
    PhaseReport {
        tau_empirical,
        regime: regime_from(tau_hat, steps_run, status),
        tau_bound_small_reg: constants.c2 * tau_shape_small_reg(meta.gamma, meta.n, eta),
        tau_bound_general_reg: constants.c2 * tau_shape_general_reg(meta.gamma, eta),
        c1: constants.c1,
        c2: constants.c2,
        steps_run,
        censored: steps_run.saturating_sub(tau_hat) < 10 * tau_hat,
    }
}

pub fn measure_phase(traj: &Trajectory<f64>, meta: DatasetMeta, constants: &Constants) -> Result<PhaseReport> {
    if traj.terminal_status != TerminalStatus::Diverged && traj.steps_run < 2 && traj.steps_run != 0 {
        return Err(domain("phase measurement needs at least two steps"));
    }
    let eta = traj.config.eta.ok_or_else(|| domain("trajectory has no stepsize"))?;
    let tau = monotone_suffix_start(&traj.risk);
    let mut rep = phase_report(tau, traj.steps_run, traj.terminal_status, eta, meta, constants);
    rep.regime = classify_regime(traj);
    Ok(rep)
}

/// First step with `R(w_t) − min R ≤ eps`.
pub fn steps_to_error(traj: &Trajectory<f64>, reference: &ReferenceSolution, eps: f64) -> Result<Option<usize>> {
    if !(eps > 0.0) {
        return Err(domain(format!("eps must be > 0, got {eps}")));
    }
    Ok(traj.risk.iter().position(|r| r - reference.min_risk <= eps))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// Running-average loss in the oscillatory phase.
    EosAvgLoss,
    /// Parameter norm in the oscillatory phase.
    EosParamNorm,
    ParamBound,
    PotentialBound,
    AvgLossBound,
    /// One-step descent `R(w_{t+1}) ≤ R(w_t) − (η/2)‖∇R(w_t)‖²` under the potential gate.
    ContractionDescent,
    ContractionRisk,
    ContractionNorm,
    /// `G(w_{t+1}) ≤ 1/(2η)` under the potential gate.
    PotentialPersistence,
    StableRiskDecaySmallReg,
    StableRiskDecayGeneralReg,
    ParamDecay,
}

impl BoundKind {
    pub const ALL: [BoundKind; 12] = [
        Self::EosAvgLoss,
        Self::EosParamNorm,
        Self::ParamBound,
        Self::PotentialBound,
        Self::AvgLossBound,
        Self::ContractionDescent,
        Self::ContractionRisk,
        Self::ContractionNorm,
        Self::PotentialPersistence,
        Self::StableRiskDecaySmallReg,
        Self::StableRiskDecayGeneralReg,
        Self::ParamDecay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::EosAvgLoss => "eos_avg_loss",
            Self::EosParamNorm => "eos_param_norm",
            Self::ParamBound => "param_bound",
            Self::PotentialBound => "potential_bound",
            Self::AvgLossBound => "avg_loss_bound",
            Self::ContractionDescent => "contraction_descent",
            Self::ContractionRisk => "contraction_risk",
            Self::ContractionNorm => "contraction_norm",
            Self::PotentialPersistence => "potential_persistence",
            Self::StableRiskDecaySmallReg => "stable_risk_decay_small_reg",
            Self::StableRiskDecayGeneralReg => "stable_risk_decay_general_reg",
            Self::ParamDecay => "param_decay",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| domain(format!("unknown bound {s:?}")))
    }

    /// Bounds that hold unconditionally once `ηλ ≤ 1/2` and `w₀ = 0`.
    pub fn is_eos_family(self) -> bool {
        matches!(
            self,
            Self::EosAvgLoss | Self::EosParamNorm | Self::ParamBound | Self::PotentialBound | Self::AvgLossBound
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheckRecord {
    pub step: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub which_bound: BoundKind,
}

impl BoundCheckRecord {
    fn new(step: usize, lhs: f64, rhs: f64, which_bound: BoundKind) -> Self {
        Self { step, lhs, rhs, margin: rhs - lhs, which_bound }
    }

    /// Records are only emitted where preconditions held.
    pub fn is_violation(&self) -> bool {
        !(self.margin >= -ABS_SLACK)
    }
}

/// Evaluates every selected bound at every step where its preconditions hold.
///
/// The averaged bounds use `(1/t) Σ_{k<t}` and start at `t = 1`; at `t = 0`
/// their right-hand side is infinite. Decay bounds start at the empirical
/// `τ̂` and need a reference; they are skipped without one.
pub fn check_bounds(
    traj: &Trajectory<f64>,
    meta: DatasetMeta,
    reference: Option<&ReferenceSolution>,
    constants: &Constants,
    kinds: &[BoundKind],
) -> Result<Vec<BoundCheckRecord>> {
    let eta = traj.config.eta.ok_or_else(|| domain("trajectory has no stepsize"))?;
    if traj.config.optimizer != "gd" {
        return Err(domain("bound checks apply to gradient descent trajectories"));
    }
    let lambda = traj.config.lambda;
    let gamma = meta.gamma;
    let want = |k: BoundKind| kinds.contains(&k);
    let mut out = Vec::new();
    let zero_start = traj.config.w0.iter().all(|&v| v == 0.0);
    let len = traj.len();

    if eta * lambda <= 0.5 && zero_start {
        let inv_lambda = if lambda > 0.0 { 1.0 / lambda } else { f64::INFINITY };
        let (mut loss_sum, mut pot_sum) = (0.0, 0.0);
        for t in 0..len {
            let m = (eta * t as f64).min(inv_lambda);
            let lg = (E + gamma * gamma * m).ln();
            let norm_rhs = 4.0 * (eta + lg) / gamma;
            for k in [BoundKind::EosParamNorm, BoundKind::ParamBound] {
                if want(k) {
                    out.push(BoundCheckRecord::new(t, traj.param_norm[t], norm_rhs, k));
                }
            }
            if t >= 1 {
                let avg_loss = loss_sum / t as f64;
                let avg_pot = pot_sum / t as f64;
                let loss_rhs = 10.0 * (eta * eta + lg * lg) / (gamma * gamma * m);
                let pot_rhs = 11.0 * (eta + lg) / (gamma * gamma * m);
                for k in [BoundKind::EosAvgLoss, BoundKind::AvgLossBound] {
                    if want(k) {
                        out.push(BoundCheckRecord::new(t, avg_loss, loss_rhs, k));
                    }
                }
                if want(BoundKind::PotentialBound) {
                    out.push(BoundCheckRecord::new(t, avg_pot, pot_rhs, BoundKind::PotentialBound));
                }
            }
            loss_sum += traj.loss[t];
            pot_sum += traj.potential[t];
        }
    }

    let contraction_gate = lambda <= 1.0 / (3.0 * eta * (E + eta).ln());
    if contraction_gate {
        let g_gate = 1.0 / (2.0 * E * E * eta);
        for t in 0..len.saturating_sub(1) {
            if traj.potential[t] > g_gate {
                continue;
            }
            if want(BoundKind::ContractionDescent) {
                let rhs = traj.risk[t] - eta / 2.0 * traj.grad_norm[t] * traj.grad_norm[t];
                out.push(BoundCheckRecord::new(t, traj.risk[t + 1], rhs, BoundKind::ContractionDescent));
            }
            if want(BoundKind::PotentialPersistence) {
                out.push(BoundCheckRecord::new(
                    t,
                    traj.potential[t + 1],
                    1.0 / (2.0 * eta),
                    BoundKind::PotentialPersistence,
                ));
            }
            if let Some(r) = reference {
                if want(BoundKind::ContractionRisk) {
                    let lhs = traj.risk[t + 1] - r.min_risk;
                    let rhs = (1.0 - eta * lambda) * (traj.risk[t] - r.min_risk);
                    out.push(BoundCheckRecord::new(t, lhs, rhs, BoundKind::ContractionRisk));
                }
                if let (true, Some(d)) = (want(BoundKind::ContractionNorm), traj.dist_to_ref.as_ref()) {
                    let lhs = d[t + 1] * d[t + 1];
                    let rhs = (1.0 - eta * lambda) * d[t] * d[t];
                    out.push(BoundCheckRecord::new(t, lhs, rhs, BoundKind::ContractionNorm));
                }
            }
        }
    }

    if let (Some(r), true) = (reference, lambda > 0.0 && traj.terminal_status != TerminalStatus::Diverged) {
        let tau = monotone_suffix_start(&traj.risk);
        let small = small_reg_gate(gamma, meta.n, lambda, constants.c1)
            && eta <= eta_small_reg(gamma, meta.n, lambda, constants.c1) * (1.0 + 1e-12);
        let general = general_reg_gate(gamma, lambda, constants.c1)
            && eta <= eta_general_reg(gamma, lambda, constants.c1) * (1.0 + 1e-12);
        // Distances to the reference are only known up to ‖∇R(w_ref)‖/λ.
        let ref_err = r.grad_norm_at_sol / lambda;
        let param_scale = constants.c3_param * (eta + (gamma * gamma / lambda).ln()) / gamma;
        for t in tau..len {
            let decay = (-lambda * eta * (t - tau) as f64).exp();
            let gap = traj.risk[t] - r.min_risk;
            if small && want(BoundKind::StableRiskDecaySmallReg) {
                out.push(BoundCheckRecord::new(
                    t,
                    gap,
                    constants.c3_risk_small_reg * decay,
                    BoundKind::StableRiskDecaySmallReg,
                ));
            }
            if general && want(BoundKind::StableRiskDecayGeneralReg) {
                out.push(BoundCheckRecord::new(
                    t,
                    gap,
                    constants.c3_risk_general_reg / eta * decay,
                    BoundKind::StableRiskDecayGeneralReg,
                ));
            }
            if (small || general) && want(BoundKind::ParamDecay) {
                if let Some(d) = traj.dist_to_ref.as_ref() {
                    out.push(BoundCheckRecord::new(t, d[t], param_scale * decay.sqrt() + ref_err, BoundKind::ParamDecay));
                }
            }
        }
    }
    Ok(out)
}

/// Where gradient descent starts in the critical-stepsize search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum InitPolicy {
    Zero,
    /// Uniform in the ball of radius `radius_factor·‖w_λ‖` around `w_λ`,
    /// one start per seed in `seed..seed + seeds`.
    RandomBall { radius_factor: f64, seed: u64, seeds: usize },
}

impl InitPolicy {
    fn starts(&self, w_lambda: &[f64]) -> Vec<Vec<f64>> {
        match *self {
            Self::Zero => vec![vec![0.0; w_lambda.len()]],
            Self::RandomBall { radius_factor, seed, seeds } => {
                let r = radius_factor * crate::scalar::norm(w_lambda);
                let d = w_lambda.len();
                (0..seeds as u64)
                    .map(|s| {
                        let mut rng = seeded_rng(seed + s, STREAM_BALL);
                        let dir: Vec<f64> =
                            (0..d).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
                        let dn = crate::scalar::norm(&dir);
                        let rad = r * rng.random::<f64>().powf(1.0 / d as f64);
                        w_lambda.iter().zip(&dir).map(|(w, u)| w + rad * u / dn).collect()
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Convergent,
    Divergent,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalReport {
    pub lambda: f64,
    pub eta_formula: f64,
    pub eta_start: f64,
    /// How `eta_start` was chosen.
    pub eta_start_rule: String,
    pub eta_convergent_max: f64,
    pub eta_divergent_min: f64,
    pub bracket_ratio: f64,
    pub horizon: usize,
    pub tol: f64,
    pub w0_policy: InitPolicy,
    /// Stepsizes where the starts disagreed even after widening the horizon.
    pub indeterminate: Vec<f64>,
    /// `(η, verdict)` in evaluation order.
    pub probes: Vec<(f64, Verdict)>,
}

/// Bisects for the largest stepsize at which gradient descent still reaches
/// `R − min R ≤ tol` within `horizon` steps from every start of the policy.
pub fn find_critical_stepsize(
    ds: &LabeledDataset<f64>,
    lambda: f64,
    w0_policy: InitPolicy,
    horizon: usize,
    tol: f64,
    constants: &Constants,
) -> Result<CriticalReport> {
    let eta_formula = eta_critical(lambda)?;
    let ms = solve_margin(ds)?;
    if !ms.support_spans_data {
        return Err(Error::SupportRank(format!(
            "rank of S_+ is {} but data rank is {}",
            ms.rank_support, ms.rank_data
        )));
    }
    let reference = solve_minimizer(ds, lambda, DEFAULT_TOL)?;
    let starts = w0_policy.starts(&reference.w_lambda);
    let (gamma, n, c1) = (ms.gamma, ds.count(), constants.c1);
    let (eta_start, eta_start_rule) = if small_reg_gate(gamma, n, lambda, c1) {
        (eta_small_reg(gamma, n, lambda, c1), "small_reg".to_string())
    } else if general_reg_gate(gamma, lambda, c1) {
        (eta_general_reg(gamma, lambda, c1), "general_reg".to_string())
    } else {
        (1.0 / (1.0 + lambda), "inverse_smoothness".to_string())
    };

    let mut probes = Vec::new();
    let mut indeterminate = Vec::new();
    let mut verdict = |eta: f64| -> Result<Verdict> {
        let mut h = horizon;
        let mut v = run_starts(ds, &reference, &starts, eta, lambda, h, tol)?;
        // Disagreement may be a slow start; give it more time once.
        if v == Verdict::Mixed {
            h *= 4;
            v = run_starts(ds, &reference, &starts, eta, lambda, h, tol)?;
        }
        probes.push((eta, v));
        if v == Verdict::Mixed {
            indeterminate.push(eta);
        }
        Ok(v)
    };

    let mut lo = eta_start;
    if verdict(lo)? != Verdict::Convergent {
        return Err(Error::Solver(format!("starting stepsize {lo} does not converge")));
    }
    let mut hi = 2.0 / lambda;
    if verdict(hi)? == Verdict::Convergent {
        lo = hi;
        hi = 2.01 / lambda;
        if verdict(hi)? == Verdict::Convergent {
            return Err(Error::Solver("no divergence found up to 2.01/λ".into()));
        }
    }
    while hi / lo > 1.05 {
        let mid = (lo * hi).sqrt();
        match verdict(mid)? {
            Verdict::Convergent => lo = mid,
            _ => hi = mid,
        }
    }
    Ok(CriticalReport {
        lambda,
        eta_formula,
        eta_start,
        eta_start_rule,
        eta_convergent_max: lo,
        eta_divergent_min: hi,
        bracket_ratio: hi / lo,
        horizon,
        tol,
        w0_policy,
        indeterminate,
        probes,
    })
}

fn run_starts(
    ds: &LabeledDataset<f64>,
    reference: &ReferenceSolution,
    starts: &[Vec<f64>],
    eta: f64,
    lambda: f64,
    horizon: usize,
    tol: f64,
) -> Result<Verdict> {
    let mut conv = 0;
    for w0 in starts {
        let cfg = GDConfig::new(eta, lambda, ds.dim(), horizon)
            .with_w0(ParamVector::new(w0.clone())?)
            .with_convergence(ConvergenceTest::Gap(tol));
        let s = summarize_gd(ds, &cfg, Some(reference), None)?;
        if s.status == TerminalStatus::Converged {
            conv += 1;
        }
    }
    Ok(match conv {
        0 => Verdict::Divergent,
        c if c == starts.len() => Verdict::Convergent,
        _ => Verdict::Mixed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneDReport {
    /// Sign changes of `w_t − w_λ`; exact zeros are skipped.
    pub crossings: usize,
    pub converged: bool,
    pub steps_to_eps: Option<usize>,
    /// `(C/(ηλ))·ln((|w₀|+1)/(ε λ ln(1/λ)))`.
    pub budget: f64,
    pub within_budget: bool,
}

/// One-dimensional trajectory analysis; needs every iterate recorded.
pub fn analyze_1d(
    traj: &Trajectory<f64>,
    reference: &ReferenceSolution,
    eps: f64,
    constants: &Constants,
) -> Result<OneDReport> {
    if reference.w_lambda.len() != 1 || traj.config.w0.len() != 1 {
        return Err(domain("analyze_1d needs a one-dimensional run"));
    }
    if traj.config.record_stride != 1 {
        return Err(domain("analyze_1d needs record_stride = 1"));
    }
    let eta = traj.config.eta.ok_or_else(|| domain("trajectory has no stepsize"))?;
    let lambda = traj.config.lambda;
    let wl = reference.w_lambda[0];
    let mut crossings = 0;
    let mut prev_sign = 0.0;
    for (_, w) in &traj.snapshots {
        let s = (w[0] - wl).signum();
        if w[0] == wl {
            continue;
        }
        if prev_sign != 0.0 && s != prev_sign {
            crossings += 1;
        }
        prev_sign = s;
    }
    let steps_to_eps = steps_to_error(traj, reference, eps)?;
    let w0 = traj.config.w0[0];
    let budget =
        constants.budget_1d_c / (eta * lambda) * ((w0.abs() + 1.0) / (eps * lambda * (1.0 / lambda).ln())).ln();
    Ok(OneDReport {
        crossings,
        converged: steps_to_eps.is_some(),
        steps_to_eps,
        budget,
        within_budget: steps_to_eps.is_some_and(|s| s as f64 <= budget),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{make_1d_dataset, make_hard_dataset, sample_separable};
    use crate::optimizers::{run_gd, RunEcho};

    fn synthetic(risk: Vec<f64>, status: TerminalStatus) -> Trajectory<f64> {
        let n = risk.len();
        Trajectory {
            loss: risk.clone(),
            potential: vec![0.1; n],
            grad_norm: vec![0.1; n],
            param_norm: vec![1.0; n],
            risk,
            dist_to_ref: None,
            snapshots: vec![(n - 1, vec![0.0])],
            averaged: None,
            terminal_status: status,
            steps_run: n - 1,
            config: RunEcho {
                optimizer: "gd".into(),
                eta: Some(1.0),
                lambda: 0.0,
                momentum: None,
                smoothness: None,
                max_steps: n,
                record_stride: 1,
                convergence: ConvergenceTest::Never,
                w0: vec![0.0],
            },
        }
    }

    #[test]
    fn phase_of_synthetic_sequences() {
        let c = Constants::bundled();
        let meta = DatasetMeta { gamma: 0.5, n: 2 };
        let mono = synthetic(vec![5.0, 4.0, 3.0, 3.0, 1.0], TerminalStatus::Converged);
        assert_eq!(measure_phase(&mono, meta, &c).unwrap().tau_empirical, Some(0));
        let peak = synthetic(vec![1.0, 2.0, 3.0, 4.0, 3.0, 2.0, 1.0], TerminalStatus::Converged);
        let rep = measure_phase(&peak, meta, &c).unwrap();
        assert_eq!(rep.tau_empirical, Some(3));
        assert_eq!(rep.regime, Regime::EosRegime);
        assert!(rep.censored);
        let div = synthetic(vec![1.0, 2.0, 1e9], TerminalStatus::Diverged);
        let rep = measure_phase(&div, meta, &c).unwrap();
        assert_eq!(rep.tau_empirical, None);
        assert!(rep.tau_bound_small_reg > 0.0);
    }

    #[test]
    fn steps_to_error_cases() {
        let ds = make_hard_dataset::<f64>(0.05).unwrap();
        let sol = solve_minimizer(&ds, 1e-2, 1e-12).unwrap();
        let cfg = GDConfig::new(1.0, 1e-2, 2, 50).with_convergence(ConvergenceTest::Never);
        let tr = run_gd(&ds, &cfg, Some(&sol)).unwrap();
        assert_eq!(steps_to_error(&tr, &sol, 1.0).unwrap(), Some(0));
        assert_eq!(steps_to_error(&tr, &sol, 1e-12).unwrap(), None);
        assert!(steps_to_error(&tr, &sol, 0.0).is_err());
    }

    #[test]
    fn formulas() {
        assert!((eta_critical(0.01).unwrap() - 21.714_724_095_162_59).abs() < 1e-9);
        assert!(eta_critical(0.5).is_err());
        assert!((eta_general_reg(0.5, 1e-3, 2.0) - 125f64.cbrt()).abs() < 1e-12);
        assert_eq!(eta_small_reg(0.5, 2, 1e-6, 1.0), 500.0);
        assert!(!small_reg_gate(0.5, 1, 1e-9, 1.0));
    }

    #[test]
    fn param_bound_at_origin() {
        let ds = sample_separable::<f64>(8, 3, 0.3, 0).unwrap();
        let cfg = GDConfig::new(5.0, 1e-3, 3, 300).with_convergence(ConvergenceTest::Never);
        let tr = run_gd(&ds, &cfg, None).unwrap();
        let meta = DatasetMeta::of(&ds).unwrap();
        let recs = check_bounds(&tr, meta, None, &Constants::bundled(), &BoundKind::ALL).unwrap();
        let first = recs.iter().find(|r| r.which_bound == BoundKind::ParamBound && r.step == 0).unwrap();
        assert_eq!(first.lhs, 0.0);
        assert!(first.rhs > 0.0);
        assert!(recs.iter().all(|r| !r.is_violation()));
        for k in ["eos_avg_loss", "param_decay", "contraction_risk"] {
            assert_eq!(BoundKind::parse(k).unwrap().name(), k);
        }
    }

    #[test]
    fn no_eos_records_without_gate() {
        let ds = sample_separable::<f64>(4, 2, 0.3, 0).unwrap();
        let cfg = GDConfig::new(10.0, 0.1, 2, 20).with_convergence(ConvergenceTest::Never);
        let tr = run_gd(&ds, &cfg, None).unwrap();
        let recs = check_bounds(&tr, DatasetMeta::of(&ds).unwrap(), None, &Constants::bundled(), &BoundKind::ALL)
            .unwrap();
        assert!(recs.iter().all(|r| !r.which_bound.is_eos_family()));
    }

    #[test]
    fn one_dim_fixed_point_and_sides() {
        let ds = make_1d_dataset::<f64>(&[0.5]).unwrap();
        let lambda = 1e-3;
        let sol = solve_minimizer(&ds, lambda, 1e-12).unwrap();
        let eta = eta_critical(lambda).unwrap() / 10.0;
        let c = Constants::bundled();
        let run = |w0: f64| {
            let cfg = GDConfig::new(eta, lambda, 1, 200_000)
                .with_stride(1)
                .with_w0(ParamVector::new(vec![w0]).unwrap())
                .with_convergence(ConvergenceTest::Gap(1e-10));
            run_gd(&ds, &cfg, Some(&sol)).unwrap()
        };
        let rep = analyze_1d(&run(sol.w_lambda[0]), &sol, 1e-10, &c).unwrap();
        assert_eq!((rep.crossings, rep.steps_to_eps), (0, Some(0)));
        let rep = analyze_1d(&run(-50.0), &sol, 1e-10, &c).unwrap();
        assert!(rep.converged && rep.crossings <= 1);
        let tr = run(50.0);
        let rep = analyze_1d(&tr, &sol, 1e-10, &c).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.crossings, 0);
        assert!(tr.snapshots.windows(2).all(|w| w[1].1[0] <= w[0].1[0]));
    }

    #[test]
    fn critical_rejects_bad_inputs() {
        let ds = make_hard_dataset::<f64>(0.05).unwrap();
        let c = Constants::bundled();
        assert!(find_critical_stepsize(&ds, 0.5, InitPolicy::Zero, 100, 1e-8, &c).is_err());
        let bad = LabeledDataset::from_rows(vec![vec![0.5, 0.0], vec![0.9, 0.3]], vec![1, 1]).unwrap();
        assert!(matches!(
            find_critical_stepsize(&bad, 1e-2, InitPolicy::Zero, 100, 1e-8, &c),
            Err(Error::SupportRank(_))
        ));
    }

    #[test]
    fn critical_bracket_is_reproducible() {
        let ds = make_hard_dataset::<f64>(0.099).unwrap();
        let c = Constants::bundled();
        let policy = InitPolicy::RandomBall { radius_factor: 0.1, seed: 0, seeds: 5 };
        let a = find_critical_stepsize(&ds, 1e-2, policy, 20_000, 1e-10, &c).unwrap();
        let b = find_critical_stepsize(&ds, 1e-2, policy, 20_000, 1e-10, &c).unwrap();
        assert_eq!(a, b);
        assert!(a.eta_convergent_max < a.eta_divergent_min);
        assert!(a.bracket_ratio <= 1.05);
        assert!(a.eta_divergent_min <= 2.01 / 1e-2);
    }
}
