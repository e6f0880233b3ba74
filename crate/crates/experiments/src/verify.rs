//! Randomized checks of the pointwise, structural and trajectory inequalities.

use std::collections::BTreeMap;

use eosgd_core::analysis::{check_bounds, BoundKind, DatasetMeta};
use eosgd_core::datasets::{sample_separable, seeded_rng};
use eosgd_core::objective::{evaluate_slice, hessian_slice, pointwise_logistic, risk};
use eosgd_core::optimizers::{run_gd, ConvergenceTest};
use eosgd_core::reference::{eig_extremes, solve_minimizer, DEFAULT_TOL};
use eosgd_core::{Constants, Dataset, GDConfig, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::emit::{PlotPoint, Tabular};

pub const VERIFY_SCHEMA: &str = "eosgd.verify/1";
pub(crate) const STREAM_VERIFY: u64 = 7;
const SLACK: f64 = 1e-10;
const MAX_EXAMPLES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Points for the pointwise derivative chain.
    pub chain_points: usize,
    /// Random `(dataset, w)` pairs for the gradient and Hessian facts.
    pub fact_pairs: usize,
    pub fd_triples: usize,
    pub minimizer_pairs: usize,
    /// Random gradient-descent runs with `ηλ ≤ 1/2`.
    pub runs: usize,
    pub run_steps: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            chain_points: 10_000,
            fact_pairs: 1_000,
            fd_triples: 100,
            minimizer_pairs: 20,
            runs: 50,
            run_steps: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionReport {
    pub name: String,
    pub checks: usize,
    pub violations: usize,
    /// The first few violations, described.
    pub examples: Vec<String>,
    /// Largest `lhs − rhs` seen; negative when every check held with room.
    pub worst_excess: Option<f64>,
}

impl SectionReport {
    fn new(name: &str) -> Self {
        Self { name: name.into(), checks: 0, violations: 0, examples: Vec::new(), worst_excess: None }
    }

    fn bump(&mut self, excess: f64) {
        self.worst_excess = Some(self.worst_excess.map_or(excess, |w| w.max(excess)));
    }

    /// Records `lhs ≤ rhs + SLACK`.
    fn le(&mut self, lhs: f64, rhs: f64, what: impl FnOnce() -> String) {
        self.checks += 1;
        let excess = lhs - rhs;
        self.bump(excess);
        if !(excess <= SLACK) {
            self.fail(what());
        }
    }

    fn holds(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.fail(what());
        }
    }

    fn fail(&mut self, msg: String) {
        self.violations += 1;
        if self.examples.len() < MAX_EXAMPLES {
            self.examples.push(msg);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub sections: Vec<SectionReport>,
    pub total_checks: usize,
    pub total_violations: usize,
    /// Bound-check records per bound kind over all runs.
    pub bound_records: BTreeMap<String, usize>,
}

impl VerifyReport {
    pub fn section(&self, name: &str) -> Option<&SectionReport> {
        self.sections.iter().find(|s| s.name == name)
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp()
}

fn random_dataset(rng: &mut ChaCha8Rng, max_n: usize, max_d: usize) -> Result<Dataset> {
    let n = rng.random_range(1..=max_n);
    let d = rng.random_range(1..=max_d);
    let gamma = rng.random_range(0.05..1.0);
    sample_separable(n, d, gamma, rng.random())
}

fn random_w(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect()
}

/// A random separable dataset with `(λ, η)` satisfying `ηλ ≤ 1/2`.
pub fn random_run(rng: &mut ChaCha8Rng) -> Result<(Dataset, f64, f64)> {
    let n = rng.random_range(2..=32);
    let d = rng.random_range(2..=8);
    let gamma = rng.random_range(0.05..0.5);
    let ds = sample_separable::<f64>(n, d, gamma, rng.random())?;
    let lambda = log_uniform(rng, 1e-5, 1e-2);
    let eta = log_uniform(rng, 0.5, (0.5 / lambda).min(200.0));
    Ok((ds, lambda, eta))
}

pub fn run_verify(cfg: &VerifyConfig, constants: &Constants) -> Result<VerifyReport> {
    let mut rng = seeded_rng(cfg.seed, STREAM_VERIFY);
    let mut sections = vec![
        chain(&mut rng, cfg.chain_points)?,
        basic_facts(&mut rng, cfg.fact_pairs)?,
        finite_differences(&mut rng, cfg.fd_triples)?,
        minimizer_bounds(&mut rng, cfg.minimizer_pairs)?,
    ];
    let (runs, counts) = trajectories(&mut rng, cfg, constants)?;
    sections.extend(runs);
    let total_checks = sections.iter().map(|s| s.checks).sum();
    let total_violations = sections.iter().map(|s| s.violations).sum();
    Ok(VerifyReport { sections, total_checks, total_violations, bound_records: counts })
}

/// `ℓ'' < |ℓ'| < ℓ` strictly.
fn chain(rng: &mut ChaCha8Rng, points: usize) -> Result<SectionReport> {
    let mut s = SectionReport::new("derivative_chain");
    for _ in 0..points {
        let z: f64 = rng.random_range(-30.0..30.0);
        let (l, d1, d2): (f64, f64, f64) = pointwise_logistic(z)?;
        s.holds(d2 < d1.abs() && d1.abs() < l, || format!("z={z}: {d2} < {} < {l} fails", d1.abs()));
    }
    Ok(s)
}

/// Margin and potential relations between `∇L`, `∇²L`, `G` and `L`.
fn basic_facts(rng: &mut ChaCha8Rng, pairs: usize) -> Result<SectionReport> {
    let mut s = SectionReport::new("gradient_potential_facts");
    for _ in 0..pairs {
        let ds = random_dataset(rng, 20, 6)?;
        let cert = ds.certificate().expect("sampled data carries a certificate").clone();
        let scale = log_uniform(rng, 0.01, 100.0);
        let w = random_w(rng, ds.dim(), scale);
        let e = evaluate_slice(&ds, &w, 0.0)?;
        let (g, l, gamma) = (e.potential, e.loss, cert.gamma);
        let along: f64 = -e.grad_loss.iter().zip(&cert.direction).map(|(a, b)| a * b).sum::<f64>();
        let gn = e.grad_loss.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (_, hmax) = eig_extremes(hessian_slice(&ds, &w, 0.0)?);
        let tag = |what: &str| format!("{what} at n={} d={} |w|≈{scale:.3}", ds.count(), ds.dim());
        s.le(gamma * g, along, || tag("γG ≤ ⟨−∇L, w*⟩"));
        s.le(along, g, || tag("⟨−∇L, w*⟩ ≤ G"));
        s.le(gamma * g, gn, || tag("γG ≤ ‖∇L‖"));
        s.le(gn, g, || tag("‖∇L‖ ≤ G"));
        s.le(hmax, g, || tag("‖∇²L‖ ≤ G"));
        s.le(g, l, || tag("G ≤ L"));
        let n = ds.count() as f64;
        if l <= 2f64.ln() / n || g <= 1.0 / (2.0 * n) {
            s.le(l, 2.0 * g, || tag("L ≤ 2G"));
        }
    }
    Ok(s)
}

/// Central differences of `R` against the analytic gradient.
fn finite_differences(rng: &mut ChaCha8Rng, triples: usize) -> Result<SectionReport> {
    let mut s = SectionReport::new("finite_difference_gradient");
    let h = 1e-5;
    for _ in 0..triples {
        let ds = random_dataset(rng, 10, 5)?;
        let scale = log_uniform(rng, 0.1, 10.0);
        let w = random_w(rng, ds.dim(), scale);
        let lambda = log_uniform(rng, 1e-4, 1e-1);
        let e = evaluate_slice(&ds, &w, lambda)?;
        let mut err = 0.0;
        for k in 0..ds.dim() {
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[k] += h;
            wm[k] -= h;
            let fd = (risk(&ds, &wp, lambda) - risk(&ds, &wm, lambda)) / (2.0 * h);
            err += (fd - e.grad_risk[k]).powi(2);
        }
        let rel = err.sqrt() / e.grad_risk_norm().max(f64::MIN_POSITIVE);
        s.checks += 1;
        s.bump(rel - 1e-6);
        if !(rel <= 1e-6) {
            s.fail(format!("relative gradient error {rel:e} at λ={lambda:e}"));
        }
    }
    Ok(s)
}

/// `‖w_λ‖ ≤ (√2 + ln(γ²/λ))/γ` and `min R ≤ λ(2 + ln²(γ²/λ))/(2γ²)` for `λ < γ²`.
fn minimizer_bounds(rng: &mut ChaCha8Rng, pairs: usize) -> Result<SectionReport> {
    let mut s = SectionReport::new("minimizer_bounds");
    for _ in 0..pairs {
        let ds = random_dataset(rng, 20, 5)?;
        let gamma = ds.gamma().expect("certificate");
        let g2 = gamma * gamma;
        let lambda = log_uniform(rng, g2 * 1e-6, g2 * 0.5);
        let sol = solve_minimizer(&ds, lambda, DEFAULT_TOL)?;
        let lg = (g2 / lambda).ln();
        let wn = sol.w_lambda.iter().map(|v| v * v).sum::<f64>().sqrt();
        s.le(wn, (2f64.sqrt() + lg) / gamma, || format!("‖w_λ‖ bound at γ={gamma}, λ={lambda:e}"));
        s.le(sol.min_risk, lambda * (2.0 + lg * lg) / (2.0 * g2), || format!("min R bound at γ={gamma}, λ={lambda:e}"));
    }
    Ok(s)
}

type RunSections = (Vec<SectionReport>, BTreeMap<String, usize>);

fn trajectories(rng: &mut ChaCha8Rng, cfg: &VerifyConfig, constants: &Constants) -> Result<RunSections> {
    let mut eos = SectionReport::new("eos_bounds");
    let mut contraction = SectionReport::new("contraction");
    let mut decay = SectionReport::new("stable_decay");
    let mut angle = SectionReport::new("parameter_angle");
    let mut persist = SectionReport::new("gate_persistence");
    let mut counts = BTreeMap::new();
    for _ in 0..cfg.runs {
        let (ds, lambda, eta) = random_run(rng)?;
        let (n, d, gamma) = (ds.count(), ds.dim(), ds.gamma().expect("certificate"));
        let sol = solve_minimizer(&ds, lambda, DEFAULT_TOL)?;
        let gd = GDConfig::new(eta, lambda, d, cfg.run_steps).with_stride(1).with_convergence(ConvergenceTest::Never);
        let tr = run_gd(&ds, &gd, Some(&sol))?;
        let meta = DatasetMeta::of(&ds)?;
        let recs = check_bounds(&tr, meta, Some(&sol), constants, &BoundKind::ALL)?;
        let tag = format!("n={n} d={d} γ={gamma:.3} λ={lambda:.3e} η={eta:.3}");
        for r in &recs {
            *counts.entry(r.which_bound.name().to_string()).or_insert(0) += 1;
            let section = match r.which_bound {
                BoundKind::EosAvgLoss
                | BoundKind::EosParamNorm
                | BoundKind::ParamBound
                | BoundKind::PotentialBound
                | BoundKind::AvgLossBound => &mut eos,
                BoundKind::ContractionDescent
                | BoundKind::ContractionRisk
                | BoundKind::ContractionNorm
                | BoundKind::PotentialPersistence => &mut contraction,
                BoundKind::StableRiskDecaySmallReg | BoundKind::StableRiskDecayGeneralReg | BoundKind::ParamDecay => {
                    &mut decay
                }
            };
            section.checks += 1;
            section.bump(-r.margin);
            if r.is_violation() {
                section.fail(format!("{} at t={} ({}): {} > {}", r.which_bound.name(), r.step, tag, r.lhs, r.rhs));
            }
        }
        // ⟨w_t, w*⟩ > 0 from the first step on, starting at zero with ηλ < 1.
        let dir = &ds.certificate().expect("certificate").direction;
        for (t, w) in tr.snapshots.iter().filter(|(t, _)| *t >= 1) {
            let ip: f64 = w.iter().zip(dir).map(|(a, b)| a * b).sum();
            angle.holds(ip > 0.0, || format!("⟨w_t, w*⟩ = {ip} at t={t} ({tag})"));
        }
        // Once the loss is below min{1/(2e²η), ln2/n} it stays there, under
        // the small-regularization gate and stepsize.
        let c1 = constants.c1;
        if eosgd_core::analysis::small_reg_gate(meta.gamma, n, lambda, c1)
            && eta <= eosgd_core::analysis::eta_small_reg(meta.gamma, n, lambda, c1)
        {
            let thr = (1.0 / (2.0 * std::f64::consts::E.powi(2) * eta)).min(2f64.ln() / n as f64);
            if let Some(s) = tr.loss.iter().position(|&l| l <= thr) {
                for (t, &l) in tr.loss.iter().enumerate().skip(s) {
                    persist.le(l, thr, || format!("L = {l} above {thr} at t={t} after entry at {s} ({tag})"));
                }
            }
        }
    }
    Ok((vec![eos, contraction, decay, angle, persist], counts))
}

impl Tabular for VerifyReport {
    const SCHEMA: &'static str = VERIFY_SCHEMA;

    fn columns(&self) -> Vec<&'static str> {
        vec!["section", "checks", "violations", "worst_excess", "first_violation"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.sections
            .iter()
            .map(|s| {
                vec![
                    s.name.clone(),
                    s.checks.to_string(),
                    s.violations.to_string(),
                    crate::emit::cell_opt_f(s.worst_excess),
                    s.examples.first().cloned().unwrap_or_default(),
                ]
            })
            .collect()
    }

    fn notes(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("total_checks".into(), self.total_checks.to_string());
        m.insert("total_violations".into(), self.total_violations.to_string());
        m
    }

    fn plot(&self) -> Vec<PlotPoint> {
        Vec::new()
    }
}
