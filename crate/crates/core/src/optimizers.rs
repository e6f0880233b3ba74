//! Constant-stepsize gradient descent, constant-momentum Nesterov and
//! loss-normalized (adaptive) gradient descent.
//!
//! Every optimizer is driven through an observer callback that sees each
//! iterate once. [`run_gd`] and friends record full trajectories with it;
//! long sweeps attach a lightweight observer instead and get bitwise the same
//! iterates without storing dense diagnostics.

use serde::{Deserialize, Serialize};

use crate::datasets::LabeledDataset;
use crate::error::{domain, Error, Result};
use crate::objective::{check_dim, evaluate_into, log_abs_logistic_deriv, log_logistic_loss, ParamVector};
use crate::reference::ReferenceSolution;
use crate::scalar::{dist, dot, norm, Scalar};

pub const DEFAULT_DIV_RISK_CAP: f64 = 1e6;
pub const DEFAULT_DIV_NORM_CAP: f64 = 1e8;
/// Relative tolerance of a single "nonincreasing" comparison.
pub const MONOTONE_RTOL: f64 = 1e-12;

/// When a run counts as converged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "tol", rename_all = "snake_case")]
pub enum ConvergenceTest {
    /// `‖∇R(w_t)‖ ≤ tol`.
    GradNorm(f64),
    /// `R(w_t) − min R ≤ tol`; needs a reference solution.
    Gap(f64),
    /// `‖w_t − w_λ‖ ≤ tol`; needs a reference solution.
    ParamDistance(f64),
    /// Run the whole budget.
    Never,
}

impl ConvergenceTest {
    fn needs_reference(&self) -> bool {
        matches!(self, Self::Gap(_) | Self::ParamDistance(_))
    }

    fn check(&self) -> Result<()> {
        match *self {
            Self::GradNorm(t) | Self::Gap(t) | Self::ParamDistance(t) if !(t >= 0.0) => {
                Err(domain(format!("convergence tolerance must be ≥ 0, got {t}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    Converged,
    Diverged,
    BudgetExhausted,
    /// The observer asked to stop.
    Stopped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    StableRegime,
    EosRegime,
    Nonconvergent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GDConfig<T> {
    pub eta: T,
    pub lambda: T,
    pub w0: ParamVector<T>,
    pub max_steps: usize,
    /// Keep every `record_stride`-th iterate; diagnostics are kept every step.
    pub record_stride: usize,
    pub convergence: ConvergenceTest,
    pub div_risk_cap: T,
    pub div_norm_cap: T,
}

impl<T: Scalar> GDConfig<T> {
    /// Defaults: `w0 = 0`, stride 1000, gradient-norm test at 1e-12, default caps.
    pub fn new(eta: T, lambda: T, dim: usize, max_steps: usize) -> Self {
        Self {
            eta,
            lambda,
            w0: ParamVector::zeros(dim),
            max_steps,
            record_stride: 1000,
            convergence: ConvergenceTest::GradNorm(1e-12),
            div_risk_cap: T::lit(DEFAULT_DIV_RISK_CAP),
            div_norm_cap: T::lit(DEFAULT_DIV_NORM_CAP),
        }
    }

    pub fn with_w0(mut self, w0: ParamVector<T>) -> Self {
        self.w0 = w0;
        self
    }

    pub fn with_convergence(mut self, c: ConvergenceTest) -> Self {
        self.convergence = c;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    fn check(&self) -> Result<()> {
        if !(self.eta > T::zero() && self.eta.is_finite()) {
            return Err(domain(format!("eta must be > 0, got {}", self.eta)));
        }
        if !(self.lambda >= T::zero() && self.lambda.is_finite()) {
            return Err(domain(format!("lambda must be ≥ 0, got {}", self.lambda)));
        }
        check_common(self.max_steps, self.record_stride, self.div_risk_cap, self.div_norm_cap)?;
        self.convergence.check()
    }
}

fn check_common<T: Scalar>(max_steps: usize, stride: usize, risk_cap: T, norm_cap: T) -> Result<()> {
    if max_steps == 0 {
        return Err(domain("max_steps must be ≥ 1"));
    }
    if stride == 0 {
        return Err(domain("record_stride must be ≥ 1"));
    }
    if !(risk_cap > T::zero() && norm_cap > T::zero()) {
        return Err(domain("divergence caps must be positive"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NesterovConfig<T> {
    pub lambda: T,
    pub w0: ParamVector<T>,
    pub max_steps: usize,
    pub record_stride: usize,
    pub convergence: ConvergenceTest,
    /// `β`; defaults to `1 + λ`.
    pub smoothness: Option<T>,
    /// `μ`; defaults to `λ`.
    pub strong_convexity: Option<T>,
    pub div_risk_cap: T,
    pub div_norm_cap: T,
}

impl<T: Scalar> NesterovConfig<T> {
    pub fn new(lambda: T, dim: usize, max_steps: usize) -> Self {
        Self {
            lambda,
            w0: ParamVector::zeros(dim),
            max_steps,
            record_stride: 1000,
            convergence: ConvergenceTest::GradNorm(1e-12),
            smoothness: None,
            strong_convexity: None,
            div_risk_cap: T::lit(DEFAULT_DIV_RISK_CAP),
            div_norm_cap: T::lit(DEFAULT_DIV_NORM_CAP),
        }
    }

    pub fn smoothness(&self) -> T {
        self.smoothness.unwrap_or(T::one() + self.lambda)
    }

    pub fn strong_convexity(&self) -> T {
        self.strong_convexity.unwrap_or(self.lambda)
    }

    /// `(√κ − 1)/(√κ + 1)` with `κ = β/μ`.
    pub fn momentum(&self) -> T {
        let k = (self.smoothness() / self.strong_convexity()).sqrt();
        (k - T::one()) / (k + T::one())
    }

    fn check(&self) -> Result<()> {
        if !(self.lambda > T::zero()) {
            return Err(domain("Nesterov needs lambda > 0"));
        }
        let (b, m) = (self.smoothness(), self.strong_convexity());
        if !(m > T::zero() && m <= b && b.is_finite()) {
            return Err(domain(format!("need 0 < strong_convexity ≤ smoothness, got {m} and {b}")));
        }
        check_common(self.max_steps, self.record_stride, self.div_risk_cap, self.div_norm_cap)?;
        self.convergence.check()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveConfig<T> {
    pub eta: T,
    pub w0: ParamVector<T>,
    pub max_steps: usize,
    pub average_iterates: bool,
    pub record_stride: usize,
    pub convergence: ConvergenceTest,
    pub div_norm_cap: T,
}

impl<T: Scalar> AdaptiveConfig<T> {
    pub fn new(eta: T, dim: usize, max_steps: usize) -> Self {
        Self {
            eta,
            w0: ParamVector::zeros(dim),
            max_steps,
            average_iterates: true,
            record_stride: 1000,
            convergence: ConvergenceTest::Never,
            div_norm_cap: T::lit(DEFAULT_DIV_NORM_CAP),
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.eta > T::zero() && self.eta.is_finite()) {
            return Err(domain(format!("eta must be > 0, got {}", self.eta)));
        }
        if self.convergence.needs_reference() {
            return Err(domain("adaptive GD has no regularized reference; use gradient-norm or no test"));
        }
        check_common(self.max_steps, self.record_stride, T::one(), self.div_norm_cap)?;
        self.convergence.check()
    }
}

/// Settings echoed into every trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEcho {
    pub optimizer: String,
    pub eta: Option<f64>,
    pub lambda: f64,
    pub momentum: Option<f64>,
    pub smoothness: Option<f64>,
    pub max_steps: usize,
    pub record_stride: usize,
    pub convergence: ConvergenceTest,
    pub w0: Vec<f64>,
}

/// What an observer sees at step `t` (the iterate `w_t` and its diagnostics).
#[derive(Debug)]
pub struct StepView<'a, T> {
    pub t: usize,
    pub w: &'a [T],
    pub grad_risk: &'a [T],
    pub risk: T,
    pub loss: T,
    pub potential: T,
    pub grad_norm: T,
    pub param_norm: T,
    pub dist_to_ref: Option<T>,
}

/// Diagnostics of the running average `w̄_t = (1/(t+1)) Σ_{k≤t} w_k`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AveragedDiagnostics<T> {
    pub loss: Vec<T>,
    pub param_norm: Vec<T>,
    pub final_average: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub risk: Vec<T>,
    pub loss: Vec<T>,
    pub potential: Vec<T>,
    pub grad_norm: Vec<T>,
    pub param_norm: Vec<T>,
    /// `‖w_t − w_λ‖`, present when a reference was supplied.
    pub dist_to_ref: Option<Vec<T>>,
    /// `(t, w_t)` for every `record_stride`-th step and the last step.
    pub snapshots: Vec<(usize, Vec<T>)>,
    pub averaged: Option<AveragedDiagnostics<T>>,
    pub terminal_status: TerminalStatus,
    pub steps_run: usize,
    pub config: RunEcho,
}

impl<T: Scalar> Trajectory<T> {
    pub fn final_iterate(&self) -> &[T] {
        &self.snapshots.last().expect("at least w0 is recorded").1
    }

    pub fn len(&self) -> usize {
        self.risk.len()
    }

    pub fn is_empty(&self) -> bool {
        self.risk.is_empty()
    }
}

/// Largest `t` at which the sequence rises (`r_t > r_{t−1}(1 + 1e-12)`), or 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct MonotoneTracker {
    prev: Option<f64>,
    last_rise: usize,
}

impl MonotoneTracker {
    pub fn push(&mut self, t: usize, r: f64) {
        if let Some(p) = self.prev {
            if !(r <= p + MONOTONE_RTOL * p.abs()) {
                self.last_rise = t;
            }
        }
        self.prev = Some(r);
    }

    pub fn tau_hat(&self) -> usize {
        self.last_rise
    }
}

pub fn monotone_suffix_start<T: Scalar>(risk: &[T]) -> usize {
    let mut m = MonotoneTracker::default();
    for (t, r) in risk.iter().enumerate() {
        m.push(t, r.to_f64_lossy());
    }
    m.tau_hat()
}

/// Regime from the start of the monotone risk suffix and the terminal status.
pub fn regime_from(tau_hat: usize, steps_run: usize, status: TerminalStatus) -> Regime {
    if tau_hat == 0 && status != TerminalStatus::Diverged {
        Regime::StableRegime
    } else if tau_hat >= 1 && tau_hat < steps_run && status == TerminalStatus::Converged {
        Regime::EosRegime
    } else {
        Regime::Nonconvergent
    }
}

/// Stable when the risk never rises; EoS when it rises only before some
/// `τ̂ < steps_run` and the run converged; nonconvergent otherwise.
pub fn classify_regime<T: Scalar>(traj: &Trajectory<T>) -> Regime {
    regime_from(monotone_suffix_start(&traj.risk), traj.steps_run, traj.terminal_status)
}

struct RefT<T> {
    w: Vec<T>,
    min_risk: T,
}

fn ref_to<T: Scalar>(r: Option<&ReferenceSolution>, d: usize) -> Result<Option<RefT<T>>> {
    match r {
        None => Ok(None),
        Some(r) => {
            if r.w_lambda.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: r.w_lambda.len() });
            }
            Ok(Some(RefT { w: r.w_lambda.iter().map(|&v| T::lit(v)).collect(), min_risk: T::lit(r.min_risk) }))
        }
    }
}

fn converged<T: Scalar>(c: ConvergenceTest, v: &StepView<'_, T>, rf: Option<&RefT<T>>) -> bool {
    match (c, rf) {
        (ConvergenceTest::GradNorm(tol), _) => v.grad_norm <= T::lit(tol),
        (ConvergenceTest::Gap(tol), Some(r)) => v.risk - r.min_risk <= T::lit(tol),
        (ConvergenceTest::ParamDistance(tol), Some(_)) => v.dist_to_ref.is_some_and(|d| d <= T::lit(tol)),
        _ => false,
    }
}

fn diverged<T: Scalar>(v: &StepView<'_, T>, risk_cap: T, norm_cap: T) -> bool {
    !v.risk.is_finite() || !v.param_norm.is_finite() || v.risk > risk_cap || v.param_norm > norm_cap
}

/// Outcome of a driven run.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveOutcome<T> {
    pub status: TerminalStatus,
    pub steps_run: usize,
    pub final_w: Vec<T>,
}

/// Runs `w_{t+1} = w_t − η∇R(w_t)` and calls `observe` on `w_0, w_1, …`.
pub fn drive_gd<T: Scalar, F: FnMut(&StepView<'_, T>)>(
    ds: &LabeledDataset<T>,
    cfg: &GDConfig<T>,
    reference: Option<&ReferenceSolution>,
    mut observe: F,
) -> Result<DriveOutcome<T>> {
    drive_gd_while(ds, cfg, reference, |v| {
        observe(v);
        true
    })
}

/// [`drive_gd`] whose observer returns `false` to stop the run
/// (status [`TerminalStatus::Stopped`]).
pub fn drive_gd_while<T: Scalar, F: FnMut(&StepView<'_, T>) -> bool>(
    ds: &LabeledDataset<T>,
    cfg: &GDConfig<T>,
    reference: Option<&ReferenceSolution>,
    mut observe: F,
) -> Result<DriveOutcome<T>> {
    cfg.check()?;
    let d = ds.dim();
    check_dim(ds, cfg.w0.len())?;
    if cfg.convergence.needs_reference() && reference.is_none() {
        return Err(domain("this convergence test needs a reference solution"));
    }
    let rf = ref_to::<T>(reference, d)?;
    let mut w = cfg.w0.as_slice().to_vec();
    let (mut gl, mut g) = (vec![T::zero(); d], vec![T::zero(); d]);
    let mut t = 0;
    loop {
        let s = evaluate_into(ds, &w, cfg.lambda, &mut gl, &mut g);
        let view = StepView {
            t,
            w: &w,
            grad_risk: &g,
            risk: s.risk,
            loss: s.loss,
            potential: s.potential,
            grad_norm: norm(&g),
            param_norm: norm(&w),
            dist_to_ref: rf.as_ref().map(|r| dist(&w, &r.w)),
        };
        let keep_going = observe(&view);
        let status = if diverged(&view, cfg.div_risk_cap, cfg.div_norm_cap) {
            Some(TerminalStatus::Diverged)
        } else if converged(cfg.convergence, &view, rf.as_ref()) {
            Some(TerminalStatus::Converged)
        } else if t == cfg.max_steps {
            Some(TerminalStatus::BudgetExhausted)
        } else if !keep_going {
            Some(TerminalStatus::Stopped)
        } else {
            None
        };
        if let Some(status) = status {
            return Ok(DriveOutcome { status, steps_run: t, final_w: w });
        }
        for (wi, gi) in w.iter_mut().zip(&g) {
            *wi -= cfg.eta * *gi;
        }
        t += 1;
    }
}

/// Constant-momentum Nesterov; `observe` sees the main sequence `w_t`.
pub fn drive_nesterov<T: Scalar, F: FnMut(&StepView<'_, T>)>(
    ds: &LabeledDataset<T>,
    cfg: &NesterovConfig<T>,
    reference: Option<&ReferenceSolution>,
    mut observe: F,
) -> Result<DriveOutcome<T>> {
    cfg.check()?;
    let d = ds.dim();
    check_dim(ds, cfg.w0.len())?;
    if cfg.convergence.needs_reference() && reference.is_none() {
        return Err(domain("this convergence test needs a reference solution"));
    }
    let rf = ref_to::<T>(reference, d)?;
    let beta_m = cfg.momentum();
    let step = T::one() / cfg.smoothness();
    let mut w = cfg.w0.as_slice().to_vec();
    let mut w_prev = w.clone();
    let mut v = vec![T::zero(); d];
    let (mut gl, mut g) = (vec![T::zero(); d], vec![T::zero(); d]);
    let (mut vgl, mut vg) = (vec![T::zero(); d], vec![T::zero(); d]);
    let mut t = 0;
    loop {
        let s = evaluate_into(ds, &w, cfg.lambda, &mut gl, &mut g);
        let view = StepView {
            t,
            w: &w,
            grad_risk: &g,
            risk: s.risk,
            loss: s.loss,
            potential: s.potential,
            grad_norm: norm(&g),
            param_norm: norm(&w),
            dist_to_ref: rf.as_ref().map(|r| dist(&w, &r.w)),
        };
        observe(&view);
        let status = if diverged(&view, cfg.div_risk_cap, cfg.div_norm_cap) {
            Some(TerminalStatus::Diverged)
        } else if converged(cfg.convergence, &view, rf.as_ref()) {
            Some(TerminalStatus::Converged)
        } else if t == cfg.max_steps {
            Some(TerminalStatus::BudgetExhausted)
        } else {
            None
        };
        if let Some(status) = status {
            return Ok(DriveOutcome { status, steps_run: t, final_w: w });
        }
        for k in 0..d {
            v[k] = w[k] + beta_m * (w[k] - w_prev[k]);
        }
        evaluate_into(ds, &v, cfg.lambda, &mut vgl, &mut vg);
        std::mem::swap(&mut w_prev, &mut w);
        for k in 0..d {
            w[k] = v[k] - step * vg[k];
        }
        t += 1;
    }
}

/// `∇L(w)/L(w)` through log-space weights, so the ratio stays finite after
/// `L` itself underflows.
fn normalized_loss_gradient<T: Scalar>(ds: &LabeledDataset<T>, w: &[T], out: &mut [T], logs: &mut Vec<(T, T)>) {
    logs.clear();
    let mut top = T::neg_infinity();
    for i in 0..ds.count() {
        let m = dot(ds.signed_row(i), w);
        let (a, b) = (log_abs_logistic_deriv(m), log_logistic_loss(m));
        top = top.max(b);
        logs.push((a, b));
    }
    out.iter_mut().for_each(|o| *o = T::zero());
    let mut denom = T::zero();
    for (i, &(a, b)) in logs.iter().enumerate() {
        denom += (b - top).exp();
        let c = (a - top).exp();
        for (o, z) in out.iter_mut().zip(ds.signed_row(i)) {
            *o -= c * *z;
        }
    }
    out.iter_mut().for_each(|o| *o /= denom);
}

/// `w_{t+1} = w_t − η∇L(w_t)/L(w_t)`, unregularized. The second observer
/// argument is the running average `w̄_t` when averaging is on.
pub fn drive_adaptive<T: Scalar, F: FnMut(&StepView<'_, T>, Option<&[T]>)>(
    ds: &LabeledDataset<T>,
    cfg: &AdaptiveConfig<T>,
    mut observe: F,
) -> Result<DriveOutcome<T>> {
    cfg.check()?;
    let d = ds.dim();
    check_dim(ds, cfg.w0.len())?;
    let mut w = cfg.w0.as_slice().to_vec();
    let mut avg = w.clone();
    let (mut gl, mut g) = (vec![T::zero(); d], vec![T::zero(); d]);
    let mut dir = vec![T::zero(); d];
    let mut logs = Vec::with_capacity(ds.count());
    let mut t = 0;
    loop {
        let s = evaluate_into(ds, &w, T::zero(), &mut gl, &mut g);
        let view = StepView {
            t,
            w: &w,
            grad_risk: &g,
            risk: s.risk,
            loss: s.loss,
            potential: s.potential,
            grad_norm: norm(&g),
            param_norm: norm(&w),
            dist_to_ref: None,
        };
        observe(&view, cfg.average_iterates.then_some(avg.as_slice()));
        let status = if !view.param_norm.is_finite() || view.param_norm > cfg.div_norm_cap {
            Some(TerminalStatus::Diverged)
        } else if converged(cfg.convergence, &view, None) {
            Some(TerminalStatus::Converged)
        } else if t == cfg.max_steps {
            Some(TerminalStatus::BudgetExhausted)
        } else {
            None
        };
        if let Some(status) = status {
            let final_w = if cfg.average_iterates { avg } else { w };
            return Ok(DriveOutcome { status, steps_run: t, final_w });
        }
        normalized_loss_gradient(ds, &w, &mut dir, &mut logs);
        for (wi, di) in w.iter_mut().zip(&dir) {
            *wi -= cfg.eta * *di;
        }
        t += 1;
        let inv = T::one() / T::lit((t + 1) as f64);
        for (a, wi) in avg.iter_mut().zip(&w) {
            *a += (*wi - *a) * inv;
        }
    }
}

struct Recorder<T> {
    stride: usize,
    traj: Trajectory<T>,
}

impl<T: Scalar> Recorder<T> {
    fn new(stride: usize, with_ref: bool, config: RunEcho) -> Self {
        Self {
            stride,
            traj: Trajectory {
                risk: Vec::new(),
                loss: Vec::new(),
                potential: Vec::new(),
                grad_norm: Vec::new(),
                param_norm: Vec::new(),
                dist_to_ref: with_ref.then(Vec::new),
                snapshots: Vec::new(),
                averaged: None,
                terminal_status: TerminalStatus::BudgetExhausted,
                steps_run: 0,
                config,
            },
        }
    }

    fn push(&mut self, v: &StepView<'_, T>) {
        let tr = &mut self.traj;
        tr.risk.push(v.risk);
        tr.loss.push(v.loss);
        tr.potential.push(v.potential);
        tr.grad_norm.push(v.grad_norm);
        tr.param_norm.push(v.param_norm);
        if let (Some(d), Some(x)) = (tr.dist_to_ref.as_mut(), v.dist_to_ref) {
            d.push(x);
        }
        if v.t % self.stride == 0 {
            tr.snapshots.push((v.t, v.w.to_vec()));
        }
    }

    fn finish(mut self, out: DriveOutcome<T>, final_w: Vec<T>) -> Trajectory<T> {
        let tr = &mut self.traj;
        if tr.snapshots.last().map(|s| s.0) != Some(out.steps_run) {
            tr.snapshots.push((out.steps_run, final_w));
        }
        tr.terminal_status = out.status;
        tr.steps_run = out.steps_run;
        self.traj
    }
}

fn to_f64s<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64_lossy()).collect()
}

/// Gradient descent with a full trajectory record.
pub fn run_gd<T: Scalar>(
    ds: &LabeledDataset<T>,
    cfg: &GDConfig<T>,
    reference: Option<&ReferenceSolution>,
) -> Result<Trajectory<T>> {
    let echo = RunEcho {
        optimizer: "gd".into(),
        eta: Some(cfg.eta.to_f64_lossy()),
        lambda: cfg.lambda.to_f64_lossy(),
        momentum: None,
        smoothness: None,
        max_steps: cfg.max_steps,
        record_stride: cfg.record_stride,
        convergence: cfg.convergence,
        w0: to_f64s(cfg.w0.as_slice()),
    };
    let mut rec = Recorder::new(cfg.record_stride, reference.is_some(), echo);
    let out = drive_gd(ds, cfg, reference, |v| rec.push(v))?;
    let w = out.final_w.clone();
    Ok(rec.finish(out, w))
}

/// Nesterov with a full trajectory record (diagnostics at `w_t`).
pub fn run_nesterov<T: Scalar>(
    ds: &LabeledDataset<T>,
    cfg: &NesterovConfig<T>,
    reference: Option<&ReferenceSolution>,
) -> Result<Trajectory<T>> {
    let echo = RunEcho {
        optimizer: "nesterov".into(),
        eta: Some((T::one() / cfg.smoothness()).to_f64_lossy()),
        lambda: cfg.lambda.to_f64_lossy(),
        momentum: Some(cfg.momentum().to_f64_lossy()),
        smoothness: Some(cfg.smoothness().to_f64_lossy()),
        max_steps: cfg.max_steps,
        record_stride: cfg.record_stride,
        convergence: cfg.convergence,
        w0: to_f64s(cfg.w0.as_slice()),
    };
    let mut rec = Recorder::new(cfg.record_stride, reference.is_some(), echo);
    let out = drive_nesterov(ds, cfg, reference, |v| rec.push(v))?;
    let w = out.final_w.clone();
    Ok(rec.finish(out, w))
}

/// Adaptive GD with a full record. With averaging on, `averaged` holds the
/// loss and norm of `w̄_t` at every step.
pub fn run_adaptive<T: Scalar>(ds: &LabeledDataset<T>, cfg: &AdaptiveConfig<T>) -> Result<Trajectory<T>> {
    let echo = RunEcho {
        optimizer: "adaptive".into(),
        eta: Some(cfg.eta.to_f64_lossy()),
        lambda: 0.0,
        momentum: None,
        smoothness: None,
        max_steps: cfg.max_steps,
        record_stride: cfg.record_stride,
        convergence: cfg.convergence,
        w0: to_f64s(cfg.w0.as_slice()),
    };
    let mut rec = Recorder::new(cfg.record_stride, false, echo);
    let mut avg = cfg.average_iterates.then(AveragedDiagnostics::default);
    let mut last_w = Vec::new();
    let out = drive_adaptive(ds, cfg, |v, a| {
        rec.push(v);
        if let (Some(acc), Some(a)) = (avg.as_mut(), a) {
            acc.loss.push(crate::objective::risk(ds, a, T::zero()));
            acc.param_norm.push(norm(a));
        }
        last_w.clear();
        last_w.extend_from_slice(v.w);
    })?;
    if let Some(acc) = avg.as_mut() {
        acc.final_average = out.final_w.clone();
    }
    let mut traj = rec.finish(out, last_w);
    traj.averaged = avg;
    Ok(traj)
}

/// Online summary of a GD run, for sweeps too long to record densely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub status: TerminalStatus,
    pub steps_run: usize,
    /// Start of the monotone risk suffix.
    pub tau_hat: usize,
    pub regime: Regime,
    /// First `t` with `R(w_t) − min R ≤ eps`, when a reference and `eps` were given.
    pub steps_to_eps: Option<usize>,
    pub final_risk: f64,
    pub max_risk: f64,
    pub final_w: Vec<f64>,
}

/// Runs GD through [`drive_gd`] keeping only summary statistics.
pub fn summarize_gd<T: Scalar>(
    ds: &LabeledDataset<T>,
    cfg: &GDConfig<T>,
    reference: Option<&ReferenceSolution>,
    eps: Option<f64>,
) -> Result<RunSummary> {
    let mut mono = MonotoneTracker::default();
    let mut first_hit = None;
    let mut last = 0.0;
    let mut max_risk = f64::NEG_INFINITY;
    let min_risk = reference.map(|r| r.min_risk);
    let out = drive_gd(ds, cfg, reference, |v| {
        let r = v.risk.to_f64_lossy();
        mono.push(v.t, r);
        max_risk = max_risk.max(r);
        last = r;
        if let (None, Some(m), Some(e)) = (first_hit, min_risk, eps) {
            if r - m <= e {
                first_hit = Some(v.t);
            }
        }
    })?;
    Ok(RunSummary {
        status: out.status,
        steps_run: out.steps_run,
        tau_hat: mono.tau_hat(),
        regime: regime_from(mono.tau_hat(), out.steps_run, out.status),
        steps_to_eps: first_hit,
        final_risk: last,
        max_risk,
        final_w: to_f64s(&out.final_w),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{make_1d_dataset, make_hard_dataset, sample_separable};
    use crate::objective::evaluate_slice;
    use crate::reference::solve_minimizer;
    use approx::assert_relative_eq;

    #[test]
    fn first_gd_step_on_hard_dataset() {
        let ds = make_hard_dataset::<f64>(0.05).unwrap();
        for eta in [0.5, 3.0, 21.0] {
            let cfg = GDConfig::new(eta, 1e-3, 2, 1).with_stride(1);
            let tr = run_gd(&ds, &cfg, None).unwrap();
            let w1 = &tr.snapshots[1].1;
            assert_relative_eq!(w1[0], eta / 2.0 * 0.05, max_relative = 1e-15);
            assert_relative_eq!(w1[1], eta / 2.0 * 0.2, max_relative = 1e-15);
        }
    }

    #[test]
    fn observer_can_stop_on_first_increase() {
        let ds = make_hard_dataset::<f64>(0.05).unwrap();
        let cfg = GDConfig::new(21.0, 1e-4, 2, 1000).with_convergence(ConvergenceTest::Never);
        let mut prev = f64::INFINITY;
        let out = drive_gd_while(&ds, &cfg, None, |v| {
            let up = v.risk > prev;
            prev = v.risk;
            !up
        })
        .unwrap();
        assert_eq!(out.status, TerminalStatus::Stopped);
        assert_eq!(out.steps_run, 1);
    }

    #[test]
    fn fixed_point_start() {
        let ds = sample_separable::<f64>(5, 2, 0.3, 4).unwrap();
        let sol = solve_minimizer(&ds, 0.01, 1e-12).unwrap();
        let cfg = GDConfig::new(1.0, 0.01, 2, 100)
            .with_w0(ParamVector::new(sol.w_lambda.clone()).unwrap())
            .with_convergence(ConvergenceTest::Gap(1e-14));
        let tr = run_gd(&ds, &cfg, Some(&sol)).unwrap();
        assert_eq!(tr.terminal_status, TerminalStatus::Converged);
        assert_eq!(tr.steps_run, 0);
        assert_eq!(classify_regime(&tr), Regime::StableRegime);
    }

    #[test]
    fn matches_independent_loop() {
        // Plain reimplementation of the update as an oracle.
        let (g, lambda, eta) = (0.05f64, 1e-4, 1.0);
        let x = [[g, 0.9], [g, -0.5]];
        let mut w = [0.0f64; 2];
        let risk_of = |w: &[f64; 2]| {
            let mut l = 0.0;
            for xi in &x {
                let m = xi[0] * w[0] + xi[1] * w[1];
                l += if m >= 0.0 { (-m).exp().ln_1p() } else { -m + m.exp().ln_1p() };
            }
            l / 2.0 + lambda / 2.0 * (w[0] * w[0] + w[1] * w[1])
        };
        for _ in 0..100_000 {
            let mut gr = [lambda * w[0], lambda * w[1]];
            for xi in &x {
                let m = xi[0] * w[0] + xi[1] * w[1];
                let s = 1.0 / (1.0 + m.exp());
                gr[0] -= 0.5 * s * xi[0];
                gr[1] -= 0.5 * s * xi[1];
            }
            w[0] -= eta * gr[0];
            w[1] -= eta * gr[1];
        }
        let ds = make_hard_dataset::<f64>(g).unwrap();
        let cfg = GDConfig::new(eta, lambda, 2, 100_000).with_convergence(ConvergenceTest::Never);
        let tr = run_gd(&ds, &cfg, None).unwrap();
        assert_eq!(tr.steps_run, 100_000);
        assert_relative_eq!(*tr.risk.last().unwrap(), risk_of(&w), max_relative = 1e-12);
    }

    #[test]
    fn divergence_detected() {
        let ds = make_hard_dataset::<f64>(0.05).unwrap();
        let lambda = 0.01;
        let cfg = GDConfig::new(2.01 / lambda, lambda, 2, 100_000);
        let tr = run_gd(&ds, &cfg, None).unwrap();
        assert_eq!(tr.terminal_status, TerminalStatus::Diverged);
        let last = tr.len() - 1;
        assert!(tr.risk[last] > 1e6 || tr.param_norm[last] > 1e8 || !tr.risk[last].is_finite());
        assert_eq!(classify_regime(&tr), Regime::Nonconvergent);
    }

    #[test]
    fn trajectory_shapes() {
        let ds = sample_separable::<f64>(6, 3, 0.3, 1).unwrap();
        let cfg = GDConfig::new(0.5, 0.1, 3, 57).with_stride(10).with_convergence(ConvergenceTest::Never);
        let tr = run_gd(&ds, &cfg, None).unwrap();
        assert_eq!(tr.len(), 58);
        assert_eq!(tr.loss.len(), tr.potential.len());
        assert_eq!(tr.param_norm.len(), tr.grad_norm.len());
        let idx: Vec<usize> = tr.snapshots.iter().map(|s| s.0).collect();
        assert_eq!(idx, vec![0, 10, 20, 30, 40, 50, 57]);
        assert_eq!(tr.risk[0], evaluate_slice(&ds, &[0.0; 3], 0.1).unwrap().risk);
        assert_eq!(tr.terminal_status, TerminalStatus::BudgetExhausted);
    }

    #[test]
    fn config_validation() {
        let ds = make_hard_dataset::<f64>(0.05).unwrap();
        assert!(run_gd(&ds, &GDConfig::new(0.0, 0.1, 2, 10), None).is_err());
        assert!(run_gd(&ds, &GDConfig::new(1.0, -0.1, 2, 10), None).is_err());
        assert!(run_gd(&ds, &GDConfig::new(1.0, 0.1, 2, 0), None).is_err());
        assert!(run_gd(&ds, &GDConfig::new(1.0, 0.1, 3, 10), None).is_err());
        let gap = GDConfig::new(1.0, 0.1, 2, 10).with_convergence(ConvergenceTest::Gap(1e-8));
        assert!(run_gd(&ds, &gap, None).is_err());
        assert!(run_nesterov(&ds, &NesterovConfig::new(0.0, 2, 10), None).is_err());
    }

    #[test]
    fn regime_classification_cases() {
        assert_eq!(regime_from(0, 10, TerminalStatus::BudgetExhausted), Regime::StableRegime);
        assert_eq!(regime_from(3, 10, TerminalStatus::Converged), Regime::EosRegime);
        assert_eq!(regime_from(3, 10, TerminalStatus::BudgetExhausted), Regime::Nonconvergent);
        assert_eq!(regime_from(10, 10, TerminalStatus::Converged), Regime::Nonconvergent);
        assert_eq!(monotone_suffix_start(&[1.0, 2.0, 3.0, 2.5, 1.0]), 2);
        assert_eq!(monotone_suffix_start(&[1.0, 1.0, 1.0]), 0);
        // A rise within the relative tolerance is not a rise.
        assert_eq!(monotone_suffix_start(&[1.0, 1.0 + 1e-13, 0.5]), 0);
    }

    #[test]
    fn inverse_smoothness_is_stable() {
        for seed in 0..5 {
            let ds = sample_separable::<f64>(8, 3, 0.2, seed).unwrap();
            let lambda = 1e-2;
            let cfg = GDConfig::new(1.0 / (1.0 + lambda), lambda, 3, 2000).with_convergence(ConvergenceTest::Never);
            assert_eq!(classify_regime(&run_gd(&ds, &cfg, None).unwrap()), Regime::StableRegime);
        }
    }

    #[test]
    fn nesterov_without_momentum_is_gd() {
        let ds = sample_separable::<f64>(6, 2, 0.3, 3).unwrap();
        let mut nc = NesterovConfig::new(0.2, 2, 300);
        nc.smoothness = Some(1.5);
        nc.strong_convexity = Some(1.5);
        nc.convergence = ConvergenceTest::Never;
        assert_eq!(nc.momentum(), 0.0);
        let a = run_nesterov(&ds, &nc, None).unwrap();
        let g = GDConfig::new(1.0 / 1.5, 0.2, 2, 300).with_convergence(ConvergenceTest::Never);
        let b = run_gd(&ds, &g, None).unwrap();
        assert_eq!(a.risk, b.risk);
    }

    #[test]
    fn nesterov_rate_on_regularizer_dominated_problem() {
        // Large λ: R is nearly the quadratic (λ/2)w², κ close to 1.
        let ds = make_1d_dataset::<f64>(&[0.01]).unwrap();
        let lambda = 50.0;
        let sol = solve_minimizer(&ds, lambda, 1e-14).unwrap();
        let mut nc = NesterovConfig::new(lambda, 1, 100);
        nc.w0 = ParamVector::new(vec![5.0]).unwrap();
        nc.convergence = ConvergenceTest::Never;
        nc.smoothness = Some(lambda + 0.01 * 0.01 / 4.0);
        let tr = run_nesterov(&ds, &nc, Some(&sol)).unwrap();
        let kappa = nc.smoothness() / lambda;
        let rate = 1.0 - 1.0 / kappa.sqrt();
        let d = tr.dist_to_ref.as_ref().unwrap();
        for t in 1..=100 {
            assert!(d[t] <= d[0] * rate.powi(t as i32).max(1e-300) + 1e-14);
        }
    }

    #[test]
    fn nesterov_beats_gd() {
        let ds = sample_separable::<f64>(16, 2, 0.5, 0).unwrap();
        let lambda = 1.0 / 16.0;
        let sol = solve_minimizer(&ds, lambda, 1e-13).unwrap();
        let mut nc = NesterovConfig::new(lambda, 2, 100_000);
        nc.convergence = ConvergenceTest::Gap(1e-8);
        let a = run_nesterov(&ds, &nc, Some(&sol)).unwrap();
        let g = GDConfig::new(1.0 / (1.0 + lambda), lambda, 2, 100_000).with_convergence(ConvergenceTest::Gap(1e-8));
        let b = run_gd(&ds, &g, Some(&sol)).unwrap();
        assert_eq!(a.terminal_status, TerminalStatus::Converged);
        assert_eq!(b.terminal_status, TerminalStatus::Converged);
        assert!(a.steps_run < b.steps_run, "{} vs {}", a.steps_run, b.steps_run);
    }

    #[test]
    fn adaptive_first_step_and_norm_bound() {
        let ds = sample_separable::<f64>(32, 3, 0.5, 5).unwrap();
        let eta = (32f64).ln();
        let mut cfg = AdaptiveConfig::new(eta, 3, 200);
        cfg.record_stride = 1;
        let tr = run_adaptive(&ds, &cfg).unwrap();
        let g0 = evaluate_slice(&ds, &[0.0; 3], 0.0).unwrap().grad_loss;
        for k in 0..3 {
            assert_relative_eq!(tr.snapshots[1].1[k], -eta * g0[k] / std::f64::consts::LN_2, max_relative = 1e-13);
        }
        let av = tr.averaged.as_ref().unwrap();
        assert_eq!(av.loss.len(), tr.len());
        for (t, n) in av.param_norm.iter().enumerate() {
            assert!(*n <= eta * t as f64 + 1e-12);
        }
        assert!(tr.loss.iter().all(|&l| l > 0.0));
    }

    #[test]
    fn adaptive_survives_underflow() {
        let ds = make_1d_dataset::<f64>(&[1.0]).unwrap();
        let mut cfg = AdaptiveConfig::new(10.0, 1, 200);
        cfg.average_iterates = false;
        let tr = run_adaptive(&ds, &cfg).unwrap();
        assert_eq!(tr.terminal_status, TerminalStatus::BudgetExhausted);
        // Once L underflows the normalized step stays η in 1-D.
        let w = tr.final_iterate()[0];
        assert!(w > 1500.0 && w.is_finite());
    }

    #[test]
    fn summary_matches_full_run() {
        let ds = make_hard_dataset::<f64>(0.05).unwrap();
        let lambda = 1e-3;
        let sol = solve_minimizer(&ds, lambda, 1e-12).unwrap();
        let cfg = GDConfig::new(15.0, lambda, 2, 200_000).with_convergence(ConvergenceTest::Gap(1e-9));
        let full = run_gd(&ds, &cfg, Some(&sol)).unwrap();
        let s = summarize_gd(&ds, &cfg, Some(&sol), Some(1e-9)).unwrap();
        assert_eq!(s.steps_run, full.steps_run);
        assert_eq!(s.final_w, full.final_iterate().to_vec());
        assert_eq!(s.tau_hat, monotone_suffix_start(&full.risk));
        assert_eq!(s.regime, classify_regime(&full));
        assert_eq!(s.steps_to_eps, Some(full.steps_run));
    }

    #[test]
    fn deterministic_and_generic() {
        let ds = sample_separable::<f32>(6, 3, 0.3, 1).unwrap();
        let cfg = GDConfig::new(2.0f32, 0.01, 3, 500).with_convergence(ConvergenceTest::Never);
        let a = run_gd(&ds, &cfg, None).unwrap();
        let b = run_gd(&ds, &cfg, None).unwrap();
        assert_eq!(a, b);
        assert!(a.risk.iter().all(|r| r.is_finite()));
    }
}
