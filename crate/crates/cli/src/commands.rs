use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use eosgd_core::analysis::{analyze_1d, check_bounds, BoundKind, DatasetMeta, InitPolicy};
use eosgd_core::datasets::DistributionSpec;
use eosgd_core::io::{self, to_json17, write_text, TOOL_VERSION};
use eosgd_core::optimizers::{run_adaptive, run_gd, run_nesterov, ConvergenceTest};
use eosgd_core::reference::{solve_margin, solve_minimizer, MarginStructure, ReferenceSolution, DEFAULT_TOL};
use eosgd_core::{AdaptiveConfig, Constants, GDConfig, NesterovConfig, ParamVector};
use eosgd_experiments::calibrate::calibrate;
use eosgd_experiments::critical::{critical_scan, CriticalConfig};
use eosgd_experiments::emit::{emit, render_csv, render_json, OutputFormat, OutputMeta, Tabular};
use eosgd_experiments::lower_bound::{lower_bound_experiment, LowerBoundConfig};
use eosgd_experiments::population::{population_experiment, Arm, PopulationConfig};
use eosgd_experiments::sweep::{sweep_step_complexity, EtaRule, SweepConfig};
use eosgd_experiments::verify::{run_verify, VerifyConfig};
use eosgd_experiments::DatasetSource;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{
    AnalyzeArgs, CalibrateArgs, Cli, Command, CriticalArgs, DatasetCommand, DatasetGenArgs, LowerBoundArgs, Output,
    PopulationArgs, ReferenceArgs, RunArgs, SweepArgs, VerifyArgs,
};

pub const REFERENCE_SCHEMA: &str = "eosgd.reference/1";

/// Runs the command; `Ok(false)` means it completed but found violations.
pub fn dispatch(cli: Cli) -> Result<bool> {
    let constants = match &cli.constants {
        Some(p) => Constants::from_path(p).with_context(|| format!("reading constants {}", p.display()))?,
        None => Constants::load().context("loading constants")?,
    };
    match cli.command {
        Command::Sweep(a) => sweep(a, &constants),
        Command::Lowerbound(a) => lowerbound(a, &constants),
        Command::Critical(a) => critical(a, &constants),
        Command::Population(a) => population(a, &constants),
        Command::Verify(a) => verify(a, &constants),
        Command::Dataset(DatasetCommand::Gen(a)) => dataset_gen(a),
        Command::Run(a) => run(a),
        Command::Reference(a) => reference(a),
        Command::Analyze(a) => analyze(a, &constants),
        Command::Calibrate(a) => calibrate_cmd(a),
    }
}

fn load_config<C: DeserializeOwned + Default>(path: Option<&Path>) -> Result<C> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
        None => Ok(C::default()),
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn format_of(out: &Output) -> Result<OutputFormat> {
    if let Some(f) = &out.format {
        return f.parse().map_err(|e| anyhow!("{e}"));
    }
    let json = out.out.as_ref().and_then(|p| p.extension()).is_some_and(|e| e == "json");
    Ok(if json { OutputFormat::Json } else { OutputFormat::Csv })
}

fn write_result<R: Tabular + Serialize>(r: &R, seed: Option<u64>, c: &Constants, out: &Output) -> Result<()> {
    let meta = OutputMeta::new(R::SCHEMA, seed, c);
    let format = format_of(out)?;
    match &out.out {
        Some(path) => {
            for p in emit(r, &meta, format, path)? {
                eprintln!("wrote {}", p.display());
            }
        }
        None => match format {
            OutputFormat::Csv => print!("{}", render_csv(r, &meta)),
            OutputFormat::Json => print!("{}", render_json(r, &meta)?),
        },
    }
    Ok(())
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            write_text(p, text)?;
            eprintln!("wrote {}", p.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn parse_rule(name: &str, eta: Option<f64>) -> Result<EtaRule> {
    Ok(match name {
        "small_reg" => EtaRule::SmallReg,
        "general_reg" => EtaRule::GeneralReg,
        "inverse_smoothness" => EtaRule::InverseSmoothness,
        "fixed" => EtaRule::Fixed { value: eta.ok_or_else(|| anyhow!("--eta-rule fixed needs --eta"))? },
        other => bail!("unknown stepsize rule {other:?}"),
    })
}

fn sweep(a: SweepArgs, c: &Constants) -> Result<bool> {
    let mut cfg: SweepConfig = load_config(a.config.as_deref())?;
    set(&mut cfg.dataset, a.dataset.map(|path| DatasetSource::File { path }));
    set(&mut cfg.lambda_grid, a.lambda_grid);
    match (a.eta_rule.as_deref(), a.eta) {
        (Some(r), Some(_)) if r != "fixed" => bail!("--eta only applies to --eta-rule fixed"),
        (Some(r), eta) => cfg.eta_rule = parse_rule(r, eta)?,
        (None, Some(value)) => cfg.eta_rule = EtaRule::Fixed { value },
        (None, None) => {}
    }
    set(&mut cfg.eps, a.eps);
    set(&mut cfg.horizon, a.horizon);
    set(&mut cfg.seeds, a.seeds);
    cfg.drop_largest_two |= a.drop_largest_two;
    let r = sweep_step_complexity(&cfg, c)?;
    eprintln!("fitted exponent {:?} over {} rows", r.fitted_exponent, r.fit_points);
    write_result(&r, cfg.dataset.seed(), c, &a.output)?;
    Ok(true)
}

fn lowerbound(a: LowerBoundArgs, c: &Constants) -> Result<bool> {
    let mut cfg: LowerBoundConfig = load_config(a.config.as_deref())?;
    set(&mut cfg.gamma, a.gamma);
    set(&mut cfg.lambda_grid, a.lambda_grid);
    set(&mut cfg.eps, a.eps);
    set(&mut cfg.eos_lambda, a.eos_lambda);
    set(&mut cfg.horizon, a.horizon);
    let r = lower_bound_experiment(&cfg, c)?;
    write_result(&r, None, c, &a.output)?;
    Ok(true)
}

fn critical(a: CriticalArgs, c: &Constants) -> Result<bool> {
    let mut cfg: CriticalConfig = load_config(a.config.as_deref())?;
    set(&mut cfg.dataset, a.dataset.map(|path| DatasetSource::File { path }));
    set(&mut cfg.lambda_grid, a.lambda_grid);
    set(&mut cfg.horizon, a.horizon);
    set(&mut cfg.tol, a.tol);
    let (mut radius, mut seed, mut starts) = match cfg.w0_policy {
        InitPolicy::RandomBall { radius_factor, seed, seeds } => (radius_factor, seed, seeds),
        InitPolicy::Zero => (0.1, 0, 5),
    };
    set(&mut radius, a.radius_factor);
    set(&mut seed, a.seed);
    set(&mut starts, a.starts);
    let ball = InitPolicy::RandomBall { radius_factor: radius, seed, seeds: starts };
    cfg.w0_policy = match a.w0.as_deref() {
        Some("zero") => InitPolicy::Zero,
        Some("ball") => ball,
        Some(other) => bail!("unknown --w0 policy {other:?}; use zero or ball"),
        None if matches!(cfg.w0_policy, InitPolicy::Zero) => InitPolicy::Zero,
        None => ball,
    };
    let r = critical_scan(&cfg, c)?;
    eprintln!("band ratio {:.4}, divergent below 2.01/λ: {}", r.band_ratio, r.divergent_below_ceiling);
    let seed = match cfg.w0_policy {
        InitPolicy::RandomBall { seed, .. } => Some(seed),
        InitPolicy::Zero => None,
    };
    write_result(&r, seed, c, &a.output)?;
    Ok(true)
}

fn population(a: PopulationArgs, c: &Constants) -> Result<bool> {
    let mut cfg: PopulationConfig = load_config(a.config.as_deref())?;
    let s = &cfg.spec;
    if a.dim.is_some() || a.gamma.is_some() || a.noise_scale.is_some() || a.label_bias.is_some() {
        let margin = a.gamma.unwrap_or(s.margin);
        let noise = a.noise_scale.unwrap_or(s.noise_scale);
        let bias = a.label_bias.unwrap_or(s.label_bias);
        cfg.spec = match a.dim {
            Some(d) if d != s.dim => DistributionSpec::axis_aligned(d, margin, noise, bias)?,
            _ => DistributionSpec::new(s.dim, margin, s.direction.clone(), noise, bias)?,
        };
    }
    set(&mut cfg.n_grid, a.n_grid);
    set(&mut cfg.delta, a.delta);
    set(&mut cfg.mc_samples, a.mc_samples);
    set(&mut cfg.mc_cap, a.mc_cap);
    set(&mut cfg.seed, a.seed);
    set(&mut cfg.max_steps, a.max_steps);
    if let Some(names) = a.arms {
        cfg.arms = names
            .iter()
            .map(|n| Arm::ALL.into_iter().find(|a| a.name() == n).ok_or_else(|| anyhow!("unknown arm {n:?}")))
            .collect::<Result<_>>()?;
    }
    let r = population_experiment(&cfg, c)?;
    write_result(&r, Some(cfg.seed), c, &a.output)?;
    Ok(true)
}

fn verify(a: VerifyArgs, c: &Constants) -> Result<bool> {
    let mut cfg: VerifyConfig = load_config(a.config.as_deref())?;
    set(&mut cfg.seed, a.seed);
    set(&mut cfg.runs, a.runs);
    set(&mut cfg.run_steps, a.run_steps);
    let r = run_verify(&cfg, c)?;
    for s in &r.sections {
        eprintln!("{:<28} {:>10} checks {:>6} violations", s.name, s.checks, s.violations);
        for e in &s.examples {
            eprintln!("    {e}");
        }
    }
    write_result(&r, Some(cfg.seed), c, &a.output)?;
    Ok(r.total_violations == 0)
}

fn default_source(kind: &str) -> Result<DatasetSource> {
    Ok(match kind {
        "hard" => DatasetSource::Hard { gamma: 0.05 },
        "random" | "separable" => DatasetSource::Separable { n: 8, d: 3, gamma: 0.3, seed: 0 },
        "oned" | "one_dim" => DatasetSource::OneDim { z: vec![0.5] },
        "population" => DatasetSource::Population {
            spec: DistributionSpec::axis_aligned(10, 0.5, 0.9, 0.5)?,
            n: 256,
            seed: 0,
        },
        other => bail!("unknown dataset kind {other:?}; use hard, random, oned or population"),
    })
}

fn same_kind(src: &DatasetSource, kind: &str) -> bool {
    matches!(
        (src, kind),
        (DatasetSource::Hard { .. }, "hard")
            | (DatasetSource::Separable { .. }, "random" | "separable")
            | (DatasetSource::OneDim { .. }, "oned" | "one_dim")
            | (DatasetSource::Population { .. }, "population")
    )
}

fn dataset_gen(a: DatasetGenArgs) -> Result<bool> {
    let mut src = match (a.config.as_deref(), a.kind.as_deref()) {
        (Some(p), kind) => {
            let s: DatasetSource = load_config_required(p)?;
            match kind {
                Some(k) if !same_kind(&s, k) => default_source(k)?,
                _ => s,
            }
        }
        (None, Some(k)) => default_source(k)?,
        (None, None) => bail!("dataset gen needs --kind or --config"),
    };
    match &mut src {
        DatasetSource::Hard { gamma } => set(gamma, a.gamma),
        DatasetSource::Separable { n, d, gamma, seed } => {
            set(n, a.n);
            set(d, a.d);
            set(gamma, a.gamma);
            set(seed, a.seed);
        }
        DatasetSource::OneDim { z } => set(z, a.z),
        DatasetSource::Population { spec, n, seed } => {
            set(n, a.n);
            set(seed, a.seed);
            let dim = a.d.unwrap_or(spec.dim);
            let margin = a.gamma.unwrap_or(spec.margin);
            let noise = a.noise_scale.unwrap_or(spec.noise_scale);
            let bias = a.label_bias.unwrap_or(spec.label_bias);
            *spec = if dim != spec.dim {
                DistributionSpec::axis_aligned(dim, margin, noise, bias)?
            } else {
                DistributionSpec::new(dim, margin, spec.direction.clone(), noise, bias)?
            };
        }
        DatasetSource::File { .. } => bail!("dataset gen cannot generate from a file source"),
    }
    let ds = src.load()?;
    write_or_print(a.out.as_deref(), &io::dataset_to_json(&ds, src.seed())?)?;
    Ok(true)
}

fn load_config_required<C: DeserializeOwned>(p: &Path) -> Result<C> {
    let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
struct RunConfig {
    dataset: DatasetSource,
    optimizer: String,
    eta: Option<f64>,
    lambda: f64,
    steps: usize,
    /// Gradient-norm tolerance; 0 runs the whole budget.
    tol: f64,
    /// Risk-gap stopping rule, used instead of `tol` when set.
    gap: Option<f64>,
    stride: usize,
    w0: Option<Vec<f64>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::Hard { gamma: 0.05 },
            optimizer: "gd".into(),
            eta: None,
            lambda: 1e-3,
            steps: 10_000,
            tol: 1e-12,
            gap: None,
            stride: 1,
            w0: None,
        }
    }
}

fn run(a: RunArgs) -> Result<bool> {
    let mut cfg: RunConfig = load_config(a.config.as_deref())?;
    set(&mut cfg.dataset, a.dataset.map(|path| DatasetSource::File { path }));
    set(&mut cfg.optimizer, a.optimizer);
    if a.eta.is_some() {
        cfg.eta = a.eta;
    }
    set(&mut cfg.lambda, a.lambda);
    set(&mut cfg.steps, a.steps);
    set(&mut cfg.tol, a.tol);
    if a.gap.is_some() {
        cfg.gap = a.gap;
    }
    set(&mut cfg.stride, a.stride);
    if a.w0.is_some() {
        cfg.w0 = a.w0;
    }

    let ds = cfg.dataset.load()?;
    let dim = ds.dim();
    let w0 = match &cfg.w0 {
        Some(w) if w.len() != dim => bail!("w0 has {} entries but the dataset has dimension {dim}", w.len()),
        Some(w) => ParamVector::new(w.clone())?,
        None => ParamVector::zeros(dim),
    };
    let convergence = match cfg.gap {
        Some(g) => ConvergenceTest::Gap(g),
        None if cfg.tol > 0.0 => ConvergenceTest::GradNorm(cfg.tol),
        None => ConvergenceTest::Never,
    };
    let reference = if cfg.lambda > 0.0 { Some(solve_minimizer(&ds, cfg.lambda, DEFAULT_TOL)?) } else { None };
    let traj = match cfg.optimizer.as_str() {
        "gd" => {
            let eta = cfg.eta.ok_or_else(|| anyhow!("gd needs --eta"))?;
            let gd = GDConfig::new(eta, cfg.lambda, dim, cfg.steps)
                .with_w0(w0)
                .with_stride(cfg.stride)
                .with_convergence(convergence);
            run_gd(&ds, &gd, reference.as_ref())?
        }
        "nesterov" => {
            let mut nc = NesterovConfig::new(cfg.lambda, dim, cfg.steps);
            nc.w0 = w0;
            nc.record_stride = cfg.stride;
            nc.convergence = convergence;
            run_nesterov(&ds, &nc, reference.as_ref())?
        }
        "adaptive" => {
            if cfg.lambda != 0.0 {
                bail!("adaptive runs on the unregularized loss; pass --lambda 0");
            }
            let eta = cfg.eta.ok_or_else(|| anyhow!("adaptive needs --eta"))?;
            let mut ac = AdaptiveConfig::new(eta, dim, cfg.steps);
            ac.w0 = w0;
            ac.record_stride = cfg.stride;
            if cfg.gap.is_some() {
                bail!("adaptive runs have no reference; use --tol");
            }
            ac.convergence = convergence;
            run_adaptive(&ds, &ac)?
        }
        other => bail!("unknown optimizer {other:?}; use gd, nesterov or adaptive"),
    };
    let meta = DatasetMeta::of(&ds).ok();
    io::write_trajectory(&a.out, &traj, &ds.content_hash(), meta)?;
    eprintln!(
        "{:?} after {} steps, final risk {:.6e}; wrote {} and {}",
        traj.terminal_status,
        traj.steps_run,
        traj.risk[traj.steps_run],
        a.out.display(),
        io::sidecar_path(&a.out).display()
    );
    Ok(true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
struct ReferenceConfig {
    dataset: DatasetSource,
    lambda: f64,
    tol: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self { dataset: DatasetSource::Hard { gamma: 0.05 }, lambda: 1e-3, tol: DEFAULT_TOL }
    }
}

#[derive(Debug, Serialize)]
struct ReferenceDoc {
    schema: &'static str,
    tool_version: &'static str,
    dataset_hash: String,
    reference: ReferenceSolution,
    #[serde(skip_serializing_if = "Option::is_none")]
    margin: Option<MarginStructure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    margin_error: Option<String>,
}

fn reference(a: ReferenceArgs) -> Result<bool> {
    let mut cfg: ReferenceConfig = load_config(a.config.as_deref())?;
    set(&mut cfg.dataset, a.dataset.map(|path| DatasetSource::File { path }));
    set(&mut cfg.lambda, a.lambda);
    set(&mut cfg.tol, a.tol);
    let ds = cfg.dataset.load()?;
    let sol = solve_minimizer(&ds, cfg.lambda, cfg.tol)?;
    let (margin, margin_error) = match solve_margin(&ds) {
        Ok(m) => (Some(m), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let doc = ReferenceDoc {
        schema: REFERENCE_SCHEMA,
        tool_version: TOOL_VERSION,
        dataset_hash: ds.content_hash(),
        reference: sol,
        margin,
        margin_error,
    };
    write_or_print(a.out.as_deref(), &to_json17(&doc)?)?;
    Ok(true)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
struct AnalyzeConfig {
    traj: Option<PathBuf>,
    reference: Option<PathBuf>,
    checks: Option<Vec<String>>,
    gamma: Option<f64>,
    n: Option<usize>,
    eps_1d: Option<f64>,
    out: Option<PathBuf>,
}

fn analyze(a: AnalyzeArgs, c: &Constants) -> Result<bool> {
    let mut cfg: AnalyzeConfig = load_config(a.config.as_deref())?;
    for (slot, v) in [(&mut cfg.traj, a.traj), (&mut cfg.reference, a.reference), (&mut cfg.out, a.out)] {
        if v.is_some() {
            *slot = v;
        }
    }
    if a.checks.is_some() {
        cfg.checks = a.checks;
    }
    if a.gamma.is_some() {
        cfg.gamma = a.gamma;
    }
    if a.n.is_some() {
        cfg.n = a.n;
    }
    if a.eps_1d.is_some() {
        cfg.eps_1d = a.eps_1d;
    }

    let traj_path = cfg.traj.ok_or_else(|| anyhow!("analyze needs --traj"))?;
    let (traj, meta) = io::read_trajectory(&traj_path)?;
    let ds_meta = match (cfg.gamma, cfg.n, meta.dataset) {
        (Some(gamma), Some(n), _) => DatasetMeta { gamma, n },
        (g, n, Some(m)) => DatasetMeta { gamma: g.unwrap_or(m.gamma), n: n.unwrap_or(m.n) },
        _ => bail!("the trajectory sidecar has no dataset margin; pass --gamma and --n"),
    };
    let reference = cfg.reference.as_deref().map(io::read_reference).transpose()?;
    let kinds = match &cfg.checks {
        Some(names) => names.iter().map(|n| BoundKind::parse(n)).collect::<eosgd_core::Result<Vec<_>>>()?,
        None => BoundKind::ALL.to_vec(),
    };
    let records = check_bounds(&traj, ds_meta, reference.as_ref(), c, &kinds)?;
    let violations = records.iter().filter(|r| r.is_violation()).count();
    eprintln!("{} checks, {} violations", records.len(), violations);
    for r in records.iter().filter(|r| r.is_violation()).take(5) {
        eprintln!("    {} at t={}: {} > {}", r.which_bound.name(), r.step, r.lhs, r.rhs);
    }
    write_or_print(cfg.out.as_deref(), &io::bounds_csv(&records))?;

    let mut ok = violations == 0;
    if let Some(eps) = cfg.eps_1d {
        let r = reference.as_ref().ok_or_else(|| anyhow!("the one-dimensional analysis needs --ref"))?;
        let rep = analyze_1d(&traj, r, eps, c)?;
        eprintln!("{}", serde_json::to_string(&rep)?);
        ok &= rep.converged && rep.crossings <= 1 && rep.within_budget;
    }
    Ok(ok)
}

fn calibrate_cmd(a: CalibrateArgs) -> Result<bool> {
    let report = calibrate()?;
    for (name, value) in &report.raw {
        eprintln!("{name:<22} measured {value:.6e}");
    }
    write_or_print(a.out.as_deref(), &(report.constants.to_json() + "\n"))?;
    Ok(true)
}
