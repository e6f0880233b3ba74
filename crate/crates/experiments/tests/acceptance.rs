//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any failed.

use std::process::ExitCode;
use std::time::Instant;

use eosgd_core::analysis::{analyze_1d, eta_critical, InitPolicy};
use eosgd_core::datasets::{make_1d_dataset, make_hard_dataset, DistributionSpec};
use eosgd_core::optimizers::{run_gd, ConvergenceTest};
use eosgd_core::reference::{hessian_bracket_check, solve_margin, solve_minimizer, DEFAULT_TOL};
use eosgd_core::{Constants, Dataset, GDConfig, ParamVector};
use eosgd_experiments::critical::{critical_scan, CriticalConfig};
use eosgd_experiments::lower_bound::{lower_bound_experiment, LowerBoundConfig};
use eosgd_experiments::population::{population_experiment, Arm, PopulationConfig};
use eosgd_experiments::sweep::{sweep_step_complexity, EtaRule, SweepConfig, SweepResult};
use eosgd_experiments::verify::{run_verify, VerifyConfig};
use eosgd_experiments::DatasetSource;

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, id: &str, ok: bool, detail: String, started: Instant) {
        if !ok {
            self.failed += 1;
        }
        println!("{id} {} {detail} ({:.1}s)", if ok { "PASS" } else { "FAIL" }, started.elapsed().as_secs_f64());
    }
}

fn within(x: Option<f64>, lo: f64, hi: f64) -> bool {
    x.is_some_and(|v| v >= lo && v <= hi)
}

fn sweep(dataset: DatasetSource, grid: &[f64], rule: EtaRule, c: &Constants) -> SweepResult {
    let cfg = SweepConfig { dataset, lambda_grid: grid.to_vec(), eta_rule: rule, eps: 1e-8, ..Default::default() };
    sweep_step_complexity(&cfg, c).expect("sweep runs")
}

/// Largest `τ̂ / shape` over the certified rows of `res` whose `λ` is in `grid`.
fn tau_ratio(res: &SweepResult, grid: &[f64], small: bool) -> (f64, bool) {
    let mut worst = 0.0f64;
    let mut all_exist = true;
    for r in res.rows.iter().filter(|r| r.certified && grid.contains(&r.lambda)) {
        let shape = if small { r.tau_shape_small_reg } else { r.tau_shape_general_reg };
        match (r.converged, r.tau_empirical, shape) {
            (true, Some(t), Some(s)) => worst = worst.max(t as f64 / s),
            _ => all_exist = false,
        }
    }
    (worst, all_exist)
}

fn main() -> ExitCode {
    let c = Constants::load().expect("constants load");
    let mut rep = Report { failed: 0 };
    println!("constants {} (c1={} c2={})", c.hash(), c.c1, c.c2);

    // 1. Small-regularization acceleration.
    let t = Instant::now();
    let two = DatasetSource::Separable { n: 2, d: 2, gamma: 0.5, seed: 0 };
    let grid1 = [1e-3, 1e-4, 1e-5, 1e-6];
    let slow = sweep(two.clone(), &grid1, EtaRule::InverseSmoothness, &c);
    let fast = sweep(two, &grid1, EtaRule::SmallReg, &c);
    rep.line(
        "AC1a",
        within(slow.fitted_exponent, 0.85, 1.15),
        format!("inverse_smoothness slope {:?} in [0.85, 1.15]", slow.fitted_exponent),
        t,
    );
    rep.line(
        "AC1b",
        within(fast.fitted_exponent, 0.35, 0.65),
        format!("small_reg slope {:?} in [0.35, 0.65]", fast.fitted_exponent),
        t,
    );

    // 2. General regularization.
    let t = Instant::now();
    let grid2 = [1e-2, 1e-3, 1e-4, 1e-5];
    let general = sweep(DatasetSource::Separable { n: 64, d: 5, gamma: 0.5, seed: 0 }, &grid2, EtaRule::GeneralReg, &c);
    rep.line(
        "AC2",
        within(general.fitted_exponent, 0.5, 0.85),
        format!("general_reg slope {:?} in [0.5, 0.85]", general.fitted_exponent),
        t,
    );

    // 3. Lower bound on the hard dataset.
    let t = Instant::now();
    let lb = lower_bound_experiment(&LowerBoundConfig::default(), &c).expect("lower bound runs");
    for inc in &lb.increase {
        rep.line(
            &format!("AC3.increase[eta={}]", inc.eta),
            inc.increased,
            format!("R(w1) = {:.17e} > R(w0) = {:.17e}", inc.risk1, inc.risk0),
            t,
        );
    }
    rep.line(
        "AC3.exponent",
        lb.exponent_inv_lambda.is_some_and(|e| e >= 0.8),
        format!(
            "monotone steps {:?}, exponent in ln(1/λ) {:?} >= 0.8",
            lb.monotone.iter().map(|m| m.steps_to_eps).collect::<Vec<_>>(),
            lb.exponent_inv_lambda
        ),
        t,
    );
    rep.line(
        "AC3.eos_speedup",
        lb.eos.speedup.is_some_and(|s| s >= 10.0),
        format!(
            "λ={} eos η={:?} steps {:?} vs monotone {:?}: speedup {:?} >= 10",
            lb.eos.lambda, lb.eos.eta, lb.eos.steps_eos, lb.eos.steps_monotone, lb.eos.speedup
        ),
        t,
    );

    // 4. Phase transition on the certified runs of 1 and 2; the calibration
    // used the other half of each grid.
    let t = Instant::now();
    let (small_all, small_exist) = tau_ratio(&fast, &grid1, true);
    let (general_all, general_exist) = tau_ratio(&general, &grid2, false);
    let (small_held, _) = tau_ratio(&fast, &[1e-4, 1e-6], true);
    let (general_held, _) = tau_ratio(&general, &[1e-3, 1e-5], false);
    let ok = small_exist
        && general_exist
        && c.c2 <= 100.0
        && small_all <= c.c2
        && general_all <= c.c2
        && small_held <= c.c2
        && general_held <= c.c2;
    rep.line(
        "AC4",
        ok,
        format!(
            "C2={} tau/shape small_reg max {small_all:.3e} (held-out {small_held:.3e}), general_reg max {general_all:.3e} (held-out {general_held:.3e})",
            c.c2
        ),
        t,
    );

    // 5 and 6. Invariant suite.
    let t = Instant::now();
    let v = run_verify(&VerifyConfig::default(), &c).expect("verify runs");
    let eos = v.section("eos_bounds").expect("section");
    rep.line(
        "AC5",
        eos.checks > 0 && eos.violations == 0 && VerifyConfig::default().runs >= 50,
        format!("{} eos-family checks over {} runs, {} violations", eos.checks, VerifyConfig::default().runs, eos.violations),
        t,
    );
    let structural = [
        "derivative_chain",
        "gradient_potential_facts",
        "finite_difference_gradient",
        "minimizer_bounds",
        "contraction",
        "stable_decay",
        "parameter_angle",
        "gate_persistence",
    ];
    for name in structural {
        let s = v.section(name).expect("section");
        rep.line(
            &format!("AC6.{name}"),
            s.checks > 0 && s.violations == 0,
            format!("{} checks, {} violations {:?}", s.checks, s.violations, s.examples.first()),
            t,
        );
    }

    // 7. Critical stepsize.
    let t = Instant::now();
    let ccfg = CriticalConfig::default();
    let hard = ccfg.dataset.load().expect("hard dataset");
    let ms = solve_margin(&hard).expect("margin");
    assert!(matches!(ccfg.w0_policy, InitPolicy::RandomBall { radius_factor, seeds: 5, .. } if radius_factor == 0.1));
    let scan = critical_scan(&ccfg, &c).expect("critical scan");
    rep.line(
        "AC7",
        ms.support_spans_data && scan.band_ratio <= 10.0 && scan.divergent_below_ceiling,
        format!(
            "support spans data {}, normalized {:?}, band ratio {:.3} <= 10, divergent min <= 2.01/λ {}",
            ms.support_spans_data, scan.normalized, scan.band_ratio, scan.divergent_below_ceiling
        ),
        t,
    );

    // 8. Hessian bracket.
    let t = Instant::now();
    let hard05: Dataset = make_hard_dataset(0.05).expect("hard dataset");
    let rows = hessian_bracket_check(&hard05, &[1e-5, 1e-6]).expect("bracket");
    let vary = |a: f64, b: f64| a.max(b) / a.min(b);
    let hi = vary(rows[0].ratio_hi, rows[1].ratio_hi);
    let lo = vary(rows[0].ratio_lo, rows[1].ratio_lo);
    let ident = rows[1].exp_identity;
    rep.line(
        "AC8",
        hi <= 3.0 && lo <= 3.0 && within(ident, 1.0 / 3.0, 3.0),
        format!("ratio_hi varies {hi:.3}x, ratio_lo {lo:.3}x (<= 3), exp identity {ident:?} in [1/3, 3]"),
        t,
    );

    // 9. One-dimensional global convergence.
    let t = Instant::now();
    let (lambda, eps) = (1e-3, 1e-10);
    let ds1: Dataset = make_1d_dataset(&[0.5]).expect("1-d dataset");
    let sol = solve_minimizer(&ds1, lambda, DEFAULT_TOL).expect("reference");
    let eta = eta_critical(lambda).expect("eta") / 10.0;
    let (mut bad, mut max_cross, mut worst_frac) = (Vec::new(), 0, 0.0f64);
    for k in 0..41 {
        let w0 = -100.0 + 5.0 * k as f64;
        let cfg = GDConfig::new(eta, lambda, 1, 10_000_000)
            .with_w0(ParamVector::new(vec![w0]).expect("w0"))
            .with_stride(1)
            .with_convergence(ConvergenceTest::Gap(eps));
        let tr = run_gd(&ds1, &cfg, Some(&sol)).expect("run");
        let r = analyze_1d(&tr, &sol, eps, &c).expect("analysis");
        max_cross = max_cross.max(r.crossings);
        if let Some(s) = r.steps_to_eps {
            worst_frac = worst_frac.max(s as f64 / r.budget);
        }
        if !(r.converged && r.crossings <= 1 && r.within_budget) {
            bad.push(w0);
        }
    }
    rep.line(
        "AC9",
        bad.is_empty(),
        format!("41 starts, failing {bad:?}, max crossings {max_cross}, max steps/budget {worst_frac:.3}"),
        t,
    );

    // 10. Population ordering.
    let t = Instant::now();
    let pcfg = PopulationConfig {
        spec: DistributionSpec::axis_aligned(10, 0.5, 0.9, 0.5).expect("spec"),
        n_grid: vec![64, 256, 1024, 4096],
        ..Default::default()
    };
    let pop = population_experiment(&pcfg, &c).expect("population runs");
    let steps = |arm| pop.get(arm, 4096).filter(|r| r.skipped.is_none()).map(|r| r.steps_used);
    let order = [Arm::Adaptive, Arm::Nesterov, Arm::GdLarge, Arm::GdSmall].map(steps);
    let ordered = order.iter().all(Option::is_some) && order.windows(2).all(|w| w[0] < w[1]);
    let mut scaled_ok = true;
    let mut worst_scaled = 0.0f64;
    for r in pop.rows.iter().filter(|r| r.arm.is_regularized() && r.skipped.is_none()) {
        let n = r.n_train as f64;
        let v = r.mc_risk * n * pop.gamma * pop.gamma;
        worst_scaled = worst_scaled.max(v / (50.0 * n.ln().powi(5)));
        scaled_ok &= v <= 50.0 * n.ln().powi(5);
    }
    rep.line(
        "AC10",
        ordered && scaled_ok,
        format!(
            "steps at n=4096 adaptive/nesterov/gd_large/gd_small {order:?}, max risk·n·γ²/(50 ln⁵ n) {worst_scaled:.3e}"
        ),
        t,
    );

    println!("{} criteria failed", rep.failed);
    if rep.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
