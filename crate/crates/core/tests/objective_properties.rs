use eosgd_core::datasets::{make_hard_dataset, sample_separable, seeded_rng, validate, LabeledDataset};
use eosgd_core::io::{dataset_from_json, dataset_to_json};
use eosgd_core::objective::{evaluate_slice, hessian_slice, risk};
use eosgd_core::reference::{eig_extremes, solve_minimizer, DEFAULT_TOL};
use proptest::prelude::*;
use rand::Rng;

const SLACK: f64 = 1e-10;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn random_w(seed: u64, d: usize, scale: f64) -> Vec<f64> {
    let mut rng = seeded_rng(seed, 41);
    (0..d).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect()
}

fn dataset(n: usize, d: usize, gamma: f64, seed: u64) -> LabeledDataset<f64> {
    sample_separable::<f64>(n, d, gamma, seed).unwrap()
}

#[test]
fn separable_sample_matches_golden_file() {
    let golden = include_str!("golden/separable_8_3_0.3_seed7.json");
    let ds = dataset(8, 3, 0.3, 7);
    assert_eq!(dataset_to_json(&ds, Some(7)).unwrap(), golden);
    assert_eq!(dataset_from_json(golden).unwrap(), ds);
    let report = validate(&ds);
    assert!(report.is_separable);
    assert!(report.certified_margin.unwrap() >= 0.3 * (1.0 - 1e-12));
}

#[test]
fn hard_dataset_rows() {
    let ds = make_hard_dataset::<f64>(0.05).unwrap();
    assert_eq!(ds.row(0), &[0.05, 0.9]);
    assert_eq!(ds.row(1), &[0.05, -0.5]);
    assert_eq!(ds.labels(), &[1, 1]);
}

#[test]
fn minimizer_envelopes_hold() {
    // Twenty (dataset, λ) pairs with λ < γ².
    let mut pairs = 0;
    for seed in 0..5u64 {
        let gamma = 0.2 + 0.05 * seed as f64;
        let ds = dataset(6 + 2 * seed as usize, 3, gamma, seed);
        for lambda in [1e-2, 1e-3, 1e-4, 1e-5] {
            assert!(lambda < gamma * gamma);
            let r = solve_minimizer(&ds, lambda, DEFAULT_TOL).unwrap();
            let lg = (gamma * gamma / lambda).ln();
            let w_bound = (2f64.sqrt() + lg) / gamma;
            let risk_bound = lambda * (2.0 + lg * lg) / (2.0 * gamma * gamma);
            assert!(norm(&r.w_lambda) <= w_bound + SLACK, "seed {seed} λ {lambda}");
            assert!(r.min_risk <= risk_bound + SLACK, "seed {seed} λ {lambda}");
            pairs += 1;
        }
    }
    assert_eq!(pairs, 20);
}

#[test]
fn minimizer_norm_is_at_most_inverse_lambda_for_large_lambda() {
    let ds = dataset(10, 4, 0.3, 3);
    for lambda in [1.0, 2.0, 10.0] {
        let r = solve_minimizer(&ds, lambda, DEFAULT_TOL).unwrap();
        assert!(norm(&r.w_lambda) <= 1.0 / lambda + SLACK);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn gradient_and_potential_facts(
        seed in 0u64..100_000,
        n in 1usize..16,
        d in 1usize..6,
        gamma in 0.05f64..0.9,
        scale in 0.0f64..40.0,
    ) {
        let ds = dataset(n, d, gamma, seed);
        let wstar = ds.certificate().unwrap().direction.clone();
        let w = random_w(seed, d, scale);
        let e = evaluate_slice(&ds, &w, 0.0).unwrap();
        let g = e.potential;
        let along = -dot(&e.grad_loss, &wstar);
        prop_assert!(gamma * g <= along + SLACK && along <= g + SLACK);
        let gn = norm(&e.grad_loss);
        prop_assert!(gamma * g <= gn + SLACK && gn <= g + SLACK);
        let h = hessian_slice(&ds, &w, 0.0).unwrap();
        let (_, top) = eig_extremes(h);
        prop_assert!(top <= g + SLACK && g <= e.loss + SLACK);
        let nf = n as f64;
        if e.loss <= 2f64.ln() / nf || g <= 1.0 / (2.0 * nf) {
            prop_assert!(e.loss <= 2.0 * g + SLACK);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gradient_matches_central_differences(
        seed in 0u64..100_000,
        n in 1usize..12,
        d in 1usize..6,
        scale in 0.0f64..10.0,
        lambda in 0.0f64..1.0,
    ) {
        let ds = dataset(n, d, 0.2, seed);
        let w = random_w(seed, d, scale);
        let e = evaluate_slice(&ds, &w, lambda).unwrap();
        let h = 1e-6;
        let fd: Vec<f64> = (0..d)
            .map(|k| {
                let mut plus = w.clone();
                let mut minus = w.clone();
                plus[k] += h;
                minus[k] -= h;
                (risk(&ds, &plus, lambda) - risk(&ds, &minus, lambda)) / (2.0 * h)
            })
            .collect();
        let diff: Vec<f64> = fd.iter().zip(&e.grad_risk).map(|(a, b)| a - b).collect();
        // Relative to the gradient, with a floor for the rounding of R itself.
        let floor = 1e-16 * e.risk.abs().max(1.0) / h;
        prop_assert!(norm(&diff) <= 1e-6 * norm(&e.grad_risk) + floor, "fd {:?} exact {:?}", fd, e.grad_risk);
    }

    #[test]
    fn no_overflow_in_the_safe_range(seed in 0u64..100_000, gamma in 0.05f64..0.9, frac in 0.0f64..1.0) {
        let ds = dataset(8, 3, gamma, seed);
        let mut w = random_w(seed, 3, 1.0);
        let r = norm(&w).max(1e-300);
        w.iter_mut().for_each(|x| *x *= frac * 700.0 / gamma / r);
        for sign in [1.0, -1.0] {
            let v: Vec<f64> = w.iter().map(|x| sign * x).collect();
            let e = evaluate_slice(&ds, &v, 1e-3).unwrap();
            prop_assert!(e.risk.is_finite() && e.loss.is_finite() && e.potential.is_finite());
            prop_assert!(e.grad_risk.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn minimizer_is_stationary_and_strongly_convex(seed in 0u64..10_000, lambda_exp in -5.0f64..0.0) {
        let lambda = 10f64.powf(lambda_exp);
        let ds = dataset(6, 3, 0.3, seed);
        let r = solve_minimizer(&ds, lambda, DEFAULT_TOL).unwrap();
        prop_assert!(r.grad_norm_at_sol <= 1e-9);
        prop_assert!(r.hess_eig_min >= lambda * (1.0 - 1e-9));
        prop_assert!(r.hess_eig_max <= 1.0 + lambda + SLACK);
        // λ‖w_λ‖ = ‖∇L(w_λ)‖ ≤ 1 at the optimum.
        prop_assert!(lambda * norm(&r.w_lambda) <= 1.0 + r.grad_norm_at_sol);
        let zero = risk(&ds, &vec![0.0; 3], lambda);
        prop_assert!(r.min_risk <= zero);
    }
}
