//! Ground truth for experiments: the regularized minimizer `w_λ` with its
//! Hessian spectrum, and the hard-margin structure (max-margin direction, dual
//! variables, support sets, the rotated frame and the reduced function `H`).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::datasets::LabeledDataset;
use crate::error::{domain, Error, Result};
use crate::objective::{evaluate_into, hessian_slice, risk};
use crate::scalar::{dot, norm};

/// Relative slack for membership in the margin-attaining set `S`.
pub const SUPPORT_MARGIN_SLACK: f64 = 1e-8;
/// Relative dual mass below which a support vector is not counted in `S_+`.
pub const SUPPORT_DUAL_SLACK: f64 = 1e-10;
/// Relative singular-value cutoff for rank decisions.
pub const RANK_TOL: f64 = 1e-10;
/// Default gradient-norm tolerance for the minimizer.
pub const DEFAULT_TOL: f64 = 1e-12;

const NEWTON_MAX_ITERS: usize = 500;
const GD_FALLBACK_MAX_ITERS: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Newton,
    GradientDescent,
}

/// High-accuracy minimizer of `R` for one `λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub w_lambda: Vec<f64>,
    pub min_risk: f64,
    pub grad_norm_at_sol: f64,
    /// Extreme eigenvalues of `∇²R(w_λ)`.
    pub hess_eig_min: f64,
    pub hess_eig_max: f64,
    pub kappa: f64,
    pub lambda: f64,
    pub method: SolveMethod,
    pub iterations: usize,
}

/// Damped Newton from `w = 0` with Armijo backtracking on `R`, falling back to
/// gradient descent at `η = 1/(1+λ)` if Newton stalls.
pub fn solve_minimizer(ds: &LabeledDataset<f64>, lambda: f64, tol: f64) -> Result<ReferenceSolution> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(domain(format!("lambda must be > 0, got {lambda}")));
    }
    if !(tol > 0.0) {
        return Err(domain(format!("tol must be > 0, got {tol}")));
    }
    let d = ds.dim();
    let mut w = vec![0.0; d];
    let (mut gl, mut g) = (vec![0.0; d], vec![0.0; d]);
    let mut r = evaluate_into(ds, &w, lambda, &mut gl, &mut g).risk;
    let mut method = SolveMethod::Newton;
    let mut iterations = 0;
    let mut done = norm(&g) <= tol;

    while !done && iterations < NEWTON_MAX_ITERS {
        iterations += 1;
        let h = hessian_slice(ds, &w, lambda)?;
        let gv = DVector::from_column_slice(&g);
        let dir = match h.cholesky() {
            Some(c) => -c.solve(&gv),
            None => -gv.clone(),
        };
        let slope = gv.dot(&dir);
        if !(slope < 0.0) {
            break;
        }
        let gnorm = norm(&g);
        let mut step = 1.0;
        let mut accepted = false;
        let mut trial = vec![0.0; d];
        let (mut tgl, mut tg) = (vec![0.0; d], vec![0.0; d]);
        for _ in 0..60 {
            for k in 0..d {
                trial[k] = w[k] + step * dir[k];
            }
            let tr = evaluate_into(ds, &trial, lambda, &mut tgl, &mut tg).risk;
            // Near the optimum the decrease drops below the resolution of R,
            // so a gradient reduction without an increase in R also counts.
            let armijo = tr <= r + 1e-4 * step * slope;
            let flat = tr <= r * (1.0 + 4.0 * f64::EPSILON) && norm(&tg) < gnorm;
            if tr.is_finite() && (armijo || flat) {
                accepted = true;
                r = tr;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        std::mem::swap(&mut w, &mut trial);
        g.copy_from_slice(&tg);
        done = norm(&g) <= tol;
    }

    if !done {
        method = SolveMethod::GradientDescent;
        let eta = 1.0 / (1.0 + lambda);
        let mut k = 0;
        while norm(&g) > tol && k < GD_FALLBACK_MAX_ITERS {
            for (wi, gi) in w.iter_mut().zip(&g) {
                *wi -= eta * gi;
            }
            r = evaluate_into(ds, &w, lambda, &mut gl, &mut g).risk;
            k += 1;
        }
        iterations += k;
        if norm(&g) > tol {
            return Err(Error::Solver(format!(
                "minimizer did not reach gradient norm {tol} (got {})",
                norm(&g)
            )));
        }
    }

    let h = hessian_slice(ds, &w, lambda)?;
    let (eig_min, eig_max) = eig_extremes(h);
    Ok(ReferenceSolution {
        min_risk: r,
        grad_norm_at_sol: norm(&g),
        hess_eig_min: eig_min,
        hess_eig_max: eig_max,
        kappa: eig_max / eig_min,
        lambda,
        method,
        iterations,
        w_lambda: w,
    })
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn eig_extremes(h: DMatrix<f64>) -> (f64, f64) {
    let e = SymmetricEigen::new(h).eigenvalues;
    let lo = e.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Hard-margin geometry of a separable dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginStructure {
    pub gamma: f64,
    pub w_star: Vec<f64>,
    /// Signed dual variables `β̂` with `ŵ = Σ β̂_i x_i` and `y_i β̂_i ≥ 0`.
    pub dual_beta: Vec<f64>,
    pub support_s: Vec<usize>,
    pub support_s_plus: Vec<usize>,
    /// `rank{x_i : i ∈ S_+} = rank{x_1, …, x_n}`.
    pub support_spans_data: bool,
    pub rank_support: usize,
    pub rank_data: usize,
    /// Minimizer of `H` on the orthogonal complement of `w*`, in rotated
    /// coordinates (length `d − 1`).
    pub hbar_minimizer: Option<Vec<f64>>,
    pub hbar_value: Option<f64>,
    /// Orthonormal basis whose first column is `w*`, stored row-major `d × d`.
    pub frame: Vec<f64>,
    pub kkt_residual: f64,
    pub diagnostics: Vec<String>,
}

impl MarginStructure {
    pub fn frame_matrix(&self) -> DMatrix<f64> {
        let d = self.w_star.len();
        DMatrix::from_row_slice(d, d, &self.frame)
    }

    /// Coordinates of `v` in the rotated frame: `(⟨v, w*⟩, v̄)`.
    pub fn rotate(&self, v: &[f64]) -> (f64, Vec<f64>) {
        let f = self.frame_matrix();
        let c = f.transpose() * DVector::from_column_slice(v);
        (c[0], c.iter().skip(1).copied().collect())
    }

    /// `H(w̄) = (1/n) Σ_{i∈S} exp(−y_i x̄_iᵀ w̄)`.
    pub fn hbar(&self, ds: &LabeledDataset<f64>, wbar: &[f64]) -> f64 {
        let n = ds.count() as f64;
        self.support_s
            .iter()
            .map(|&i| {
                let (_, zbar) = self.rotate(ds.signed_row(i));
                (-dot(&zbar, wbar)).exp()
            })
            .sum::<f64>()
            / n
    }
}

/// Solves the hard-margin program through its dual.
///
/// The dual `max −½‖Σ α_i z_i‖² + Σ α_i` over `α ≥ 0` (with `z_i = y_i x_i`)
/// is rescaled to the minimum-norm point `p*` of the convex hull of the `z_i`,
/// solved by accelerated projected gradient and then polished on its active
/// face. Then `γ = ‖p*‖`, `w* = p*/‖p*‖` and `α = μ/‖p*‖²`.
pub fn solve_margin(ds: &LabeledDataset<f64>) -> Result<MarginStructure> {
    let n = ds.count();
    let d = ds.dim();
    let z = DMatrix::from_fn(n, d, |i, k| ds.signed_row(i)[k]);
    let scale = (0..n).map(|i| norm(ds.signed_row(i))).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::Infeasible("all points are zero".into()));
    }
    let mu = min_norm_point(&z);
    let mut p = z.transpose() * &mu;
    let mut mu = mu;
    if let Some((mp, pp)) = polish(&z, &mu, &p) {
        mu = mp;
        p = pp;
    }
    let pn = p.norm();
    let margins = &z * &p;
    let worst = margins.min();
    if pn <= 1e-9 * scale || worst <= 0.0 {
        return Err(Error::Infeasible(format!("minimum-norm hull point has norm {pn:e}")));
    }
    let w_star: Vec<f64> = p.iter().map(|v| v / pn).collect();
    let margins: Vec<f64> = (0..n).map(|i| dot(ds.signed_row(i), &w_star)).collect();
    let gamma = margins.iter().copied().fold(f64::INFINITY, f64::min);
    if !(gamma > 0.0) {
        return Err(Error::Infeasible(format!("margin {gamma:e} is not positive")));
    }
    let kkt_residual = ((pn * pn - worst).abs() / (pn * pn)).max(mu.iter().fold(0.0, |a: f64, &v| a.max(-v)));

    let alpha: Vec<f64> = mu.iter().map(|m| m.max(0.0) / (pn * pn)).collect();
    let dual_beta: Vec<f64> = alpha.iter().zip(ds.labels()).map(|(a, &y)| a * f64::from(y)).collect();
    let support_s: Vec<usize> =
        (0..n).filter(|&i| margins[i] <= gamma * (1.0 + SUPPORT_MARGIN_SLACK)).collect();
    let amax = alpha.iter().copied().fold(0.0, f64::max);
    let support_s_plus: Vec<usize> = support_s
        .iter()
        .copied()
        .filter(|&i| alpha[i] > SUPPORT_DUAL_SLACK * amax)
        .collect();

    let rows_of = |idx: &[usize]| DMatrix::from_fn(idx.len(), d, |r, k| ds.row(idx[r])[k]);
    let all: Vec<usize> = (0..n).collect();
    let rank_data = rank(&rows_of(&all));
    let rank_support = rank(&rows_of(&support_s_plus));

    let frame = frame_with_first_axis(&w_star);
    let mut ms = MarginStructure {
        gamma,
        w_star,
        dual_beta,
        support_s,
        support_s_plus,
        support_spans_data: rank_support == rank_data,
        rank_support,
        rank_data,
        hbar_minimizer: None,
        hbar_value: None,
        frame: frame.transpose().as_slice().to_vec(),
        kkt_residual,
        diagnostics: vec![format!(
            "thresholds: margin slack {SUPPORT_MARGIN_SLACK:e}, dual slack {SUPPORT_DUAL_SLACK:e}, rank tol {RANK_TOL:e}"
        )],
    };
    match minimize_hbar(ds, &ms) {
        Ok((wbar, value)) => {
            ms.hbar_minimizer = Some(wbar);
            ms.hbar_value = Some(value);
        }
        Err(msg) => ms.diagnostics.push(msg),
    }
    Ok(ms)
}

/// Minimum-norm point of the hull of the rows of `z`, as simplex weights.
fn min_norm_point(z: &DMatrix<f64>) -> DVector<f64> {
    let n = z.nrows();
    let k = z * z.transpose();
    let lip = SymmetricEigen::new(k.clone()).eigenvalues.max().max(1e-300);
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..200_000 {
        let grad = &k * &y;
        let x_next = project_simplex(&(&y - grad / lip));
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = &x_next + (&x_next - &x) * ((t - 1.0) / t_next);
        x = x_next;
        t = t_next;
        let q = &k * &x;
        let pp = x.dot(&q);
        let gap = pp - q.min();
        if gap <= 1e-15 * pp.max(1e-300) || pp <= 1e-30 {
            break;
        }
    }
    x
}

fn project_simplex(v: &DVector<f64>) -> DVector<f64> {
    let mut u: Vec<f64> = v.iter().copied().collect();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut css = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        css += uj;
        let th = (css - 1.0) / (j + 1) as f64;
        if uj - th > 0.0 {
            theta = th;
        }
    }
    v.map(|x| (x - theta).max(0.0))
}

/// Exact minimum-norm point of the affine hull of the current active face,
/// accepted only if it is feasible and optimal over the whole hull.
fn polish(z: &DMatrix<f64>, mu: &DVector<f64>, p: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = z.nrows();
    let pp = p.norm_squared();
    if pp <= 0.0 {
        return None;
    }
    let q = z * p;
    let active: Vec<usize> = (0..n).filter(|&i| q[i] <= pp + 1e-6 * pp.max(q.abs().max() * 1e-3)).collect();
    let base = *active.iter().max_by(|&&a, &&b| mu[a].partial_cmp(&mu[b]).unwrap())?;
    let rest: Vec<usize> = active.iter().copied().filter(|&i| i != base).collect();
    let zb = z.row(base).transpose();
    let mut new_mu = DVector::zeros(n);
    if rest.is_empty() {
        new_mu[base] = 1.0;
    } else {
        let dmat = DMatrix::from_fn(z.ncols(), rest.len(), |k, c| z[(rest[c], k)] - zb[k]);
        let svd = dmat.svd(true, true);
        let c = svd.solve(&(-&zb), RANK_TOL * svd.singular_values.max()).ok()?;
        let mut sum = 0.0;
        for (j, &i) in rest.iter().enumerate() {
            new_mu[i] = c[j];
            sum += c[j];
        }
        new_mu[base] = 1.0 - sum;
    }
    if new_mu.iter().any(|&m| m < -1e-12) {
        return None;
    }
    let new_mu = new_mu.map(|m| m.max(0.0));
    let new_p = z.transpose() * &new_mu;
    let np = new_p.norm_squared();
    let worst = (z * &new_p).min();
    if worst >= np * (1.0 - 1e-12) && np <= pp * (1.0 + 1e-12) {
        Some((new_mu, new_p))
    } else {
        None
    }
}

fn rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.max();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * top).count()
}

/// Orthonormal `d × d` basis (as columns) whose first column is `u`.
pub fn frame_with_first_axis(u: &[f64]) -> DMatrix<f64> {
    let d = u.len();
    let s = if u[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut v = DVector::from_column_slice(u);
    v[0] += s;
    let vv = v.norm_squared();
    let mut h = DMatrix::identity(d, d) - (&v * v.transpose()) * (2.0 / vv);
    // Householder maps e₁ to −s·u; flip the first column to get u itself.
    for r in 0..d {
        h[(r, 0)] *= -s;
    }
    h
}

/// Newton on `H` restricted to the span of the reduced support points.
fn minimize_hbar(ds: &LabeledDataset<f64>, ms: &MarginStructure) -> std::result::Result<(Vec<f64>, f64), String> {
    let d = ds.dim();
    let n = ds.count() as f64;
    let s = &ms.support_s;
    let zbar: Vec<Vec<f64>> = s.iter().map(|&i| ms.rotate(ds.signed_row(i)).1).collect();
    if d == 1 {
        return Ok((Vec::new(), s.len() as f64 / n));
    }
    let a = DMatrix::from_fn(s.len(), d - 1, |r, k| zbar[r][k]);
    let svd = a.clone().svd(false, true);
    let top = svd.singular_values.max();
    let vt = svd.v_t.expect("requested");
    let basis: Vec<usize> =
        (0..svd.singular_values.len()).filter(|&j| top > 0.0 && svd.singular_values[j] > RANK_TOL * top).collect();
    if basis.is_empty() {
        return Ok((vec![0.0; d - 1], s.len() as f64 / n));
    }
    let u = DMatrix::from_fn(d - 1, basis.len(), |k, j| vt[(basis[j], k)]);
    let coords = &a * &u;
    let m = coords.ncols();
    let h_of = |c: &DVector<f64>| (&coords * c).map(|t| (-t).exp()).sum() / n;
    let mut c = DVector::zeros(m);
    for _ in 0..200 {
        let e = (&coords * &c).map(|t| (-t).exp());
        let grad = -(coords.transpose() * &e) / n;
        if grad.norm() <= 1e-13 * e.sum() / n {
            let wbar = &u * &c;
            return Ok((wbar.iter().copied().collect(), h_of(&c)));
        }
        let hess = coords.transpose() * DMatrix::from_diagonal(&e) * &coords / n;
        let dir = match hess.cholesky() {
            Some(ch) => -ch.solve(&grad),
            None => return Err("reduced support problem is degenerate; w̄* absent".into()),
        };
        let f0 = h_of(&c);
        let slope = grad.dot(&dir);
        let mut step = 1.0;
        loop {
            let trial = &c + &dir * step;
            if h_of(&trial) <= f0 + 1e-4 * step * slope || step < 1e-12 {
                c = trial;
                break;
            }
            step *= 0.5;
        }
        if c.norm() > 1e8 {
            return Err("reduced support problem is separable (H has no minimizer); w̄* absent".into());
        }
    }
    Err("Newton on H did not converge; w̄* absent".into())
}

/// One row of the Hessian bracket table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketRow {
    pub lambda: f64,
    /// Eigenvalues of `∇²L(w_λ)`.
    pub eig_min: f64,
    pub eig_max: f64,
    pub ratio_lo: f64,
    pub ratio_hi: f64,
    /// `exp(γ⟨w_λ, w*⟩)·λ ln(1/λ) / (γ² H(w̄*))`, when `w̄*` exists.
    pub exp_identity: Option<f64>,
    /// Distance between the orthogonal part of `w_λ` and `w̄*`.
    pub orth_distance: Option<f64>,
    pub along_w_star: f64,
}

/// Spectrum of the unregularized Hessian at `w_λ`, scaled by `λ ln(1/λ)`.
pub fn hessian_bracket_check(ds: &LabeledDataset<f64>, lambda_grid: &[f64]) -> Result<Vec<BracketRow>> {
    let ms = solve_margin(ds)?;
    if !ms.support_spans_data {
        return Err(Error::SupportRank(format!(
            "rank of S_+ is {} but data rank is {}",
            ms.rank_support, ms.rank_data
        )));
    }
    let inv_e = (-1.0f64).exp();
    lambda_grid
        .iter()
        .map(|&lambda| {
            if !(lambda > 0.0 && lambda < inv_e) {
                return Err(domain(format!("lambda must lie in (0, 1/e), got {lambda}")));
            }
            let sol = solve_minimizer(ds, lambda, DEFAULT_TOL)?;
            let (eig_min, eig_max) = eig_extremes(hessian_slice(ds, &sol.w_lambda, 0.0)?);
            let scale = lambda * (1.0 / lambda).ln();
            let (along, orth) = ms.rotate(&sol.w_lambda);
            let exp_identity =
                ms.hbar_value.map(|hv| (ms.gamma * along).exp() * scale / (ms.gamma * ms.gamma * hv));
            let orth_distance = ms.hbar_minimizer.as_ref().map(|wb| crate::scalar::dist(&orth, wb));
            Ok(BracketRow {
                lambda,
                eig_min,
                eig_max,
                ratio_lo: eig_min / scale,
                ratio_hi: eig_max / scale,
                exp_identity,
                orth_distance,
                along_w_star: along,
            })
        })
        .collect()
}

/// `R` at `w`; convenience for perturbation checks against a reference.
pub fn risk_at(ds: &LabeledDataset<f64>, w: &[f64], lambda: f64) -> f64 {
    risk(ds, w, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{make_1d_dataset, make_hard_dataset, sample_separable, LabeledDataset};
    use crate::objective::evaluate_slice;
    use approx::assert_relative_eq;

    /// Brute-force max-margin over a fine grid of 2-D unit vectors.
    fn grid_margin(ds: &LabeledDataset<f64>) -> (f64, [f64; 2]) {
        let mut best = (f64::NEG_INFINITY, [0.0, 0.0]);
        let m = 2_000_000;
        for j in 0..m {
            let th = std::f64::consts::TAU * j as f64 / m as f64;
            let u = [th.cos(), th.sin()];
            let g = (0..ds.count()).map(|i| dot(ds.signed_row(i), &u)).fold(f64::INFINITY, f64::min);
            if g > best.0 {
                best = (g, u);
            }
        }
        best
    }

    #[test]
    fn hard_dataset_margin_matches_grid() {
        let ds = make_hard_dataset::<f64>(0.05).unwrap();
        let (g, u) = grid_margin(&ds);
        let ms = solve_margin(&ds).unwrap();
        assert!((ms.gamma - g).abs() < 1e-9);
        assert!((ms.w_star[0] - u[0]).abs() < 1e-5 && (ms.w_star[1] - u[1]).abs() < 1e-5);
        assert_relative_eq!(ms.gamma, 0.05, max_relative = 1e-12);
        assert!(ms.w_star[1].abs() < 1e-12);
        assert_eq!(ms.support_s, vec![0, 1]);
        assert_eq!(ms.support_s_plus, vec![0, 1]);
        assert!(ms.support_spans_data);
        // Dual weights are proportional to (5/14, 9/14).
        let tot = ms.dual_beta[0] + ms.dual_beta[1];
        assert_relative_eq!(ms.dual_beta[0] / tot, 5.0 / 14.0, max_relative = 1e-10);
        let wbar = ms.hbar_minimizer.as_ref().unwrap();
        assert_relative_eq!(wbar[0].abs(), 1.8f64.ln() / 1.4, max_relative = 1e-10);
    }

    #[test]
    fn random_2d_margin_matches_grid() {
        for seed in 0..4 {
            let ds = sample_separable::<f64>(9, 2, 0.2, seed).unwrap();
            let (g, _) = grid_margin(&ds);
            let ms = solve_margin(&ds).unwrap();
            assert!(ms.gamma >= g - 1e-9 && ms.gamma <= g + 1e-5, "seed {seed}: {} vs {g}", ms.gamma);
            assert!(ms.gamma >= 0.2 * (1.0 - 1e-12));
        }
    }

    #[test]
    fn one_dim_margin_and_ties() {
        let ms = solve_margin(&make_1d_dataset::<f64>(&[0.3, 0.7, 1.0]).unwrap()).unwrap();
        assert_eq!(ms.gamma, 0.3);
        assert_eq!(ms.support_s, vec![0]);
        let ms = solve_margin(&make_1d_dataset::<f64>(&[0.5, 0.5]).unwrap()).unwrap();
        assert_eq!(ms.support_s, vec![0, 1]);
        assert_eq!(ms.hbar_value, Some(1.0));
    }

    #[test]
    fn single_unit_point() {
        let x = vec![0.6, -0.8];
        let ds = LabeledDataset::from_rows(vec![x.clone()], vec![-1]).unwrap();
        let ms = solve_margin(&ds).unwrap();
        assert_relative_eq!(ms.gamma, 1.0, max_relative = 1e-14);
        assert_relative_eq!(ms.w_star[0], -0.6, max_relative = 1e-14);
        assert_relative_eq!(ms.w_star[1], 0.8, max_relative = 1e-14);
        assert_eq!(ms.support_s, vec![0]);
        assert_eq!(ms.support_s_plus, vec![0]);
    }

    #[test]
    fn nonseparable_is_infeasible() {
        let ds = LabeledDataset::from_rows(vec![vec![1.0], vec![1.0]], vec![1, -1]).unwrap();
        assert!(matches!(solve_margin(&ds), Err(Error::Infeasible(_))));
        let ds = LabeledDataset::from_rows(
            vec![vec![0.5, 0.0], vec![-0.5, 0.0], vec![0.0, 0.5], vec![0.0, -0.5]],
            vec![1, 1, 1, 1],
        )
        .unwrap();
        assert!(solve_margin(&ds).is_err());
    }

    #[test]
    fn duality_and_complementary_slackness() {
        for seed in 0..10 {
            let ds = sample_separable::<f64>(12, 4, 0.15, seed).unwrap();
            let ms = solve_margin(&ds).unwrap();
            let mut what = vec![0.0; 4];
            for i in 0..ds.count() {
                for k in 0..4 {
                    what[k] += ms.dual_beta[i] * ds.row(i)[k];
                }
                assert!(ms.dual_beta[i] * f64::from(ds.label(i)) >= 0.0);
            }
            assert_relative_eq!(ms.gamma, 1.0 / norm(&what), max_relative = 1e-8);
            assert!(ms.support_s_plus.iter().all(|i| ms.support_s.contains(i)));
            assert!((norm(&ms.w_star) - 1.0).abs() < 1e-10);
            let f = ms.frame_matrix();
            let err = (f.transpose() * &f - DMatrix::identity(4, 4)).abs().max();
            assert!(err < 1e-12);
        }
    }

    #[test]
    fn one_dim_minimizer_matches_bisection() {
        // 0.1 w = 1/(1+e^w), solved by bisection.
        let (mut lo, mut hi) = (0.0f64, 10.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 0.1 * mid - 1.0 / (1.0 + mid.exp()) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let ds = make_1d_dataset::<f64>(&[1.0]).unwrap();
        let sol = solve_minimizer(&ds, 0.1, 1e-12).unwrap();
        assert!((sol.w_lambda[0] - lo).abs() < 1e-11);
        assert!((sol.w_lambda[0] - 1.633_506_170_155_846).abs() < 1e-11);
        assert_eq!(sol.method, SolveMethod::Newton);
    }

    #[test]
    fn minimizer_invariants() {
        for (seed, lambda) in [(0u64, 1e-1), (1, 1e-3), (2, 1e-5), (3, 2.0)] {
            let ds = sample_separable::<f64>(10, 3, 0.2, seed).unwrap();
            let sol = solve_minimizer(&ds, lambda, 1e-12).unwrap();
            assert!(sol.grad_norm_at_sol <= 1e-12);
            assert!(sol.hess_eig_min >= lambda * (1.0 - 1e-10));
            assert!(sol.kappa >= 1.0);
            assert!(sol.min_risk <= std::f64::consts::LN_2);
            if lambda >= 1.0 {
                assert!(norm(&sol.w_lambda) <= 1.0 / lambda);
            }
            let e = evaluate_slice(&ds, &sol.w_lambda, lambda).unwrap();
            assert_eq!(e.risk, sol.min_risk);
        }
    }

    #[test]
    fn hard_dataset_deep_lambda() {
        let ds = make_hard_dataset::<f64>(0.05).unwrap();
        let sol = solve_minimizer(&ds, 1e-6, 1e-12).unwrap();
        assert!((sol.w_lambda[0] - 119.8).abs() < 0.1, "{:?}", sol.w_lambda);
        assert!((sol.w_lambda[1] - 0.4204).abs() < 1e-3);
    }

    #[test]
    fn bracket_rejects_bad_lambda() {
        let ds = make_hard_dataset::<f64>(0.05).unwrap();
        assert!(hessian_bracket_check(&ds, &[0.5]).is_err());
        let rows = hessian_bracket_check(&ds, &[1e-4]).unwrap();
        assert!(rows[0].ratio_hi.is_finite() && rows[0].ratio_hi > 0.0);
    }

    #[test]
    fn rank_condition_failure() {
        // Only the first point carries dual mass; it cannot span R².
        let ds = LabeledDataset::from_rows(vec![vec![0.5, 0.0], vec![0.9, 0.3]], vec![1, 1]).unwrap();
        let ms = solve_margin(&ds).unwrap();
        assert_eq!(ms.support_s_plus, vec![0]);
        assert!(!ms.support_spans_data);
        assert!(matches!(hessian_bracket_check(&ds, &[1e-3]), Err(Error::SupportRank(_))));
    }
}
