//! Logistic loss, the ℓ2-regularized empirical risk `R(w) = L(w) + (λ/2)‖w‖²`,
//! its derivatives, and the gradient potential `G(w) = (1/n) Σ |ℓ'(y_i x_iᵀw)|`.
//!
//! Every logistic quantity goes through branch-stable forms so that margins of
//! any finite magnitude evaluate without overflow.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::datasets::LabeledDataset;
use crate::error::{domain, Error, Result};
use crate::scalar::{dot, norm, Scalar};

/// A parameter vector with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>", bound = "T: Scalar")]
pub struct ParamVector<T>(Vec<T>);

impl<T: Scalar> ParamVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter entry {i}")));
        }
        Ok(Self(values))
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![T::zero(); d])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> T {
        norm(&self.0)
    }
}

impl<T: Scalar> std::ops::Index<usize> for ParamVector<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T: Scalar> TryFrom<Vec<f64>> for ParamVector<T> {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v.into_iter().map(T::lit).collect())
    }
}

impl<T: Scalar> From<ParamVector<T>> for Vec<f64> {
    fn from(p: ParamVector<T>) -> Self {
        p.0.into_iter().map(|v| v.to_f64_lossy()).collect()
    }
}

/// Loss, first and second derivative of `ℓ(z) = ln(1 + e^{−z})`.
pub fn pointwise_logistic<T: Scalar>(z: T) -> Result<(T, T, T)> {
    if !z.is_finite() {
        return Err(Error::NonFinite(format!("margin {z}")));
    }
    let p = Pointwise::at(z);
    Ok((p.loss, -p.abs_d1, p.abs_d1 * p.sigmoid))
}

/// `ln ℓ(z)`, finite for every finite `z` (including where `ℓ(z)` underflows).
pub fn log_logistic_loss<T: Scalar>(z: T) -> T {
    if z > T::lit(36.0) {
        // ℓ(z) = e^{−z}(1 − e^{−z}/2 + …)
        -z - T::lit(0.5) * (-z).exp()
    } else {
        Pointwise::at(z).loss.ln()
    }
}

/// `ln |ℓ'(z)| = −ln(1 + e^{z})`.
pub fn log_abs_logistic_deriv<T: Scalar>(z: T) -> T {
    -softplus(z)
}

fn softplus<T: Scalar>(z: T) -> T {
    if z > T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Branch-stable pointwise quantities from a single exponential.
#[derive(Clone, Copy)]
pub(crate) struct Pointwise<T> {
    pub loss: T,
    /// `|ℓ'(z)| = 1/(1 + e^{z})`.
    pub abs_d1: T,
    /// `1 − |ℓ'(z)| = 1/(1 + e^{−z})`, computed without cancellation.
    pub sigmoid: T,
}

impl<T: Scalar> Pointwise<T> {
    #[inline]
    pub fn at(z: T) -> Self {
        let e = (-z.abs()).exp();
        let inv = T::one() / (T::one() + e);
        if z >= T::zero() {
            Self { loss: e.ln_1p(), abs_d1: e * inv, sigmoid: inv }
        } else {
            Self { loss: -z + e.ln_1p(), abs_d1: inv, sigmoid: e * inv }
        }
    }
}

/// `R`, `L`, `(λ/2)‖w‖²`, both gradients and `G` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval<T> {
    pub risk: T,
    pub loss: T,
    pub reg_term: T,
    pub grad_risk: Vec<T>,
    pub grad_loss: Vec<T>,
    pub potential: T,
}

impl<T: Scalar> ObjectiveEval<T> {
    pub fn grad_risk_norm(&self) -> T {
        norm(&self.grad_risk)
    }
}

/// Scalars of one evaluation; gradients are left in the caller's buffers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct EvalScalars<T> {
    pub risk: T,
    pub loss: T,
    pub reg_term: T,
    pub potential: T,
}

pub(crate) fn check_dim<T: Scalar>(ds: &LabeledDataset<T>, d: usize) -> Result<()> {
    if ds.dim() != d {
        return Err(Error::DimensionMismatch { expected: ds.dim(), got: d });
    }
    Ok(())
}

/// Allocation-free evaluation used by the optimizer loops. Reductions run in
/// index order so results are bitwise reproducible.
#[inline]
pub(crate) fn evaluate_into<T: Scalar>(
    ds: &LabeledDataset<T>,
    w: &[T],
    lambda: T,
    grad_loss: &mut [T],
    grad_risk: &mut [T],
) -> EvalScalars<T> {
    grad_loss.iter_mut().for_each(|g| *g = T::zero());
    let mut loss = T::zero();
    let mut potential = T::zero();
    for i in 0..ds.count() {
        let z = ds.signed_row(i);
        let p = Pointwise::at(dot(z, w));
        loss += p.loss;
        potential += p.abs_d1;
        for (g, zi) in grad_loss.iter_mut().zip(z) {
            *g -= p.abs_d1 * *zi;
        }
    }
    let inv_n = T::one() / T::lit(ds.count() as f64);
    loss *= inv_n;
    potential *= inv_n;
    for ((gr, gl), wi) in grad_risk.iter_mut().zip(grad_loss.iter_mut()).zip(w) {
        *gl *= inv_n;
        *gr = *gl + lambda * *wi;
    }
    let reg_term = lambda * dot(w, w) / T::lit(2.0);
    EvalScalars { risk: loss + reg_term, loss, reg_term, potential }
}

/// Evaluates the objective and its diagnostics at `w`.
pub fn evaluate<T: Scalar>(ds: &LabeledDataset<T>, w: &ParamVector<T>, lambda: T) -> Result<ObjectiveEval<T>> {
    evaluate_slice(ds, w.as_slice(), lambda)
}

pub fn evaluate_slice<T: Scalar>(ds: &LabeledDataset<T>, w: &[T], lambda: T) -> Result<ObjectiveEval<T>> {
    check_dim(ds, w.len())?;
    if !(lambda >= T::zero()) {
        return Err(domain(format!("lambda must be ≥ 0, got {lambda}")));
    }
    let d = ds.dim();
    let mut grad_loss = vec![T::zero(); d];
    let mut grad_risk = vec![T::zero(); d];
    let s = evaluate_into(ds, w, lambda, &mut grad_loss, &mut grad_risk);
    Ok(ObjectiveEval {
        risk: s.risk,
        loss: s.loss,
        reg_term: s.reg_term,
        grad_risk,
        grad_loss,
        potential: s.potential,
    })
}

/// `R(w)` alone.
pub fn risk<T: Scalar>(ds: &LabeledDataset<T>, w: &[T], lambda: T) -> T {
    let mut loss = T::zero();
    for i in 0..ds.count() {
        loss += Pointwise::at(dot(ds.signed_row(i), w)).loss;
    }
    loss / T::lit(ds.count() as f64) + lambda * dot(w, w) / T::lit(2.0)
}

/// `∇²R(w) = (1/n) Σ ℓ''(y_i x_iᵀw) x_i x_iᵀ + λI`, dense.
pub fn hessian<T: Scalar>(ds: &LabeledDataset<T>, w: &ParamVector<T>, lambda: T) -> Result<DMatrix<T>> {
    hessian_slice(ds, w.as_slice(), lambda)
}

pub fn hessian_slice<T: Scalar>(ds: &LabeledDataset<T>, w: &[T], lambda: T) -> Result<DMatrix<T>> {
    check_dim(ds, w.len())?;
    let d = ds.dim();
    let mut h = vec![T::zero(); d * d];
    for i in 0..ds.count() {
        let x = ds.row(i);
        let p = Pointwise::at(dot(ds.signed_row(i), w));
        let c = p.abs_d1 * p.sigmoid;
        for a in 0..d {
            let ca = c * x[a];
            for b in a..d {
                h[a * d + b] += ca * x[b];
            }
        }
    }
    let inv_n = T::one() / T::lit(ds.count() as f64);
    for a in 0..d {
        for b in a..d {
            let v = h[a * d + b] * inv_n;
            h[a * d + b] = v;
            h[b * d + a] = v;
        }
        h[a * d + a] += lambda;
    }
    Ok(DMatrix::from_row_slice(d, d, &h))
}
