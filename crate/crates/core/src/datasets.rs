//! Linearly separable datasets and separable population samplers.
//!
//! Every constructor here produces points with `‖x‖ ≤ 1` and attaches the
//! margin certificate `(γ, w*)` it was built with, so downstream bounds use a
//! known margin instead of an estimated one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{domain, Error, Result};
use crate::reference;
use crate::scalar::{norm, Scalar};

/// Identity of the pseudo-random generator; recorded in output metadata.
pub const RNG_ALGORITHM: &str = "rand_chacha::ChaCha8Rng (seed_from_u64, per-purpose stream)";

/// Slack used for the unit-ball check.
pub const NORM_SLACK: f64 = 1e-12;

const STREAM_SEPARABLE: u64 = 1;
const STREAM_POPULATION: u64 = 2;

/// Seeded generator for one purpose. Streams keep generators for different
/// samplers independent even when they share a seed.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Margin `γ` together with a unit direction `w*` attaining it.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginCertificate<T> {
    pub gamma: T,
    pub direction: Vec<T>,
}

/// Binary-labelled points stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<T> {
    features: Vec<T>,
    /// `y_i x_i`, cached because every objective evaluation needs it.
    signed: Vec<T>,
    labels: Vec<i8>,
    dim: usize,
    count: usize,
    certificate: Option<MarginCertificate<T>>,
}

impl<T: Scalar> LabeledDataset<T> {
    /// Builds a dataset, rejecting rows outside the unit ball.
    pub fn from_rows(rows: Vec<Vec<T>>, labels: Vec<i8>) -> Result<Self> {
        let ds = Self::from_rows_unchecked(rows, labels)?;
        for i in 0..ds.count {
            let r = norm(ds.row(i)).to_f64_lossy();
            if r > 1.0 + NORM_SLACK {
                return Err(domain(format!("row {i} has norm {r} > 1")));
            }
        }
        Ok(ds)
    }

    /// Like [`from_rows`](Self::from_rows) but leaves the norm bound to
    /// [`validate`].
    pub fn from_rows_unchecked(rows: Vec<Vec<T>>, labels: Vec<i8>) -> Result<Self> {
        let count = rows.len();
        if count == 0 {
            return Err(domain("dataset needs at least one point"));
        }
        if labels.len() != count {
            return Err(Error::DimensionMismatch { expected: count, got: labels.len() });
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(domain("dimension must be at least 1"));
        }
        let mut features = Vec::with_capacity(count * dim);
        let mut signed = Vec::with_capacity(count * dim);
        for (i, (row, &y)) in rows.iter().zip(&labels).enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: row.len() });
            }
            if y != 1 && y != -1 {
                return Err(domain(format!("label {y} at row {i} is not ±1")));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("row {i}")));
            }
            let s = T::lit(f64::from(y));
            features.extend_from_slice(row);
            signed.extend(row.iter().map(|&v| s * v));
        }
        Ok(Self { features, signed, labels, dim, count, certificate: None })
    }

    /// Attaches a margin certificate after checking it against every point.
    pub fn with_certificate(mut self, gamma: T, direction: Vec<T>) -> Result<Self> {
        if direction.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: direction.len() });
        }
        let unit = norm(&direction).to_f64_lossy();
        if (unit - 1.0).abs() > 1e-12 {
            return Err(domain(format!("certificate direction has norm {unit}")));
        }
        let tol = T::lit(1e-12) * gamma.abs().max(T::one());
        for i in 0..self.count {
            let m = crate::scalar::dot(self.signed_row(i), &direction);
            if m < gamma - tol {
                return Err(domain(format!("row {i} has margin {m} < {gamma}")));
            }
        }
        self.certificate = Some(MarginCertificate { gamma, direction });
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// `y_i x_i`.
    pub fn signed_row(&self, i: usize) -> &[T] {
        &self.signed[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> i8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.features.chunks_exact(self.dim)
    }

    pub fn certificate(&self) -> Option<&MarginCertificate<T>> {
        self.certificate.as_ref()
    }

    /// Construction-time margin, if one was recorded.
    pub fn gamma(&self) -> Option<T> {
        self.certificate.as_ref().map(|c| c.gamma)
    }

    /// Lossless widening to `f64` (lossy the other way).
    pub fn to_f64(&self) -> LabeledDataset<f64> {
        let cv = |v: &[T]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<_>>();
        LabeledDataset {
            features: cv(&self.features),
            signed: cv(&self.signed),
            labels: self.labels.clone(),
            dim: self.dim,
            count: self.count,
            certificate: self.certificate.as_ref().map(|c| MarginCertificate {
                gamma: c.gamma.to_f64_lossy(),
                direction: cv(&c.direction),
            }),
        }
    }

    pub fn cast<U: Scalar>(&self) -> LabeledDataset<U> {
        let cv = |v: &[T]| v.iter().map(|x| U::lit(x.to_f64_lossy())).collect::<Vec<_>>();
        LabeledDataset {
            features: cv(&self.features),
            signed: cv(&self.signed),
            labels: self.labels.clone(),
            dim: self.dim,
            count: self.count,
            certificate: self.certificate.as_ref().map(|c| MarginCertificate {
                gamma: U::lit(c.gamma.to_f64_lossy()),
                direction: cv(&c.direction),
            }),
        }
    }

    /// SHA-256 over the little-endian bytes of dims, labels and features.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.count as u64).to_le_bytes());
        h.update((self.dim as u64).to_le_bytes());
        for &y in &self.labels {
            h.update([y as u8]);
        }
        for v in &self.features {
            h.update(v.to_f64_lossy().to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// The two-point dataset `x₁ = (γ, 0.9)`, `x₂ = (γ, −0.5)`, both labelled `+1`,
/// on which stable-regime gradient descent is provably slow.
pub fn make_hard_dataset<T: Scalar>(gamma: f64) -> Result<LabeledDataset<T>> {
    if !(gamma > 0.0 && gamma < 0.1) {
        return Err(domain(format!("hard dataset needs 0 < gamma < 0.1, got {gamma}")));
    }
    let g = T::lit(gamma);
    LabeledDataset::from_rows(vec![vec![g, T::lit(0.9)], vec![g, T::lit(-0.5)]], vec![1, 1])?
        .with_certificate(g, vec![T::one(), T::zero()])
}

/// Random separable data whose margin along `e₁` is exactly `gamma`.
///
/// Point 0 sits on the margin (`y x₁ = γ`); the others have `y x₁` uniform in
/// `[γ, 1)`. The remaining coordinates are an isotropic direction scaled by a
/// uniform fraction of the radius left inside the unit ball.
pub fn sample_separable<T: Scalar>(n: usize, d: usize, gamma: f64, seed: u64) -> Result<LabeledDataset<T>> {
    if n == 0 || d == 0 {
        return Err(domain("n and d must be at least 1"));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(domain(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    let mut rng = seeded_rng(seed, STREAM_SEPARABLE);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y: i8 = if rng.random::<bool>() { 1 } else { -1 };
        let a = if i == 0 { gamma } else { gamma + (1.0 - gamma) * rng.random::<f64>() };
        let mut row = vec![0.0f64; d];
        row[0] = f64::from(y) * a;
        if d > 1 {
            let dir = unit_gaussian(&mut rng, d - 1);
            let radius = (1.0 - a * a).max(0.0).sqrt() * rng.random::<f64>();
            for (r, g) in row[1..].iter_mut().zip(dir) {
                *r = radius * g;
            }
        }
        rows.push(row.into_iter().map(T::lit).collect());
        labels.push(y);
    }
    let mut e1 = vec![T::zero(); d];
    e1[0] = T::one();
    LabeledDataset::from_rows(rows, labels)?.with_certificate(T::lit(gamma), e1)
}

/// One-dimensional dataset `x_i = z_i`, `y_i = +1`.
pub fn make_1d_dataset<T: Scalar>(z: &[f64]) -> Result<LabeledDataset<T>> {
    if z.is_empty() {
        return Err(domain("need at least one point"));
    }
    if let Some(bad) = z.iter().find(|&&v| !(v > 0.0 && v <= 1.0)) {
        return Err(domain(format!("entries must lie in (0, 1], got {bad}")));
    }
    let gamma = z.iter().copied().fold(f64::INFINITY, f64::min);
    LabeledDataset::from_rows(z.iter().map(|&v| vec![T::lit(v)]).collect(), vec![1; z.len()])?
        .with_certificate(T::lit(gamma), vec![T::one()])
}

/// A separable population: `y ~ ±1` with `P(y = +1) = label_bias`, and
/// `x = γ y w* + ζ` with `ζ ⟂ w*` isotropic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub dim: usize,
    pub margin: f64,
    pub direction: Vec<f64>,
    pub noise_scale: f64,
    pub label_bias: f64,
}

impl DistributionSpec {
    pub fn new(dim: usize, margin: f64, direction: Vec<f64>, noise_scale: f64, label_bias: f64) -> Result<Self> {
        let spec = Self { dim, margin, direction, noise_scale, label_bias };
        spec.check()?;
        Ok(spec)
    }

    /// Spec with `w* = e₁`.
    pub fn axis_aligned(dim: usize, margin: f64, noise_scale: f64, label_bias: f64) -> Result<Self> {
        let mut e1 = vec![0.0; dim.max(1)];
        e1[0] = 1.0;
        Self::new(dim, margin, e1, noise_scale, label_bias)
    }

    fn check(&self) -> Result<()> {
        if self.dim == 0 || self.direction.len() != self.dim {
            return Err(domain("direction length must equal dim ≥ 1"));
        }
        if !(self.margin > 0.0 && self.margin <= 1.0) {
            return Err(domain(format!("margin must lie in (0, 1], got {}", self.margin)));
        }
        let u = norm(&self.direction);
        if (u - 1.0).abs() > 1e-12 {
            return Err(domain(format!("direction has norm {u}, expected 1")));
        }
        if !(0.0..1.0).contains(&self.noise_scale) {
            return Err(domain("noise_scale must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.label_bias) {
            return Err(domain("label_bias must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Draws `m` independent points from `spec`.
///
/// The orthogonal noise has a uniformly random direction in `w*⟂` and radius
/// `noise_scale · √(1 − γ²) · U`, so `‖x‖ ≤ 1` and `y xᵀw* = γ`.
pub fn sample_population<T: Scalar>(spec: &DistributionSpec, m: usize, seed: u64) -> Result<LabeledDataset<T>> {
    spec.check()?;
    if m == 0 {
        return Err(domain("m must be at least 1"));
    }
    let d = spec.dim;
    let gamma = spec.margin;
    let w = &spec.direction;
    let mut rng = seeded_rng(seed, STREAM_POPULATION);
    let mut rows = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    let max_radius = (1.0 - gamma * gamma).max(0.0).sqrt();
    for _ in 0..m {
        let y: i8 = if rng.random::<f64>() < spec.label_bias { 1 } else { -1 };
        let yf = f64::from(y);
        let mut x: Vec<f64> = w.iter().map(|&c| gamma * yf * c).collect();
        if d > 1 && spec.noise_scale > 0.0 {
            let mut g: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let along = crate::scalar::dot(&g, w);
            for (gi, wi) in g.iter_mut().zip(w) {
                *gi -= along * wi;
            }
            let gn = norm(&g);
            let radius = spec.noise_scale * max_radius * rng.random::<f64>();
            if gn > 0.0 {
                for (xi, gi) in x.iter_mut().zip(&g) {
                    *xi += radius * gi / gn;
                }
            }
        }
        rows.push(x.into_iter().map(T::lit).collect());
        labels.push(y);
    }
    LabeledDataset::from_rows(rows, labels)
}

fn unit_gaussian(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let r = norm(&g);
        if r > 1e-300 {
            return g.into_iter().map(|v| v / r).collect();
        }
    }
}

/// A problem found by [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub index: Option<usize>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub is_bounded: bool,
    pub is_separable: bool,
    pub certified_margin: Option<f64>,
    pub violations: Vec<Violation>,
}

/// Checks the unit-ball bound and certifies the maximum margin through the
/// hard-margin dual.
pub fn validate<T: Scalar>(ds: &LabeledDataset<T>) -> ValidationReport {
    let ds = ds.to_f64();
    let mut violations = Vec::new();
    for (i, row) in ds.rows().enumerate() {
        let r = norm(row);
        if r > 1.0 + NORM_SLACK {
            violations.push(Violation { index: Some(i), reason: format!("norm {r} exceeds 1") });
        }
    }
    let is_bounded = violations.is_empty();
    let (is_separable, certified_margin) = match reference::solve_margin(&ds) {
        Ok(m) if m.gamma > 0.0 => (true, Some(m.gamma)),
        Ok(m) => {
            violations.push(Violation { index: None, reason: format!("non-positive margin {}", m.gamma) });
            (false, None)
        }
        Err(e) => {
            violations.push(Violation { index: None, reason: e.to_string() });
            (false, None)
        }
    };
    ValidationReport { is_bounded, is_separable, certified_margin, violations }
}
