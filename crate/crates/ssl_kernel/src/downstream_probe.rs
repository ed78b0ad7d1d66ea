//! Ridge probes on frozen representations.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::kernelspace::FeatureMap;
use crate::linalg;
use crate::spectral_pretrain::RepresentationModel;

/// A frozen map from input points to `ℝ^k`.
pub trait Representation: Send + Sync {
    fn dim(&self) -> usize;
    /// Row `r` holds the representation of `points[r]`.
    fn embed(&self, points: &[Vec<f64>]) -> Result<DMatrix<f64>>;
}

impl Representation for RepresentationModel {
    fn dim(&self) -> usize {
        self.k()
    }
    fn embed(&self, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        self.evaluate_many(points)
    }
}

/// `ψ(x) = Θ φ(x)` over explicit features.
#[derive(Debug, Clone)]
pub struct LinearFeatures {
    pub features: FeatureMap,
    /// `k × D`
    pub theta: DMatrix<f64>,
}

impl Representation for LinearFeatures {
    fn dim(&self) -> usize {
        self.theta.nrows()
    }
    fn embed(&self, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        Ok(self.features.features(points)? * self.theta.transpose())
    }
}

/// Composes a representation with a fixed `k' × k` matrix.
pub struct Transformed<'a> {
    pub inner: &'a dyn Representation,
    pub matrix: DMatrix<f64>,
}

impl Representation for Transformed<'_> {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }
    fn embed(&self, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        Ok(self.inner.embed(points)? * self.matrix.transpose())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub points: Vec<Vec<f64>>,
    /// `n × d_y` targets; one-hot for classification.
    pub targets: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<usize>>,
}

impl LabeledDataset {
    pub fn regression(points: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if points.len() != targets.len() {
            return input(format!("{} points but {} targets", points.len(), targets.len()));
        }
        let dy = targets.first().map_or(0, Vec::len);
        if targets.iter().any(|t| t.len() != dy) {
            return input("targets have inconsistent dimensions");
        }
        if targets.iter().flatten().chain(points.iter().flatten()).any(|v| !v.is_finite()) {
            return input("non-finite value in dataset");
        }
        Ok(Self {
            points,
            targets,
            classes: None,
        })
    }

    pub fn classification(points: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if let Some(bad) = labels.iter().find(|&&c| c >= n_classes) {
            return input(format!("label {bad} outside [0, {n_classes})"));
        }
        let targets = labels
            .iter()
            .map(|&c| (0..n_classes).map(|j| if j == c { 1.0 } else { 0.0 }).collect())
            .collect();
        let mut d = Self::regression(points, targets)?;
        d.classes = Some(labels);
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn target_matrix(&self) -> DMatrix<f64> {
        let dy = self.targets.first().map_or(0, Vec::len);
        DMatrix::from_fn(self.len(), dy, |i, j| self.targets[i][j])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeProbe {
    /// `k × d_y`
    pub weights: Vec<Vec<f64>>,
    pub gamma: f64,
    #[serde(default)]
    pub representation_id: String,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl RidgeProbe {
    pub fn weight_matrix(&self) -> DMatrix<f64> {
        let k = self.weights.len();
        let dy = self.weights.first().map_or(0, Vec::len);
        DMatrix::from_fn(k, dy, |i, j| self.weights[i][j])
    }

    /// `n × d_y` predictions from precomputed representations.
    pub fn predict(&self, psi: &DMatrix<f64>) -> DMatrix<f64> {
        psi * self.weight_matrix()
    }
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn fit_probe(model: &dyn Representation, data: &LabeledDataset, gamma: f64) -> Result<RidgeProbe> {
    if data.is_empty() {
        return input("probe needs at least one sample");
    }
    fit_probe_on(&model.embed(&data.points)?, &data.target_matrix(), gamma)
}

/// `w = (Σ̂ + γI)⁻¹ (1/n) Ψᵀ Y` with `Σ̂ = ΨᵀΨ/n`.
pub fn fit_probe_on(psi: &DMatrix<f64>, y: &DMatrix<f64>, gamma: f64) -> Result<RidgeProbe> {
    let n = psi.nrows();
    if n == 0 || y.nrows() != n {
        return input(format!("{n} representation rows but {} targets", y.nrows()));
    }
    let sigma = psi.transpose() * psi / n as f64;
    let b = psi.transpose() * y / n as f64;
    fit_probe_moments(&sigma, &b, gamma)
}

/// Ridge solution from the second moments `Σ̂` and `b = (1/n)ΨᵀY`.
pub fn fit_probe_moments(sigma: &DMatrix<f64>, b: &DMatrix<f64>, gamma: f64) -> Result<RidgeProbe> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return input(format!("gamma must be finite and non-negative, got {gamma}"));
    }
    let k = sigma.nrows();
    let a = sigma + DMatrix::identity(k, k) * gamma;
    let mut warnings = Vec::new();
    let w = match a.clone().cholesky() {
        Some(ch) if min_diag_ratio(&a) > 1e-12 => ch.solve(b),
        _ => {
            let msg = format!("ridge system with gamma = {gamma:e} is singular; using the pseudo-inverse");
            log::warn!("{msg}");
            warnings.push(msg);
            if a.iter().all(|v| *v == 0.0) {
                DMatrix::zeros(k, b.ncols())
            } else {
                linalg::pinv_sym(&a, 1e-12)? * b
            }
        }
    };
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite ridge weights".into()));
    }
    Ok(RidgeProbe {
        weights: to_rows(&w),
        gamma,
        representation_id: String::new(),
        warnings,
    })
}

fn min_diag_ratio(a: &DMatrix<f64>) -> f64 {
    let e = nalgebra::SymmetricEigen::new(a.clone());
    let max = e.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let min = e.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    if max == 0.0 {
        0.0
    } else {
        min / max
    }
}

/// Plain gradient descent on `(1/2n)‖Ψw − Y‖² + (γ/2)‖w‖²` from `w = 0`.
pub fn ridge_gradient_descent(psi: &DMatrix<f64>, y: &DMatrix<f64>, gamma: f64, steps: usize) -> DMatrix<f64> {
    let n = psi.nrows() as f64;
    let k = psi.ncols();
    let sigma = psi.transpose() * psi / n + DMatrix::identity(k, k) * gamma;
    let b = psi.transpose() * y / n;
    let l = linalg::spectral_norm(&sigma).max(f64::MIN_POSITIVE);
    let eta = 1.0 / l;
    let mut w = DMatrix::zeros(k, y.ncols());
    for _ in 0..steps {
        let g = &sigma * &w - &b;
        w -= g * eta;
    }
    w
}

/// Mean squared error over `test`; divided by `target_norm` (the squared
/// norm `‖f*‖²`) when given.
pub fn excess_risk(
    probe: &RidgeProbe,
    model: &dyn Representation,
    test: &LabeledDataset,
    target_norm: Option<f64>,
) -> Result<f64> {
    if test.is_empty() {
        return input("test set is empty");
    }
    let pred = probe.predict(&model.embed(&test.points)?);
    let mse = (pred - test.target_matrix()).norm_squared() / test.len() as f64;
    match target_norm {
        Some(t) if t > 0.0 => Ok(mse / t),
        Some(t) => input(format!("target norm must be positive, got {t}")),
        None => Ok(mse),
    }
}

/// Index of the largest coordinate; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub fn classify(probe: &RidgeProbe, model: &dyn Representation, x: &[f64]) -> Result<usize> {
    let pred = probe.predict(&model.embed(std::slice::from_ref(&x.to_vec()))?);
    let row: Vec<f64> = pred.row(0).iter().copied().collect();
    Ok(argmax(&row))
}

/// `tr(Σ̂(Σ̂+γI)⁻¹)` over the embedded points.
pub fn effective_dimension(model: &dyn Representation, points: &[Vec<f64>], gamma: f64) -> Result<f64> {
    if points.is_empty() {
        return input("effective dimension needs points");
    }
    let psi = model.embed(points)?;
    let sigma = psi.transpose() * &psi / points.len() as f64;
    effective_dimension_cov(&sigma, gamma)
}

/// `Σ_i σ_i/(σ_i+γ)` over eigenvalues `σ_i`; zero eigenvalues contribute 0.
pub fn effective_dimension_cov(sigma: &DMatrix<f64>, gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        return input(format!("gamma must be non-negative, got {gamma}"));
    }
    let e = nalgebra::SymmetricEigen::new(linalg::symmetrize(sigma));
    let top = e.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(*v));
    Ok(e.eigenvalues
        .iter()
        .map(|&s| {
            if s <= 1e-12 * top || s <= 0.0 {
                0.0
            } else {
                s / (s + gamma)
            }
        })
        .sum())
}

/// Risk `E‖Wᵀψ − q‖²` from population moments of `ψ`: `P = E ψψᵀ`,
/// `Q = E ψqᵀ`, `e2 = E‖q‖²`.
pub fn risk_from_moments(w: &DMatrix<f64>, p: &DMatrix<f64>, q: &DMatrix<f64>, e2: f64) -> f64 {
    (w.transpose() * p * w).trace() - 2.0 * (w.transpose() * q).trace() + e2
}

/// Column vector helper for single-output problems.
pub fn column(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(values.len(), 1, values)
}
