//! Closed-form pretraining: empirical operators `T̂`, `K̂`, the regularized
//! operator `T_λ`, and the out-of-sample representation it induces.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::kernelspace::{cross_gram, gram, Kernel, KernelSpec};
use crate::linalg::{self, EigenPairs};

/// `n` inputs, each with exactly `m` views. View `(i, j)` has flat index `i*m + j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedDataset {
    pub inputs: Vec<Vec<f64>>,
    pub views: Vec<Vec<Vec<f64>>>,
}

impl AugmentedDataset {
    pub fn new(inputs: Vec<Vec<f64>>, views: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if inputs.is_empty() {
            return input("dataset has no inputs");
        }
        if inputs.len() != views.len() {
            return input(format!("{} inputs but {} view rows", inputs.len(), views.len()));
        }
        let m = views[0].len();
        if m == 0 {
            return input("each input needs at least one view");
        }
        let dim = inputs[0].len();
        for (i, row) in views.iter().enumerate() {
            if row.len() != m {
                return input(format!("input {i} has {} views, expected {m}", row.len()));
            }
            if inputs[i].len() != dim || row.iter().any(|v| v.len() != dim) {
                return input(format!("input {i} has a point of the wrong dimension"));
            }
        }
        Ok(Self { inputs, views })
    }

    pub fn n(&self) -> usize {
        self.inputs.len()
    }

    pub fn m(&self) -> usize {
        self.views[0].len()
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }

    /// All views in flat order.
    pub fn flat_views(&self) -> Vec<Vec<f64>> {
        self.views.iter().flatten().cloned().collect()
    }

    pub fn parents(&self) -> Vec<usize> {
        let m = self.m();
        (0..self.n() * m).map(|a| a / m).collect()
    }

    /// Keeps the first `n` inputs.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n() {
            return input(format!("cannot keep {n} of {} inputs", self.n()));
        }
        Ok(Self {
            inputs: self.inputs[..n].to_vec(),
            views: self.views[..n].to_vec(),
        })
    }
}

/// Block-diagonal averaging operator: `n` blocks of `(1/m)·ones(m, m)`.
pub fn build_t_hat(n: usize, m: usize) -> DMatrix<f64> {
    let nm = n * m;
    let w = 1.0 / m.max(1) as f64;
    DMatrix::from_fn(nm, nm, |a, b| if a / m.max(1) == b / m.max(1) { w } else { 0.0 })
}

pub const DEFAULT_PINV_TOL: f64 = 1e-10;
pub const DEFAULT_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct OperatorBundle {
    pub t_hat: DMatrix<f64>,
    pub k_hat: DMatrix<f64>,
    pub beta: f64,
    pub lambda: f64,
    /// Relative to the largest eigenvalue of `k_hat`.
    pub pinv_tol: f64,
}

fn check_beta_lambda(beta: f64, lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&beta) {
        return input(format!("beta must lie in [0, 1], got {beta}"));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return input(format!("lambda must be a finite non-negative number, got {lambda}"));
    }
    Ok(())
}

impl OperatorBundle {
    pub fn from_dataset(data: &AugmentedDataset, kernel: &dyn Kernel, beta: f64, lambda: f64) -> Result<Self> {
        check_beta_lambda(beta, lambda)?;
        let g = gram(kernel, &data.flat_views(), 0.0)?;
        let nm = (data.n() * data.m()) as f64;
        Ok(Self {
            t_hat: build_t_hat(data.n(), data.m()),
            k_hat: g.entries / nm,
            beta,
            lambda,
            pinv_tol: DEFAULT_PINV_TOL,
        })
    }

    pub fn size(&self) -> usize {
        self.t_hat.nrows()
    }

    pub fn k_pinv(&self) -> Result<DMatrix<f64>> {
        linalg::pinv_sym(&self.k_hat, self.pinv_tol)
    }
}

/// `(1−β)I + βT̂ − λ·pinv(K̂)`, symmetrized.
pub fn build_t_lambda(bundle: &OperatorBundle) -> Result<DMatrix<f64>> {
    check_beta_lambda(bundle.beta, bundle.lambda)?;
    let n = bundle.size();
    let mut t = DMatrix::identity(n, n) * (1.0 - bundle.beta) + &bundle.t_hat * bundle.beta;
    if bundle.lambda > 0.0 {
        t -= bundle.k_pinv()? * bundle.lambda;
    }
    Ok(linalg::symmetrize(&t))
}

/// How component scales follow from the eigenvalues of `T_λ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// `s_i = √max(λ̂_i, 0)`
    #[default]
    Sqrt,
    /// `s_i = max(λ̂_i, 0)`
    Linear,
}

impl Scaling {
    pub fn apply(self, eig: f64) -> f64 {
        match self {
            Scaling::Sqrt => eig.max(0.0).sqrt(),
            Scaling::Linear => eig.max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub scaling: Scaling,
    pub pinv_tol: f64,
    pub tie_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            scaling: Scaling::Sqrt,
            pinv_tol: DEFAULT_PINV_TOL,
            tie_tol: DEFAULT_TIE_TOL,
        }
    }
}

/// Pretrained embedding `ψ_i(x) = s_i Σ_a k(x, ξ_a)/(nm) · α_ia`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepresentationModel {
    pub kernel: KernelSpec,
    pub anchors: Vec<Vec<f64>>,
    /// One coefficient vector per component, each of length `nm`.
    pub alpha: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub scales: Vec<f64>,
    pub scaling: Scaling,
    pub beta: f64,
    pub lambda: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(skip)]
    kernel_cache: OnceLock<Arc<dyn Kernel>>,
}

impl RepresentationModel {
    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    fn kernel(&self) -> Result<&Arc<dyn Kernel>> {
        if let Some(k) = self.kernel_cache.get() {
            return Ok(k);
        }
        let built = self.kernel.build()?;
        Ok(self.kernel_cache.get_or_init(|| built))
    }

    fn alpha_matrix(&self) -> DMatrix<f64> {
        let nm = self.anchors.len();
        DMatrix::from_fn(nm, self.k(), |a, i| self.alpha[i][a])
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<DVector<f64>> {
        let m = self.evaluate_many(std::slice::from_ref(&x.to_vec()))?;
        Ok(m.row(0).transpose())
    }

    /// Row `r` holds `ψ(points[r])ᵀ`.
    pub fn evaluate_many(&self, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let nm = self.anchors.len() as f64;
        if let (Some(p), Some(a)) = (points.first(), self.anchors.first()) {
            if p.len() != a.len() {
                return input(format!("point dimension {} but anchors have {}", p.len(), a.len()));
            }
        }
        let kx = cross_gram(self.kernel()?.as_ref(), points, &self.anchors)? / nm;
        let mut out = kx * self.alpha_matrix();
        for (i, s) in self.scales.iter().enumerate() {
            out.column_mut(i).scale_mut(*s);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Input(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Input(e.to_string()))
    }
}

pub fn fit_representation(
    data: &AugmentedDataset,
    spec: &KernelSpec,
    beta: f64,
    lambda: f64,
    k: usize,
) -> Result<RepresentationModel> {
    fit_representation_with(data, spec, beta, lambda, k, FitOptions::default())
}

/// Top-`k` eigenpairs of `T_λ` restricted to the range of `K̂`.
///
/// Functions outside that range have infinite norm and cannot be represented,
/// so the eigenproblem is solved in the eigenbasis `U_r` of `K̂`:
/// `U_rᵀ((1−β)I + βT̂)U_r − λD_r⁻¹`.
pub fn fit_representation_with(
    data: &AugmentedDataset,
    spec: &KernelSpec,
    beta: f64,
    lambda: f64,
    k: usize,
    opts: FitOptions,
) -> Result<RepresentationModel> {
    let kernel = spec.build()?;
    let mut bundle = OperatorBundle::from_dataset(data, kernel.as_ref(), beta, lambda)?;
    bundle.pinv_tol = opts.pinv_tol;
    fit_from_bundle(data, spec, kernel, &bundle, k, opts)
}

/// Fits from precomputed operators, e.g. to sweep `λ` over one Gram matrix.
/// `bundle` must come from `data` and the kernel built from `spec`.
pub fn fit_from_bundle(
    data: &AugmentedDataset,
    spec: &KernelSpec,
    kernel: Arc<dyn Kernel>,
    bundle: &OperatorBundle,
    k: usize,
    opts: FitOptions,
) -> Result<RepresentationModel> {
    check_beta_lambda(bundle.beta, bundle.lambda)?;
    let (beta, lambda) = (bundle.beta, bundle.lambda);
    let nm = bundle.size();
    if nm != data.n() * data.m() {
        return input(format!("operators are {nm}x{nm} but the dataset has {} views", data.n() * data.m()));
    }
    if k == 0 || k > nm {
        return input(format!("k = {k} must lie in [1, {nm}]"));
    }
    let (pairs, range) = spectral_components(bundle, opts.tie_tol)?;
    let mut warnings = Vec::new();
    let avail = pairs.values.len();
    if avail < k {
        let msg = format!("only {avail} eigenpairs in the kernel range; padding {} zero components", k - avail);
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let root = (nm as f64).sqrt();
    // α = pinv(K̂)·v = U_r D_r⁻¹ U_rᵀ v
    let mut alpha = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    for i in 0..k {
        if i < avail {
            let v = pairs.vectors.column(i) * root;
            let coords = range.basis.transpose() * &v;
            let scaled = DVector::from_iterator(
                coords.len(),
                coords.iter().zip(&range.values).map(|(c, d)| c / d),
            );
            alpha.push((&range.basis * scaled).iter().copied().collect());
            eigenvalues.push(pairs.values[i]);
        } else {
            alpha.push(vec![0.0; nm]);
            eigenvalues.push(0.0);
        }
    }
    let scales = eigenvalues.iter().map(|&e| opts.scaling.apply(e)).collect();
    let model = RepresentationModel {
        kernel: spec.clone(),
        anchors: data.flat_views(),
        alpha,
        eigenvalues,
        scales,
        scaling: opts.scaling,
        beta,
        lambda,
        warnings,
        kernel_cache: OnceLock::new(),
    };
    let _ = model.kernel_cache.set(kernel);
    Ok(model)
}

/// Canonical eigenpairs of the range-restricted `T_λ`, with unit-norm vectors
/// in anchor coordinates.
pub fn spectral_components(bundle: &OperatorBundle, tie_tol: f64) -> Result<(EigenPairs, linalg::Range)> {
    let range = linalg::positive_range(&bundle.k_hat, bundle.pinv_tol)?;
    let n = bundle.size();
    let base = DMatrix::identity(n, n) * (1.0 - bundle.beta) + &bundle.t_hat * bundle.beta;
    let mut a = range.basis.transpose() * base * &range.basis;
    for (i, d) in range.values.iter().enumerate() {
        a[(i, i)] -= bundle.lambda / d;
    }
    let inner = linalg::eigh_desc(&a, 0.0)?;
    let mut pairs = EigenPairs {
        values: inner.values,
        vectors: &range.basis * inner.vectors,
    };
    linalg::canonicalize(&mut pairs, tie_tol);
    Ok((pairs, range))
}

/// Estimator for the same-parent term of the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairEstimator {
    /// Ordered pairs `j ≠ j′`.
    Unbiased,
    /// All ordered pairs including `j = j′`.
    PlugIn,
}

pub fn empirical_loss(psi: &DMatrix<f64>, parents: &[usize], beta: f64) -> Result<f64> {
    empirical_loss_with(psi, parents, beta, PairEstimator::Unbiased)
}

/// `2(β−1)·mean‖ψ‖² − 2β·mean_same ψᵀψ′ + mean_all (ψᵀψ′)² + k`.
pub fn empirical_loss_with(psi: &DMatrix<f64>, parents: &[usize], beta: f64, est: PairEstimator) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return input(format!("beta must lie in [0, 1], got {beta}"));
    }
    let (nm, k) = psi.shape();
    if parents.len() != nm || nm == 0 {
        return input(format!("{} parent labels for {nm} rows", parents.len()));
    }
    let groups = group_rows(parents)?;
    let m = groups[0].len();
    let nmf = nm as f64;
    let norms: f64 = psi.iter().map(|v| v * v).sum::<f64>() / nmf;
    let mut same = 0.0;
    if beta > 0.0 {
        if est == PairEstimator::Unbiased && m < 2 {
            return input("unbiased invariance term needs at least two views per input");
        }
        let mut acc = 0.0;
        for g in &groups {
            let mut sum = DVector::zeros(k);
            let mut sq = 0.0;
            for &r in g {
                let row = psi.row(r).transpose();
                sq += row.norm_squared();
                sum += row;
            }
            acc += match est {
                PairEstimator::Unbiased => sum.norm_squared() - sq,
                PairEstimator::PlugIn => sum.norm_squared(),
            };
        }
        let pairs = match est {
            PairEstimator::Unbiased => (groups.len() * m * (m - 1)) as f64,
            PairEstimator::PlugIn => (groups.len() * m * m) as f64,
        };
        same = acc / pairs;
    }
    let c = psi.transpose() * psi;
    let quad = c.norm_squared() / (nmf * nmf);
    Ok(2.0 * (beta - 1.0) * norms - 2.0 * beta * same + quad + k as f64)
}

fn group_rows(parents: &[usize]) -> Result<Vec<Vec<usize>>> {
    let n = parents.iter().max().map_or(0, |p| p + 1);
    let mut groups = vec![Vec::new(); n];
    for (r, &p) in parents.iter().enumerate() {
        groups[p].push(r);
    }
    let m = groups[0].len();
    if groups.iter().any(|g| g.len() != m) || m == 0 {
        return input("parent labels are not rectangular");
    }
    Ok(groups)
}

/// Plug-in loss plus `2λ Σ_i ψ_iᵀ K̂⁺ ψ_i / nm`, the objective whose exact
/// minimizer over the span of the anchors is the fitted representation.
pub fn regularized_loss(bundle: &OperatorBundle, psi: &DMatrix<f64>) -> Result<f64> {
    let nm = bundle.size();
    if psi.nrows() != nm {
        return input(format!("psi has {} rows, operators are {nm}x{nm}", psi.nrows()));
    }
    let m = (0..nm).take_while(|&b| bundle.t_hat[(0, b)] > 0.0).count().max(1);
    let parents: Vec<usize> = (0..nm).map(|a| a / m).collect();
    let base = empirical_loss_with(psi, &parents, bundle.beta, PairEstimator::PlugIn)?;
    if bundle.lambda == 0.0 {
        return Ok(base);
    }
    let p = bundle.k_pinv()?;
    let norm = (psi.transpose() * p * psi).trace() / nm as f64;
    Ok(base + 2.0 * bundle.lambda * norm)
}

/// Values of every component at the anchors (`nm × k`).
pub fn anchor_values(model: &RepresentationModel) -> Result<DMatrix<f64>> {
    model.evaluate_many(&model.anchors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_hat_small_cases() {
        assert_eq!(build_t_hat(3, 1), DMatrix::identity(3, 3));
        assert_eq!(build_t_hat(1, 2), DMatrix::from_element(2, 2, 0.5));
    }

    #[test]
    fn loss_trivial_values() {
        let parents = vec![0, 0, 1, 1];
        let zero = DMatrix::zeros(4, 3);
        assert_eq!(empirical_loss(&zero, &parents, 0.5).unwrap(), 3.0);
        let ones = DMatrix::from_element(4, 1, 1.0);
        assert!(empirical_loss(&ones, &parents, 1.0).unwrap().abs() < 1e-15);
        assert!(empirical_loss(&ones, &parents, 1.5).is_err());
        assert!(empirical_loss(&DMatrix::zeros(2, 1), &[0, 1], 0.5).is_err());
        assert!(empirical_loss(&DMatrix::zeros(2, 1), &[0, 1], 0.0).is_ok());
    }
}
