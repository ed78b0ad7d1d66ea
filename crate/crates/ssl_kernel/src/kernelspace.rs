//! Kernels, Gram matrices, Nyström feature maps and dot-product functions `h`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::linalg;
use crate::registry::Registry;

/// A symmetric positive semi-definite kernel on real vectors.
pub trait Kernel: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;
    /// Evaluates on equal-length slices; callers check dimensions.
    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64;
}

/// Scalar function `h` of an inner product.
pub trait ScalarFunction: Send + Sync + fmt::Debug {
    fn name(&self) -> String;
    fn eval(&self, t: f64) -> f64;
}

/// Pointwise activation with its almost-everywhere derivative.
pub trait Activation: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;
    fn value(&self, z: f64) -> f64;
    fn derivative(&self, z: f64) -> f64;
}

/// Serializable kernel description, resolved through [`kernel_registry`].
///
/// `dot_product` evaluates `h(xᵀy / dim)` when `normalize` is true (the
/// default) and `h(xᵀy)` otherwise. `h` names an entry of [`h_registry`];
/// alternatively `activation` + `q` builds an `h` by Monte Carlo tabulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalize: Option<bool>,
}

impl KernelSpec {
    pub fn gaussian(scale: f64) -> Self {
        Self::bare("gaussian").with_scale(scale)
    }
    pub fn exponential(scale: f64) -> Self {
        Self::bare("exponential").with_scale(scale)
    }
    pub fn sphere_arccos() -> Self {
        Self::bare("sphere_arccos")
    }
    pub fn dot_product(h: &str, normalize: bool) -> Self {
        let mut s = Self::bare("dot_product");
        s.h = Some(h.to_string());
        s.normalize = Some(normalize);
        s
    }
    pub fn cnn(h: &str, q: usize) -> Self {
        let mut s = Self::bare("cnn");
        s.h = Some(h.to_string());
        s.q = Some(q);
        s
    }
    /// Plain inner product `xᵀy`.
    pub fn linear() -> Self {
        Self::dot_product("linear", false)
    }
    fn bare(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            scale: None,
            h: None,
            activation: None,
            q: None,
            normalize: None,
        }
    }
    fn with_scale(mut self, s: f64) -> Self {
        self.scale = Some(s);
        self
    }

    pub fn build(&self) -> Result<Arc<dyn Kernel>> {
        kernel_registry().build(&self.kind, self).map(Arc::from)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Gaussian {
    pub scale: f64,
}

impl Kernel for Gaussian {
    fn name(&self) -> &'static str {
        "gaussian"
    }
    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        (-d2 / (2.0 * self.scale * self.scale)).exp()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Exponential {
    pub scale: f64,
}

impl Kernel for Exponential {
    fn name(&self) -> &'static str {
        "exponential"
    }
    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        (-d2.sqrt() / self.scale).exp()
    }
}

/// `(1 + u)(1 − arccos(u)/π)` with `u = xᵀy` clamped to `[−1, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct SphereArcCos;

pub fn sphere_arccos_profile(u: f64) -> f64 {
    let u = u.clamp(-1.0, 1.0);
    (1.0 + u) * (1.0 - u.acos() / std::f64::consts::PI)
}

impl Kernel for SphereArcCos {
    fn name(&self) -> &'static str {
        "sphere_arccos"
    }
    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        sphere_arccos_profile(dot(x, y))
    }
}

#[derive(Debug, Clone)]
pub struct DotProduct {
    pub h: Arc<dyn ScalarFunction>,
    pub normalize: bool,
}

impl Kernel for DotProduct {
    fn name(&self) -> &'static str {
        "dot_product"
    }
    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let t = dot(x, y);
        if self.normalize && !x.is_empty() {
            self.h.eval(t / x.len() as f64)
        } else {
            self.h.eval(t)
        }
    }
}

/// `(1/d) Σ_k h(⟨x_(k), y_(k)⟩ / q)` over the `d` cyclic patches of width `q`.
#[derive(Debug, Clone)]
pub struct Cnn {
    pub h: Arc<dyn ScalarFunction>,
    pub q: usize,
}

impl Kernel for Cnn {
    fn name(&self) -> &'static str {
        "cnn"
    }
    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let d = x.len();
        if d == 0 {
            return 0.0;
        }
        let q = self.q.min(d);
        let acc: f64 = (0..d)
            .map(|k| {
                let t: f64 = (0..q).map(|o| x[(k + o) % d] * y[(k + o) % d]).sum();
                self.h.eval(t / q as f64)
            })
            .sum();
        acc / d as f64
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn positive_scale(spec: &KernelSpec) -> Result<f64> {
    match spec.scale {
        Some(s) if s > 0.0 && s.is_finite() => Ok(s),
        Some(s) => input(format!("kernel scale must be positive, got {s}")),
        None => input(format!("kernel `{}` needs a scale", spec.kind)),
    }
}

fn build_gaussian(spec: &KernelSpec) -> Result<Box<dyn Kernel>> {
    Ok(Box::new(Gaussian {
        scale: positive_scale(spec)?,
    }))
}

fn build_exponential(spec: &KernelSpec) -> Result<Box<dyn Kernel>> {
    Ok(Box::new(Exponential {
        scale: positive_scale(spec)?,
    }))
}

fn build_arccos(_: &KernelSpec) -> Result<Box<dyn Kernel>> {
    Ok(Box::new(SphereArcCos))
}

fn resolve_h(spec: &KernelSpec) -> Result<Arc<dyn ScalarFunction>> {
    Ok(match (&spec.h, &spec.activation) {
        (Some(name), _) => Arc::from(h_registry().build(name, &())?),
        (None, Some(act)) => {
            let act: Arc<dyn Activation> = Arc::from(activation_registry().build(act, &())?);
            let q = spec.q.unwrap_or(1);
            Arc::new(TabulatedH::estimate(act, q, 401, 200_000, 0)?)
        }
        (None, None) => return input(format!("`{}` kernel needs `h` or `activation`", spec.kind)),
    })
}

fn build_dot(spec: &KernelSpec) -> Result<Box<dyn Kernel>> {
    Ok(Box::new(DotProduct {
        h: resolve_h(spec)?,
        normalize: spec.normalize.unwrap_or(true),
    }))
}

fn build_cnn(spec: &KernelSpec) -> Result<Box<dyn Kernel>> {
    let q = match spec.q {
        Some(q) if q > 0 => q,
        _ => return input("cnn kernel needs a positive patch width q"),
    };
    Ok(Box::new(Cnn { h: resolve_h(spec)?, q }))
}

pub fn kernel_registry() -> Registry<KernelSpec, dyn Kernel> {
    let mut r = Registry::new("kernel");
    r.register("gaussian", build_gaussian)
        .register("exponential", build_exponential)
        .register("sphere_arccos", build_arccos)
        .register("dot_product", build_dot)
        .register("cnn", build_cnn);
    r
}

#[derive(Debug, Clone, Copy)]
pub struct ConstOne;
impl ScalarFunction for ConstOne {
    fn name(&self) -> String {
        "one".into()
    }
    fn eval(&self, _: f64) -> f64 {
        1.0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Identity;
impl ScalarFunction for Identity {
    fn name(&self) -> String {
        "linear".into()
    }
    fn eval(&self, t: f64) -> f64 {
        t
    }
}

/// Closed form of `h` for ReLU with standard Gaussian weights.
#[derive(Debug, Clone, Copy)]
pub struct ReluNtk;

pub fn relu_ntk(t: f64) -> f64 {
    let t = t.clamp(-1.0, 1.0);
    let pi = std::f64::consts::PI;
    let theta = t.acos();
    ((1.0 - t * t).sqrt() + (pi - theta) * t) / (2.0 * pi) + t * (pi - theta) / (2.0 * pi)
}

impl ScalarFunction for ReluNtk {
    fn name(&self) -> String {
        "relu_ntk".into()
    }
    fn eval(&self, t: f64) -> f64 {
        relu_ntk(t)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ArcCosProfile;
impl ScalarFunction for ArcCosProfile {
    fn name(&self) -> String {
        "arccos_sphere".into()
    }
    fn eval(&self, t: f64) -> f64 {
        sphere_arccos_profile(t)
    }
}

pub fn h_registry() -> Registry<(), dyn ScalarFunction> {
    let mut r: Registry<(), dyn ScalarFunction> = Registry::new("scalar function");
    r.register("one", |_| Ok(Box::new(ConstOne)))
        .register("linear", |_| Ok(Box::new(Identity)))
        .register("relu_ntk", |_| Ok(Box::new(ReluNtk)))
        .register("arccos_sphere", |_| Ok(Box::new(ArcCosProfile)));
    r
}

#[derive(Debug, Clone, Copy)]
pub struct IdentityAct;
impl Activation for IdentityAct {
    fn name(&self) -> &'static str {
        "identity"
    }
    fn value(&self, z: f64) -> f64 {
        z
    }
    fn derivative(&self, _: f64) -> f64 {
        1.0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Relu;
impl Activation for Relu {
    fn name(&self) -> &'static str {
        "relu"
    }
    fn value(&self, z: f64) -> f64 {
        z.max(0.0)
    }
    fn derivative(&self, z: f64) -> f64 {
        if z > 0.0 {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Tanh;
impl Activation for Tanh {
    fn name(&self) -> &'static str {
        "tanh"
    }
    fn value(&self, z: f64) -> f64 {
        z.tanh()
    }
    fn derivative(&self, z: f64) -> f64 {
        let c = z.cosh();
        1.0 / (c * c)
    }
}

pub fn activation_registry() -> Registry<(), dyn Activation> {
    let mut r: Registry<(), dyn Activation> = Registry::new("activation");
    r.register("identity", |_| Ok(Box::new(IdentityAct)))
        .register("relu", |_| Ok(Box::new(Relu)))
        .register("tanh", |_| Ok(Box::new(Tanh)));
    r
}

/// Evaluates the kernel after checking dimensions.
pub fn eval_kernel(kernel: &dyn Kernel, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return input(format!("dimension mismatch: {} vs {}", x.len(), y.len()));
    }
    Ok(kernel.eval_unchecked(x, y))
}

#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub entries: DMatrix<f64>,
    pub jitter: f64,
    pub point_count: usize,
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let dim = match points.first() {
        Some(p) => p.len(),
        None => return input("empty point list"),
    };
    if let Some(bad) = points.iter().position(|p| p.len() != dim) {
        return input(format!("point {bad} has dimension {} instead of {dim}", points[bad].len()));
    }
    Ok(dim)
}

/// Kernel cross matrix `K[i][j] = k(a_i, b_j)`; rows computed in parallel.
pub fn cross_gram(kernel: &dyn Kernel, a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if a.is_empty() || b.is_empty() {
        return Ok(DMatrix::zeros(a.len(), b.len()));
    }
    let da = check_points(a)?;
    let db = check_points(b)?;
    if da != db {
        return input(format!("dimension mismatch: {da} vs {db}"));
    }
    let rows: Vec<Vec<f64>> = a
        .par_iter()
        .map(|x| b.iter().map(|y| kernel.eval_unchecked(x, y)).collect())
        .collect();
    Ok(DMatrix::from_fn(a.len(), b.len(), |i, j| rows[i][j]))
}

/// Symmetric Gram matrix plus `jitter` on the diagonal.
pub fn gram(kernel: &dyn Kernel, points: &[Vec<f64>], jitter: f64) -> Result<GramMatrix> {
    check_points(points)?;
    if !(jitter >= 0.0) {
        return input(format!("jitter must be non-negative, got {jitter}"));
    }
    let n = points.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| kernel.eval_unchecked(&points[i], &points[j])).collect())
        .collect();
    let mut entries = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (off, v) in row.iter().enumerate() {
            let j = i + off;
            entries[(i, j)] = *v;
            entries[(j, i)] = *v;
        }
        entries[(i, i)] += jitter;
    }
    Ok(GramMatrix {
        entries,
        jitter,
        point_count: n,
    })
}

/// `1e-8 ×` mean diagonal, the default jitter floor.
pub fn relative_jitter(kernel: &dyn Kernel, points: &[Vec<f64>]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let mean = points.iter().map(|p| kernel.eval_unchecked(p, p)).sum::<f64>() / points.len() as f64;
    1e-8 * mean
}

/// Monte-Carlo estimate of the activation-induced dot-product function.
///
/// For unit-variance projections `a = ⟨u,w⟩/√q`, `b = ⟨v,w⟩/√q` with
/// `w ~ N(0, I)` the pair `(a, b)` is a standard bivariate normal with
/// correlation `t`, so it is sampled directly.
pub fn estimate_h(act: &dyn Activation, q: usize, t: f64, mc_samples: usize, seed: u64) -> Result<f64> {
    if mc_samples == 0 {
        return input("mc_samples must be positive");
    }
    if q == 0 {
        return input("patch size q must be positive");
    }
    if !(-1.0..=1.0).contains(&t) {
        return input(format!("t = {t} outside [-1, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = (1.0 - t * t).max(0.0).sqrt();
    let mut acc = 0.0;
    for _ in 0..mc_samples {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        let a = z1;
        let b = t * z1 + s * z2;
        acc += act.value(a) * act.value(b) + act.derivative(a) * act.derivative(b) * t;
    }
    Ok(acc / mc_samples as f64)
}

/// `h` tabulated on a uniform grid over `[−1, 1]` with linear interpolation.
#[derive(Debug, Clone)]
pub struct TabulatedH {
    pub label: String,
    pub values: Vec<f64>,
}

impl TabulatedH {
    pub fn estimate(act: Arc<dyn Activation>, q: usize, nodes: usize, mc_samples: usize, seed: u64) -> Result<Self> {
        if nodes < 2 {
            return input("need at least two tabulation nodes");
        }
        let values = (0..nodes)
            .into_par_iter()
            .map(|i| {
                let t = -1.0 + 2.0 * i as f64 / (nodes - 1) as f64;
                estimate_h(act.as_ref(), q, t, mc_samples, seed.wrapping_add(i as u64))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self {
            label: format!("mc:{}", act.name()),
            values,
        })
    }
}

impl ScalarFunction for TabulatedH {
    fn name(&self) -> String {
        self.label.clone()
    }
    fn eval(&self, t: f64) -> f64 {
        let n = self.values.len();
        let x = ((t.clamp(-1.0, 1.0) + 1.0) * 0.5) * (n - 1) as f64;
        let i = (x.floor() as usize).min(n - 2);
        let f = x - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }
}

/// Explicit features `φ(x) = W · (k(x, l_j))_j` with `W = (G + εI)^{−1/2}`.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    pub kernel: Arc<dyn Kernel>,
    pub landmarks: Vec<Vec<f64>>,
    pub whitening: DMatrix<f64>,
}

impl FeatureMap {
    pub fn dim(&self) -> usize {
        self.landmarks.len()
    }

    pub fn feature(&self, x: &[f64]) -> Result<DVector<f64>> {
        let col = DVector::from_iterator(
            self.landmarks.len(),
            self.landmarks
                .iter()
                .map(|l| eval_kernel(self.kernel.as_ref(), x, l))
                .collect::<Result<Vec<f64>>>()?,
        );
        Ok(&self.whitening * col)
    }

    /// Row `i` holds `φ(points[i])ᵀ`.
    pub fn features(&self, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let k = cross_gram(self.kernel.as_ref(), points, &self.landmarks)?;
        Ok(k * &self.whitening)
    }
}

pub fn nystrom_features(kernel: Arc<dyn Kernel>, landmarks: &[Vec<f64>], jitter: f64) -> Result<FeatureMap> {
    let g = gram(kernel.as_ref(), landmarks, jitter)?;
    let eig = linalg::eigh_desc(&g.entries, 0.0)?;
    let top = eig.values[0];
    let bottom = *eig.values.last().unwrap();
    if bottom <= 1e-14 * top.max(f64::MIN_POSITIVE) {
        return Err(Error::Numeric(format!(
            "landmark Gram is singular after jitter {jitter:e}: eigenvalues in [{bottom:e}, {top:e}], condition number {:e}",
            if bottom > 0.0 { top / bottom } else { f64::INFINITY }
        )));
    }
    let u = &eig.vectors;
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        eig.values.len(),
        eig.values.iter().map(|v| 1.0 / v.sqrt()),
    ));
    let whitening = linalg::symmetrize(&(u * d * u.transpose()));
    Ok(FeatureMap {
        kernel,
        landmarks: landmarks.to_vec(),
        whitening,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arccos_endpoints() {
        let k = SphereArcCos;
        assert!((k.eval_unchecked(&[1.0, 0.0], &[1.0, 0.0]) - 2.0).abs() < 1e-15);
        assert!(k.eval_unchecked(&[1.0, 0.0], &[-1.0, 0.0]).abs() < 1e-15);
    }

    #[test]
    fn relu_ntk_at_one() {
        assert!((relu_ntk(1.0) - 1.0).abs() < 1e-15);
        assert!((relu_ntk(0.0) - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
    }

    #[test]
    fn spec_round_trip() {
        let s = KernelSpec::dot_product("relu_ntk", true);
        let j = serde_json::to_string(&s).unwrap();
        let back: KernelSpec = serde_json::from_str(&j).unwrap();
        assert_eq!(s, back);
        assert!(KernelSpec::gaussian(-1.0).build().is_err());
        assert!(KernelSpec::bare("nope").build().is_err());
    }

    #[test]
    fn tabulated_interpolates() {
        let t = TabulatedH {
            label: "x".into(),
            values: vec![-1.0, 0.0, 1.0],
        };
        assert!((t.eval(0.5) - 0.5).abs() < 1e-15);
        assert!((t.eval(1.0) - 1.0).abs() < 1e-15);
        assert!((t.eval(-1.0) + 1.0).abs() < 1e-15);
    }
}
