//! Projected stochastic gradient descent over PSD matrices `Λ = ΘᵀΘ` acting
//! on an explicit feature space.
//!
//! The objective, for feature vectors `φ` of all views, is
//! `L(Λ) = 2(β−1)⟨Λ,Σ̂⟩ − 2β⟨Λ,Ĉ⟩ + tr(ΛΣ̂ΛΣ̂) + λ·tr Λ + k` with
//! `Σ̂ = mean φφᵀ` and `Ĉ = mean_i μ_iμ_iᵀ`, `μ_i` the mean view feature of
//! input `i`. In the anchor parametrization this is the plug-in loss with
//! regularizer `λ Σ‖θ_i‖²`, i.e. the spectral solver with `λ/2`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::kernelspace::FeatureMap;
use crate::linalg;
use crate::registry::Registry;
use crate::spectral_pretrain::AugmentedDataset;

#[derive(Debug, Clone, PartialEq)]
pub struct PsdParam {
    pub lambda_mat: DMatrix<f64>,
    pub hs_norm_cap: f64,
}

impl PsdParam {
    pub fn zeros(dim: usize, hs_norm_cap: f64) -> Self {
        Self {
            lambda_mat: DMatrix::zeros(dim, dim),
            hs_norm_cap,
        }
    }

    /// Cap `k/λ`, infinite when `λ = 0`.
    pub fn for_problem(dim: usize, k: usize, lambda: f64) -> Self {
        let cap = if lambda > 0.0 { k as f64 / lambda } else { f64::INFINITY };
        Self::zeros(dim, cap)
    }

    pub fn dim(&self) -> usize {
        self.lambda_mat.nrows()
    }

    pub fn hs_norm(&self) -> f64 {
        self.lambda_mat.norm()
    }

    pub fn rank(&self, rel_tol: f64) -> usize {
        let e = nalgebra::SymmetricEigen::new(self.lambda_mat.clone());
        let top = e.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(*v));
        if top <= 0.0 {
            return 0;
        }
        e.eigenvalues.iter().filter(|&&v| v > rel_tol * top).count()
    }

    /// Rows of `Θ` with `ΘᵀΘ = Λ`, largest eigenvalue first, at most `k` rows.
    pub fn factor(&self, k: usize) -> Result<DMatrix<f64>> {
        let e = linalg::eigh_desc(&self.lambda_mat, 0.0)?;
        let d = self.dim();
        Ok(DMatrix::from_fn(k, d, |i, j| {
            if i < e.values.len() {
                e.values[i].max(0.0).sqrt() * e.vectors[(j, i)]
            } else {
                0.0
            }
        }))
    }
}

/// A step-size rule `η_t`, `t ≥ 1`.
pub trait StepSchedule: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;
    fn rate(&self, t: usize) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub scale: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct InvSqrt(pub f64);
impl StepSchedule for InvSqrt {
    fn name(&self) -> &'static str {
        "inv_sqrt"
    }
    fn rate(&self, t: usize) -> f64 {
        self.0 / (t.max(1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Constant(pub f64);
impl StepSchedule for Constant {
    fn name(&self) -> &'static str {
        "constant"
    }
    fn rate(&self, _: usize) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct InvT(pub f64);
impl StepSchedule for InvT {
    fn name(&self) -> &'static str {
        "inv_t"
    }
    fn rate(&self, t: usize) -> f64 {
        self.0 / t.max(1) as f64
    }
}

fn checked_scale(s: &ScheduleSpec) -> Result<f64> {
    if s.scale > 0.0 && s.scale.is_finite() {
        Ok(s.scale)
    } else {
        input(format!("step scale must be positive, got {}", s.scale))
    }
}

pub fn schedule_registry() -> Registry<ScheduleSpec, dyn StepSchedule> {
    let mut r: Registry<ScheduleSpec, dyn StepSchedule> = Registry::new("step schedule");
    r.register("inv_sqrt", |s| Ok(Box::new(InvSqrt(checked_scale(s)?))))
        .register("constant", |s| Ok(Box::new(Constant(checked_scale(s)?))))
        .register("inv_t", |s| Ok(Box::new(InvT(checked_scale(s)?))));
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub beta: f64,
    pub lambda: f64,
    pub k: usize,
    #[serde(default = "default_schedule")]
    pub schedule: String,
    /// Step scale `c`; defaults to `1/κ²` with `κ` the largest feature norm.
    #[serde(default)]
    pub step_scale: Option<f64>,
    pub steps: usize,
    pub m: usize,
    pub seed: u64,
    pub averaging_window: usize,
    #[serde(default = "default_trace_every")]
    pub trace_every: usize,
}

fn default_schedule() -> String {
    "inv_sqrt".into()
}

fn default_trace_every() -> usize {
    1000
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return input("steps must be at least 1");
        }
        if self.m < 2 {
            return input("need at least two views per input");
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return input(format!("beta must lie in [0, 1], got {}", self.beta));
        }
        if !(self.lambda >= 0.0) {
            return input(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if self.k == 0 {
            return input("k must be at least 1");
        }
        if self.averaging_window == 0 || self.averaging_window > self.steps {
            return input(format!(
                "averaging window {} must lie in [1, steps = {}]",
                self.averaging_window, self.steps
            ));
        }
        Ok(())
    }
}

/// Features of every view, row `i*m + j`.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    pub phi: DMatrix<f64>,
    pub n: usize,
    pub m: usize,
}

impl FeatureTable {
    pub fn new(data: &AugmentedDataset, features: &FeatureMap) -> Result<Self> {
        Ok(Self {
            phi: features.features(&data.flat_views())?,
            n: data.n(),
            m: data.m(),
        })
    }

    pub fn from_rows(phi: DMatrix<f64>, n: usize, m: usize) -> Result<Self> {
        if n * m != phi.nrows() || n == 0 || m == 0 {
            return input(format!("{} feature rows cannot be split into {n} x {m}", phi.nrows()));
        }
        Ok(Self { phi, n, m })
    }

    pub fn dim(&self) -> usize {
        self.phi.ncols()
    }

    pub fn view(&self, i: usize, j: usize) -> DVector<f64> {
        self.phi.row(i * self.m + j).transpose()
    }

    pub fn max_norm(&self) -> f64 {
        self.phi.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
    }

    pub fn moments(&self) -> FeatureMoments {
        let nm = (self.n * self.m) as f64;
        let sigma = self.phi.transpose() * &self.phi / nm;
        let mut means = DMatrix::zeros(self.n, self.dim());
        for i in 0..self.n {
            let rows = self.phi.rows(i * self.m, self.m);
            for c in 0..self.dim() {
                means[(i, c)] = rows.column(c).sum() / self.m as f64;
            }
        }
        let c = means.transpose() * &means / self.n as f64;
        FeatureMoments {
            sigma: linalg::symmetrize(&sigma),
            c: linalg::symmetrize(&c),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeatureMoments {
    pub sigma: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl FeatureMoments {
    pub fn average(parts: &[FeatureMoments]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Input("no moments to average".into()))?;
        let mut sigma = DMatrix::zeros(first.sigma.nrows(), first.sigma.ncols());
        let mut c = sigma.clone();
        for p in parts {
            sigma += &p.sigma;
            c += &p.c;
        }
        let w = 1.0 / parts.len() as f64;
        Ok(Self { sigma: sigma * w, c: c * w })
    }
}

/// Full-batch objective.
pub fn feature_loss(mom: &FeatureMoments, lambda_mat: &DMatrix<f64>, beta: f64, lambda: f64, k: usize) -> f64 {
    let ls = lambda_mat * &mom.sigma;
    2.0 * (beta - 1.0) * lambda_mat.dot(&mom.sigma) - 2.0 * beta * lambda_mat.dot(&mom.c)
        + (&ls * &ls).trace()
        + lambda * lambda_mat.trace()
        + k as f64
}

/// Full-batch gradient `2(β−1)Σ̂ − 2βĈ + 2Σ̂ΛΣ̂ + λI`.
pub fn full_gradient(mom: &FeatureMoments, lambda_mat: &DMatrix<f64>, beta: f64, lambda: f64) -> DMatrix<f64> {
    let d = mom.sigma.nrows();
    let g = &mom.sigma * (2.0 * (beta - 1.0)) - &mom.c * (2.0 * beta)
        + &mom.sigma * lambda_mat * &mom.sigma * 2.0
        + DMatrix::identity(d, d) * lambda;
    linalg::symmetrize(&g)
}

/// Exact rank-`k` minimizer of [`feature_loss`].
#[derive(Debug, Clone)]
pub struct ClosedForm {
    /// `k × D`, rows ordered by eigenvalue.
    pub theta: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub loss: f64,
}

impl ClosedForm {
    pub fn lambda_mat(&self) -> DMatrix<f64> {
        self.theta.transpose() * &self.theta
    }
}

/// Solves in whitened coordinates on the range of `Σ̂` (eigenvalues above
/// `rel_tol` times the largest).
pub fn closed_form(mom: &FeatureMoments, beta: f64, lambda: f64, k: usize, rel_tol: f64) -> Result<ClosedForm> {
    let range = linalg::positive_range(&mom.sigma, rel_tol)?;
    let r = range.values.len();
    let w = DMatrix::from_fn(mom.sigma.nrows(), r, |a, i| range.basis[(a, i)] / range.values[i].sqrt());
    let mut a = w.transpose() * (&mom.sigma * (1.0 - beta) + &mom.c * beta) * &w;
    a -= w.transpose() * &w * (lambda / 2.0);
    let e = linalg::eigh_desc(&a, 1e-9)?;
    let d = mom.sigma.nrows();
    let mut theta = DMatrix::zeros(k, d);
    let mut eigenvalues = Vec::with_capacity(k);
    let mut loss = k as f64;
    for i in 0..k {
        if i < r {
            let s = e.values[i].max(0.0).sqrt();
            let row = &w * e.vectors.column(i) * s;
            theta.set_row(i, &row.transpose());
            eigenvalues.push(e.values[i]);
            loss -= e.values[i].max(0.0).powi(2);
        } else {
            eigenvalues.push(0.0);
        }
    }
    Ok(ClosedForm {
        theta,
        eigenvalues,
        loss,
    })
}

/// Two distinct inputs and `m` view indices for each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Minibatch {
    pub inputs: [usize; 2],
    pub views: [Vec<usize>; 2],
    /// Dataset size, needed to weight same-input and cross-input pairs.
    pub n: usize,
}

pub fn sample_minibatch(data: &AugmentedDataset, m: usize, rng: &mut impl Rng) -> Result<Minibatch> {
    sample_indices(data.n(), data.m(), m, true, rng)
}

/// Without replacement, `m` may not exceed the available views.
pub fn sample_indices(n: usize, avail: usize, m: usize, replace: bool, rng: &mut impl Rng) -> Result<Minibatch> {
    if n < 2 {
        return input("minibatches need at least two inputs");
    }
    if m == 0 || avail == 0 {
        return input("minibatches need at least one view");
    }
    if !replace && m > avail {
        return input(format!("{m} views requested but only {avail} available"));
    }
    let a = rng.random_range(0..n);
    let mut b = rng.random_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    let pick = |rng: &mut dyn rand::RngCore| -> Vec<usize> {
        if replace {
            (0..m).map(|_| rng.random_range(0..avail)).collect()
        } else {
            rand::seq::index::sample(rng, avail, m).into_vec()
        }
    };
    let va = pick(rng);
    let vb = pick(rng);
    Ok(Minibatch {
        inputs: [a, b],
        views: [va, vb],
        n,
    })
}

fn add_outer(acc: &mut DMatrix<f64>, u: &DVector<f64>, v: &DVector<f64>, w: f64) {
    acc.ger(w, u, v, 1.0);
}

/// Unbiased stochastic gradient of the plug-in objective.
///
/// Variance and invariance terms use the first input's views; the quadratic
/// term mixes same-input pairs `j ≠ k` (weight `1/n`) with all cross-input
/// pairs (weight `(n−1)/n`).
pub fn stochastic_gradient(
    param: &PsdParam,
    table: &FeatureTable,
    batch: &Minibatch,
    beta: f64,
    lambda: f64,
) -> DMatrix<f64> {
    let d = table.dim();
    let m = batch.views[0].len();
    let phis: [Vec<DVector<f64>>; 2] = [0, 1].map(|s| {
        batch.views[s]
            .iter()
            .map(|&j| table.view(batch.inputs[s], j))
            .collect()
    });
    let mut g = DMatrix::zeros(d, d);
    let p1 = &phis[0];
    if beta != 1.0 {
        for f in p1 {
            add_outer(&mut g, f, f, 2.0 * (beta - 1.0) / m as f64);
        }
    }
    if m >= 2 {
        let w_inv = -2.0 * beta / (m * (m - 1)) as f64;
        let n = batch.n as f64;
        let w_same = 2.0 / (n * (m * (m - 1)) as f64);
        let lam = &param.lambda_mat;
        let proj: Vec<DVector<f64>> = p1.iter().map(|f| lam * f).collect();
        for j in 0..m {
            for k in 0..m {
                if j == k {
                    continue;
                }
                if beta != 0.0 {
                    add_outer(&mut g, &p1[j], &p1[k], w_inv);
                }
                let q = proj[j].dot(&p1[k]);
                if q != 0.0 {
                    add_outer(&mut g, &p1[j], &p1[k], w_same * q);
                }
            }
        }
        let w_cross = 2.0 * (n - 1.0) / (n * (m * m) as f64);
        for (fj, pj) in p1.iter().zip(&proj) {
            for fk in &phis[1] {
                let q = pj.dot(fk);
                if q != 0.0 {
                    add_outer(&mut g, fj, fk, 0.5 * w_cross * q);
                    add_outer(&mut g, fk, fj, 0.5 * w_cross * q);
                }
            }
        }
    }
    for i in 0..d {
        g[(i, i)] += lambda;
    }
    linalg::symmetrize(&g)
}

/// Clip eigenvalues at zero, then shrink into the Hilbert–Schmidt ball.
pub fn project_feasible(param: &PsdParam) -> PsdParam {
    let clipped = linalg::spectral_map(&param.lambda_mat, |v| v.max(0.0));
    let hs = clipped.norm();
    let factor = if hs > param.hs_norm_cap { param.hs_norm_cap / hs } else { 1.0 };
    PsdParam {
        lambda_mat: clipped * factor,
        hs_norm_cap: param.hs_norm_cap,
    }
}

pub fn threshold_rank(param: &PsdParam, k: usize) -> Result<PsdParam> {
    if k == 0 {
        return input("k must be at least 1");
    }
    let e = linalg::eigh_desc(&param.lambda_mat, 0.0)?;
    let d = param.dim();
    let mut out = DMatrix::zeros(d, d);
    for i in 0..k.min(d) {
        let v = e.values[i].max(0.0);
        if v > 0.0 {
            let u = e.vectors.column(i);
            out += (u * u.transpose()) * v;
        }
    }
    Ok(PsdParam {
        lambda_mat: linalg::symmetrize(&out),
        hs_norm_cap: param.hs_norm_cap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: usize,
    pub loss: f64,
    pub hs_norm: f64,
    pub rank: usize,
}

#[derive(Debug, Clone)]
pub struct SgdResult {
    pub param: PsdParam,
    pub trace: Vec<TracePoint>,
    pub step_scale: f64,
}

pub fn run_sgd(data: &AugmentedDataset, features: &FeatureMap, config: &SgdConfig) -> Result<SgdResult> {
    run_sgd_on(&FeatureTable::new(data, features)?, config)
}

pub fn run_sgd_on(table: &FeatureTable, config: &SgdConfig) -> Result<SgdResult> {
    config.validate()?;
    if table.n < 2 {
        return input("SGD needs at least two inputs");
    }
    let kappa = table.max_norm();
    let c = match config.step_scale {
        Some(c) => c,
        None if kappa > 0.0 => 1.0 / (kappa * kappa),
        None => 1.0,
    };
    let schedule = schedule_registry().build(&config.schedule, &ScheduleSpec { scale: c })?;
    let mom = table.moments();
    let mut param = PsdParam::for_problem(table.dim(), config.k, config.lambda);
    let initial = feature_loss(&mom, &param.lambda_mat, config.beta, config.lambda, config.k);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = table.dim();
    let mut avg = DMatrix::zeros(d, d);
    let start_avg = config.steps - config.averaging_window + 1;
    let mut trace = Vec::new();
    let record = |step: usize, p: &PsdParam, trace: &mut Vec<TracePoint>| -> f64 {
        let loss = feature_loss(&mom, &p.lambda_mat, config.beta, config.lambda, config.k);
        trace.push(TracePoint {
            step,
            loss,
            hs_norm: p.hs_norm(),
            rank: p.rank(1e-10),
        });
        loss
    };
    record(0, &param, &mut trace);
    for t in 1..=config.steps {
        let batch = sample_indices(table.n, table.m, config.m, true, &mut rng)?;
        let g = stochastic_gradient(&param, table, &batch, config.beta, config.lambda);
        param.lambda_mat -= g * schedule.rate(t);
        param = project_feasible(&param);
        if t >= start_avg {
            avg += &param.lambda_mat;
        }
        if t % config.trace_every.max(1) == 0 || t == config.steps {
            let loss = record(t, &param, &mut trace);
            if !loss.is_finite() || loss.abs() > 1e6 * initial.abs().max(1.0) {
                return Err(Error::Numeric(format!(
                    "SGD diverged at step {t}: loss {loss:e} vs initial {initial:e} (step scale {c:e})"
                )));
            }
        }
    }
    let param = PsdParam {
        lambda_mat: linalg::symmetrize(&(avg / config.averaging_window as f64)),
        hs_norm_cap: param.hs_norm_cap,
    };
    Ok(SgdResult {
        param,
        trace,
        step_scale: c,
    })
}

/// Mean squared Frobenius deviation of independent stochastic gradients from
/// their sample mean.
#[allow(clippy::too_many_arguments)]
pub fn estimate_gradient_variance(
    data: &AugmentedDataset,
    features: &FeatureMap,
    param: &PsdParam,
    beta: f64,
    lambda: f64,
    m: usize,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    gradient_variance_on(&FeatureTable::new(data, features)?, param, beta, lambda, m, samples, seed)
}

pub fn gradient_variance_on(
    table: &FeatureTable,
    param: &PsdParam,
    beta: f64,
    lambda: f64,
    m: usize,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if samples < 2 {
        return input("variance needs at least two samples");
    }
    let grads = sample_gradients(table, param, beta, lambda, m, samples, seed)?;
    let d = table.dim();
    let mean = grads.iter().fold(DMatrix::zeros(d, d), |a, g| a + g) / samples as f64;
    let ss: f64 = grads.iter().map(|g| (g - &mean).norm_squared()).sum();
    Ok(ss / (samples - 1) as f64)
}

/// Independent stochastic gradients; sample `s` draws from ChaCha8 stream `s`.
pub fn sample_gradients(
    table: &FeatureTable,
    param: &PsdParam,
    beta: f64,
    lambda: f64,
    m: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<DMatrix<f64>>> {
    (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let b = sample_indices(table.n, table.m, m, true, &mut rng)?;
            Ok(stochastic_gradient(param, table, &b, beta, lambda))
        })
        .collect()
}
