//! Closed-form spectra of augmentation operators `T` and dot-product kernel
//! operators `K` on the Boolean hypercube `{−1,+1}^d` and on the sphere, plus
//! exhaustive brute-force operators used as oracles.
//!
//! A hypercube point is stored as an index `x ∈ [0, 2^d)`, coordinate
//! `x_i = 1 − 2·bit_i(x)`. All index arithmetic is cyclic mod `d`.

use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::kernelspace::{Kernel, KernelSpec, ScalarFunction};
use crate::registry::Registry;

pub const MAX_BRUTE_D: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParitySubset {
    pub d: usize,
    pub mask: u64,
}

impl ParitySubset {
    pub fn new(d: usize, indices: &[usize]) -> Result<Self> {
        if d == 0 || d > 64 {
            return input(format!("dimension {d} outside [1, 64]"));
        }
        let mut mask = 0u64;
        for &i in indices {
            if i >= d {
                return input(format!("index {i} outside [0, {d})"));
            }
            mask |= 1 << i;
        }
        Ok(Self { d, mask })
    }

    pub fn empty(d: usize) -> Self {
        Self { d, mask: 0 }
    }

    pub fn from_mask(d: usize, mask: u64) -> Self {
        let full = if d == 64 { u64::MAX } else { (1u64 << d) - 1 };
        Self { d, mask: mask & full }
    }

    /// All `2^d` subsets in mask order.
    pub fn all(d: usize) -> Vec<Self> {
        (0..1u64 << d).map(|m| Self { d, mask: m }).collect()
    }

    pub fn card(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.d).filter(|i| self.mask >> i & 1 == 1).collect()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.mask >> (i % self.d) & 1 == 1
    }

    /// Smallest `v` with `S ⊆ [a, a+v)` for some `a`; `0` for the empty set.
    pub fn cyclic_diam(&self) -> usize {
        let idx = self.indices();
        if idx.is_empty() {
            return 0;
        }
        let mut max_gap = 0;
        for (t, &s) in idx.iter().enumerate() {
            let next = if t + 1 < idx.len() { idx[t + 1] } else { idx[0] + self.d };
            max_gap = max_gap.max(next - s);
        }
        self.d - max_gap + 1
    }

    /// Number of window starts `a ∈ [d]` with `S ⊆ [a, a+w)`.
    pub fn window_count(&self, w: usize) -> usize {
        if self.mask == 0 {
            return self.d;
        }
        (0..self.d)
            .filter(|&a| self.indices().iter().all(|&i| (i + self.d - a) % self.d < w))
            .count()
    }

    /// `χ_S(x) = Π_{i∈S} x_i`.
    pub fn chi(&self, x: u64) -> f64 {
        if (x & self.mask).count_ones() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// `S + a = {i + a mod d}`.
    pub fn shift(&self, a: usize) -> Self {
        Self::from_mask(self.d, rotate(self.mask, self.d, a % self.d))
    }

    /// `S̃ = {−i mod d}`.
    pub fn mirror(&self) -> Self {
        let mut m = 0u64;
        for i in self.indices() {
            m |= 1 << ((self.d - i) % self.d);
        }
        Self { d: self.d, mask: m }
    }

    pub fn orbit_size(&self) -> usize {
        (1..=self.d).find(|&k| self.shift(k) == *self).unwrap_or(self.d)
    }
}

impl fmt::Display for ParitySubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let idx: Vec<String> = self.indices().iter().map(|i| i.to_string()).collect();
        write!(f, "[{}]", idx.join(" "))
    }
}

fn rotate(mask: u64, d: usize, a: usize) -> u64 {
    if a == 0 || d == 0 {
        return mask;
    }
    let full = if d == 64 { u64::MAX } else { (1u64 << d) - 1 };
    ((mask << a) | (mask >> (d - a))) & full
}

/// Coordinates `x_i ∈ {−1,+1}` of hypercube point `x`.
pub fn hypercube_point(d: usize, x: u64) -> Vec<f64> {
    (0..d).map(|i| if x >> i & 1 == 1 { -1.0 } else { 1.0 }).collect()
}

/// Translation `(a·x)_i = x_{i−a}`.
pub fn translate_point(d: usize, x: u64, a: usize) -> u64 {
    rotate(x, d, a % d)
}

/// Index flip `R(x)_i = x_{−i}`.
pub fn mirror_point(d: usize, x: u64) -> u64 {
    ParitySubset::from_mask(d, x).mirror().mask
}

/// A random augmentation of hypercube inputs.
pub trait AugmentationLaw: Send + Sync + fmt::Debug {
    fn name(&self) -> String;
    /// Checks parameters against the input dimension.
    fn validate(&self, d: usize) -> Result<()>;
    /// `P(ξ | x)` as `(ξ, probability)` pairs.
    fn transition(&self, d: usize, x: u64) -> Vec<(u64, f64)>;
    /// Eigenvalue of `T` on `χ_S` when parities diagonalize `T`.
    fn parity_eigenvalue(&self, s: &ParitySubset) -> Option<f64>;
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LawSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
    /// Shift distribution over `Z_d` for translations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    /// Width of a uniform shift window, alternative to `probs`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<usize>,
    /// Needed with `delta` to size the distribution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
}

impl LawSpec {
    pub fn bitflip(p: f64) -> Self {
        Self { kind: "bitflip".into(), p: Some(p), ..Default::default() }
    }
    pub fn crop1d(w: usize) -> Self {
        Self { kind: "crop1d".into(), w: Some(w), ..Default::default() }
    }
    pub fn crop2d(v: usize, w: usize, rows: usize, cols: usize) -> Self {
        Self {
            kind: "crop2d".into(),
            v: Some(v),
            w: Some(w),
            rows: Some(rows),
            cols: Some(cols),
            ..Default::default()
        }
    }
    pub fn indexflip(p: f64) -> Self {
        Self { kind: "indexflip".into(), p: Some(p), ..Default::default() }
    }
    pub fn translate(probs: Vec<f64>) -> Self {
        Self { kind: "translate".into(), probs: Some(probs), ..Default::default() }
    }
    pub fn identity() -> Self {
        Self { kind: "identity".into(), ..Default::default() }
    }

    pub fn build(&self) -> Result<Box<dyn AugmentationLaw>> {
        law_registry().build(&self.kind, self)
    }
}

fn prob(spec: &LawSpec) -> Result<f64> {
    match spec.p {
        Some(p) if (0.0..=1.0).contains(&p) => Ok(p),
        Some(p) => input(format!("probability {p} outside [0, 1]")),
        None => input(format!("law `{}` needs p", spec.kind)),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IdentityLaw;
impl AugmentationLaw for IdentityLaw {
    fn name(&self) -> String {
        "identity".into()
    }
    fn validate(&self, _: usize) -> Result<()> {
        Ok(())
    }
    fn transition(&self, _: usize, x: u64) -> Vec<(u64, f64)> {
        vec![(x, 1.0)]
    }
    fn parity_eigenvalue(&self, _: &ParitySubset) -> Option<f64> {
        Some(1.0)
    }
}

/// Each bit flipped independently with probability `p`.
#[derive(Debug, Clone, Copy)]
pub struct BitFlip {
    pub p: f64,
}

impl AugmentationLaw for BitFlip {
    fn name(&self) -> String {
        format!("bitflip(p={})", self.p)
    }
    fn validate(&self, _: usize) -> Result<()> {
        Ok(())
    }
    fn transition(&self, d: usize, x: u64) -> Vec<(u64, f64)> {
        (0..1u64 << d)
            .map(|y| {
                let h = y.count_ones() as i32;
                (x ^ y, self.p.powi(h) * (1.0 - self.p).powi(d as i32 - h))
            })
            .filter(|(_, w)| *w > 0.0)
            .collect()
    }
    fn parity_eigenvalue(&self, s: &ParitySubset) -> Option<f64> {
        Some(t_eig_bitflip(self.p, s))
    }
}

/// Keeps a uniformly placed cyclic window of `w` bits, resamples the rest.
#[derive(Debug, Clone, Copy)]
pub struct Crop1D {
    pub w: usize,
}

impl AugmentationLaw for Crop1D {
    fn name(&self) -> String {
        format!("crop1d(w={})", self.w)
    }
    fn validate(&self, d: usize) -> Result<()> {
        if self.w == 0 || self.w > d {
            return input(format!("window {} outside [1, {d}]", self.w));
        }
        Ok(())
    }
    fn transition(&self, d: usize, x: u64) -> Vec<(u64, f64)> {
        let windows: Vec<u64> = (0..d)
            .map(|a| (0..self.w).fold(0u64, |m, o| m | 1 << ((a + o) % d)))
            .collect();
        masked_transition(d, x, &windows)
    }
    fn parity_eigenvalue(&self, s: &ParitySubset) -> Option<f64> {
        Some(t_eig_crop1d(self.w, s))
    }
}

/// Uniform mixture over kept-bit masks; unkept bits are uniform.
fn masked_transition(d: usize, x: u64, keeps: &[u64]) -> Vec<(u64, f64)> {
    let mut acc = std::collections::BTreeMap::new();
    let full = (1u64 << d) - 1;
    let wk = 1.0 / keeps.len() as f64;
    for &keep in keeps {
        let free = full & !keep;
        let nfree = free.count_ones();
        let w = wk / (1u64 << nfree) as f64;
        // enumerate subsets of `free`
        let mut sub = 0u64;
        loop {
            *acc.entry((x & keep) | sub).or_insert(0.0) += w;
            if sub == free {
                break;
            }
            sub = (sub.wrapping_sub(free)) & free;
        }
    }
    acc.into_iter().collect()
}

/// 2D crop on a `rows × cols` grid, bit index `r*cols + c`.
#[derive(Debug, Clone, Copy)]
pub struct Crop2D {
    pub v: usize,
    pub w: usize,
    pub rows: usize,
    pub cols: usize,
}

impl AugmentationLaw for Crop2D {
    fn name(&self) -> String {
        format!("crop2d(v={},w={},{}x{})", self.v, self.w, self.rows, self.cols)
    }
    fn validate(&self, d: usize) -> Result<()> {
        if self.rows * self.cols != d {
            return input(format!("grid {}x{} does not have {d} cells", self.rows, self.cols));
        }
        if self.v == 0 || self.v > self.rows || self.w == 0 || self.w > self.cols {
            return input("crop window outside the grid");
        }
        Ok(())
    }
    fn transition(&self, d: usize, x: u64) -> Vec<(u64, f64)> {
        let mut keeps = Vec::new();
        for a in 0..self.rows {
            for b in 0..self.cols {
                let mut m = 0u64;
                for i in 0..self.v {
                    for j in 0..self.w {
                        m |= 1 << (((a + i) % self.rows) * self.cols + (b + j) % self.cols);
                    }
                }
                keeps.push(m);
            }
        }
        masked_transition(d, x, &keeps)
    }
    fn parity_eigenvalue(&self, s: &ParitySubset) -> Option<f64> {
        t_eig_crop2d(self.v, self.w, self.rows, self.cols, s).ok()
    }
}

/// Reverses the index order with probability `p`.
#[derive(Debug, Clone, Copy)]
pub struct IndexFlip {
    pub p: f64,
}

impl AugmentationLaw for IndexFlip {
    fn name(&self) -> String {
        format!("indexflip(p={})", self.p)
    }
    fn validate(&self, _: usize) -> Result<()> {
        Ok(())
    }
    fn transition(&self, d: usize, x: u64) -> Vec<(u64, f64)> {
        let r = mirror_point(d, x);
        if r == x {
            vec![(x, 1.0)]
        } else {
            vec![(x, 1.0 - self.p), (r, self.p)]
        }
    }
    fn parity_eigenvalue(&self, s: &ParitySubset) -> Option<f64> {
        if s.mirror() == *s {
            Some(1.0)
        } else {
            None
        }
    }
}

/// Cyclic shift by `a ~ probs`.
#[derive(Debug, Clone)]
pub struct Translate {
    pub probs: Vec<f64>,
}

impl AugmentationLaw for Translate {
    fn name(&self) -> String {
        format!("translate(support={})", self.probs.iter().filter(|p| **p > 0.0).count())
    }
    fn validate(&self, d: usize) -> Result<()> {
        if self.probs.len() != d {
            return input(format!("shift distribution has {} entries for d = {d}", self.probs.len()));
        }
        Ok(())
    }
    fn transition(&self, d: usize, x: u64) -> Vec<(u64, f64)> {
        let mut acc = std::collections::BTreeMap::new();
        for (a, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                *acc.entry(translate_point(d, x, a)).or_insert(0.0) += p;
            }
        }
        acc.into_iter().collect()
    }
    fn parity_eigenvalue(&self, s: &ParitySubset) -> Option<f64> {
        if s.orbit_size() == 1 {
            Some(1.0)
        } else {
            None
        }
    }
}

fn check_distribution(p: &[f64]) -> Result<()> {
    if p.is_empty() || p.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return input("shift probabilities must lie in [0, 1]");
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return input(format!("shift probabilities sum to {s}, not 1"));
    }
    Ok(())
}

/// Uniform distribution over shifts `0..delta` in `Z_d`.
pub fn uniform_window(d: usize, delta: usize) -> Result<Vec<f64>> {
    if delta == 0 || delta > d {
        return input(format!("window width {delta} outside [1, {d}]"));
    }
    Ok((0..d).map(|a| if a < delta { 1.0 / delta as f64 } else { 0.0 }).collect())
}

fn build_translate(spec: &LawSpec) -> Result<Box<dyn AugmentationLaw>> {
    let probs = match (&spec.probs, spec.delta, spec.d) {
        (Some(p), _, _) => p.clone(),
        (None, Some(delta), Some(d)) => uniform_window(d, delta)?,
        _ => return input("translate needs `probs` or both `delta` and `d`"),
    };
    check_distribution(&probs)?;
    Ok(Box::new(Translate { probs }))
}

pub fn law_registry() -> Registry<LawSpec, dyn AugmentationLaw> {
    let mut r: Registry<LawSpec, dyn AugmentationLaw> = Registry::new("augmentation law");
    r.register("identity", |_| Ok(Box::new(IdentityLaw)))
        .register("bitflip", |s| Ok(Box::new(BitFlip { p: prob(s)? })))
        .register("crop1d", |s| match s.w {
            Some(w) if w > 0 => Ok(Box::new(Crop1D { w })),
            _ => input("crop1d needs a positive window w"),
        })
        .register("crop2d", |s| match (s.v, s.w, s.rows, s.cols) {
            (Some(v), Some(w), Some(rows), Some(cols)) => Ok(Box::new(Crop2D { v, w, rows, cols })),
            _ => input("crop2d needs v, w, rows and cols"),
        })
        .register("indexflip", |s| Ok(Box::new(IndexFlip { p: prob(s)? })))
        .register("translate", build_translate);
    r
}

/// `(1−2p)^{2|S|}`: each view flips independently, so `T = AᵀA` squares the
/// single-view attenuation `(1−2p)^{|S|}`.
pub fn t_eig_bitflip(p: f64, s: &ParitySubset) -> f64 {
    (1.0 - 2.0 * p).powi(2 * s.card() as i32)
}

/// `(count/d)²` with `count` the number of cyclic windows containing `S`.
pub fn t_eig_crop1d(w: usize, s: &ParitySubset) -> f64 {
    let c = s.window_count(w) as f64 / s.d as f64;
    c * c
}

/// `(1 + w − diam S)₊`, the window count used by the closed form; it equals
/// [`ParitySubset::window_count`] whenever `w ≤ d/2` or `S` is empty.
pub fn crop_count_formula(w: usize, s: &ParitySubset) -> usize {
    if s.mask == 0 {
        return s.d;
    }
    (1 + w).saturating_sub(s.cyclic_diam())
}

/// Product of the projected row and column window counts.
pub fn t_eig_crop2d(v: usize, w: usize, rows: usize, cols: usize, s: &ParitySubset) -> Result<f64> {
    if rows * cols != s.d {
        return input(format!("grid {rows}x{cols} does not match d = {}", s.d));
    }
    if v == 0 || v > rows || w == 0 || w > cols {
        return input("crop window outside the grid");
    }
    let mut rmask = 0u64;
    let mut cmask = 0u64;
    for i in s.indices() {
        rmask |= 1 << (i / cols);
        cmask |= 1 << (i % cols);
    }
    let (r, c) = if s.mask == 0 {
        (rows, cols)
    } else {
        (
            ParitySubset::from_mask(rows, rmask).window_count(v),
            ParitySubset::from_mask(cols, cmask).window_count(w),
        )
    };
    let e = (r as f64 / rows as f64) * (c as f64 / cols as f64);
    Ok(e * e)
}

/// Symmetric combinations `χ_S + χ_S̃` keep eigenvalue 1, antisymmetric ones
/// get `(1−2p)²`.
pub fn t_eig_indexflip(p: f64, symmetric: bool) -> f64 {
    if symmetric {
        1.0
    } else {
        (1.0 - 2.0 * p).powi(2)
    }
}

/// `ψ_{m,S} = k_S^{−1/2} Σ_k e^{2iπkm/k_S} χ_{S+k}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CyclicParity {
    pub rep: ParitySubset,
    pub freq: usize,
    pub orbit: usize,
}

impl CyclicParity {
    pub fn new(rep: ParitySubset, freq: usize) -> Result<Self> {
        let orbit = rep.orbit_size();
        if freq >= orbit {
            return input(format!("frequency {freq} outside [0, {orbit})"));
        }
        Ok(Self { rep, freq, orbit })
    }

    /// `(re, im)` of `ψ_{m,S}(x)`.
    pub fn eval(&self, x: u64) -> (f64, f64) {
        let mut re = 0.0;
        let mut im = 0.0;
        for k in 0..self.orbit {
            let ang = 2.0 * std::f64::consts::PI * (k * self.freq) as f64 / self.orbit as f64;
            let c = self.rep.shift(k).chi(x);
            re += ang.cos() * c;
            im += ang.sin() * c;
        }
        let s = 1.0 / (self.orbit as f64).sqrt();
        (re * s, im * s)
    }

    pub fn is_aperiodic(&self) -> bool {
        self.orbit == self.rep.d
    }
}

/// `p̂(ω) = Σ_a p(a) e^{−2iπaω/d}` for real `ω`.
pub fn fourier(p: &[f64], omega: f64) -> (f64, f64) {
    let d = p.len() as f64;
    p.iter().enumerate().fold((0.0, 0.0), |(re, im), (a, &pa)| {
        let ang = -2.0 * std::f64::consts::PI * a as f64 * omega / d;
        (re + pa * ang.cos(), im + pa * ang.sin())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenSource {
    ClosedForm,
    BruteForce,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TranslateEigen {
    pub value: f64,
    pub source: EigenSource,
}

/// `|p̂(m)|²` on aperiodic orbits. Periodic orbits are resolved by applying
/// the operator to `ψ_{m,S}` on the span of its orbit.
pub fn t_eig_translate(p: &[f64], cp: &CyclicParity) -> Result<TranslateEigen> {
    check_distribution(p)?;
    let d = cp.rep.d;
    if p.len() != d {
        return input(format!("shift distribution has {} entries for d = {d}", p.len()));
    }
    if cp.is_aperiodic() {
        let (re, im) = fourier(p, cp.freq as f64);
        return Ok(TranslateEigen {
            value: re * re + im * im,
            source: EigenSource::ClosedForm,
        });
    }
    log::info!(
        "orbit of {} has size {} < d = {d}; using the operator on the orbit span",
        cp.rep,
        cp.orbit
    );
    // Aχ_{S+k} = Σ_a p(a) χ_{S+k−a}; on the orbit basis A is circulant.
    let ko = cp.orbit;
    let mut amat = vec![vec![0.0; ko]; ko];
    for k in 0..ko {
        for (a, &pa) in p.iter().enumerate() {
            let target = (k + ko * d - a % ko) % ko;
            amat[target][k] += pa;
        }
    }
    let psi: Vec<(f64, f64)> = (0..ko)
        .map(|k| {
            let ang = 2.0 * std::f64::consts::PI * (k * cp.freq) as f64 / ko as f64;
            (ang.cos(), ang.sin())
        })
        .collect();
    let apply = |v: &[(f64, f64)], transpose: bool| -> Vec<(f64, f64)> {
        (0..ko)
            .map(|i| {
                (0..ko).fold((0.0, 0.0), |(re, im), j| {
                    let w = if transpose { amat[j][i] } else { amat[i][j] };
                    (re + w * v[j].0, im + w * v[j].1)
                })
            })
            .collect()
    };
    let tpsi = apply(&apply(&psi, false), true);
    let value = tpsi.iter().zip(&psi).fold(0.0, |acc, (t, q)| acc + t.0 * q.0 + t.1 * q.1) / ko as f64;
    Ok(TranslateEigen {
        value,
        source: EigenSource::BruteForce,
    })
}

fn ln_binom(n: usize, k: usize) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Lanczos approximation (g = 7), accurate to ~1e−15 relative for x ≥ 0.5.
fn ln_gamma(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let mut a = G[0];
    let t = x + 7.5;
    for (i, g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Exact binomial coefficient in floating point (exact below 2^53).
pub fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c.round()
}

/// Krawtchouk polynomial `K_ℓ(r) = Σ_j (−1)^j C(r,j) C(d−r, ℓ−j)`.
fn krawtchouk(ell: usize, d: usize, r: usize) -> f64 {
    (0..=ell)
        .map(|j| {
            let s = if j % 2 == 0 { 1.0 } else { -1.0 };
            s * binom(r, j) * binom(d - r, ell - j)
        })
        .sum()
}

pub const GEGENBAUER_EXACT_MAX_D: usize = 14;

/// `Q_{ℓ,d}(t)` with `Σ_{|S|=ℓ} χ_S(x)χ_S(y) = C(d,ℓ)·Q_{ℓ,d}(xᵀy)`.
pub fn gegenbauer_hypercube(ell: usize, d: usize, t: i64) -> Result<f64> {
    if ell > d {
        return input(format!("degree {ell} exceeds d = {d}"));
    }
    if t.unsigned_abs() as usize > d || (d as i64 - t) % 2 != 0 {
        return input(format!("t = {t} is not an inner product of two points of {{-1,1}}^{d}"));
    }
    let r = ((d as i64 - t) / 2) as usize;
    if d <= GEGENBAUER_EXACT_MAX_D {
        Ok(gegenbauer_exact(ell, d, r))
    } else {
        Ok(gegenbauer_recurrence(ell, d, t as f64))
    }
}

fn gegenbauer_exact(ell: usize, d: usize, r: usize) -> f64 {
    krawtchouk(ell, d, r) / binom(d, ell)
}

/// `Q_{ℓ+1} = (t·Q_ℓ − ℓ·Q_{ℓ−1}) / (d − ℓ)`, `Q_0 = 1`, `Q_1 = t/d`.
pub fn gegenbauer_recurrence(ell: usize, d: usize, t: f64) -> f64 {
    let mut prev = 1.0;
    if ell == 0 {
        return prev;
    }
    let mut cur = t / d as f64;
    for l in 1..ell {
        let next = (t * cur - l as f64 * prev) / (d - l) as f64;
        prev = cur;
        cur = next;
    }
    cur
}

/// `τ(t)` for `t = d − 2r`: probability of `r` disagreements, `C(d,r)/2^d`.
pub fn hypercube_tau(d: usize, r: usize) -> f64 {
    (ln_binom(d, r) - d as f64 * std::f64::consts::LN_2).exp()
}

/// `ν_h(d,ℓ) = Σ_t τ(t) h(t) Q_{ℓ,d}(t)` with `h` applied to the raw inner product.
pub fn k_eig_dotproduct(h: &dyn ScalarFunction, d: usize, ell: usize) -> Result<f64> {
    k_eig_dot(h, d, ell, false)
}

/// As [`k_eig_dotproduct`], with `h(t/d)` when `normalize` is set.
pub fn k_eig_dot(h: &dyn ScalarFunction, d: usize, ell: usize, normalize: bool) -> Result<f64> {
    if ell > d {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for r in 0..=d {
        let t = d as i64 - 2 * r as i64;
        let arg = if normalize { t as f64 / d as f64 } else { t as f64 };
        acc += hypercube_tau(d, r) * h.eval(arg) * gegenbauer_hypercube(ell, d, t)?;
    }
    Ok(acc)
}

/// Eigenvalue of `k(x,y) = (1/d) Σ_k h(⟨x_(k), y_(k)⟩/q)` over cyclic patches
/// of width `q`: `ν_h(q,|S|) · #{patches ⊇ S} / d`.
pub fn k_eig_cnn(h: &dyn ScalarFunction, d: usize, q: usize, s: &ParitySubset) -> Result<f64> {
    if q == 0 || q > d || s.d != d {
        return input(format!("patch width {q} invalid for d = {d}"));
    }
    let count = s.window_count(q);
    if count == 0 {
        return Ok(0.0);
    }
    Ok(k_eig_dot(h, q, s.card(), true)? * count as f64 / d as f64)
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Gegenbauer `C_ℓ^{(α)}(t)` normalized to 1 at `t = 1`; `α = (d−2)/2`.
pub fn gegenbauer_sphere(ell: usize, d: usize, t: f64) -> f64 {
    let a = (d as f64 - 2.0) / 2.0;
    let eval = |t: f64| -> f64 {
        let mut c0 = 1.0;
        if ell == 0 {
            return c0;
        }
        let mut c1 = 2.0 * a * t;
        for n in 1..ell {
            let nf = n as f64;
            let c2 = (2.0 * t * (nf + a) * c1 - (nf + 2.0 * a - 1.0) * c0) / (nf + 1.0);
            c0 = c1;
            c1 = c2;
        }
        c1
    };
    eval(t) / eval(1.0)
}

fn sphere_quadrature(h: &dyn ScalarFunction, d: usize, ell: usize, nodes: usize) -> f64 {
    let (x, w) = gauss_legendre(nodes);
    let mut num = 0.0;
    let mut den = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        let theta = std::f64::consts::FRAC_PI_2 * (xi + 1.0);
        let jac = theta.sin().powi(d as i32 - 2) * wi;
        let t = theta.cos();
        num += jac * h.eval(t) * gegenbauer_sphere(ell, d, t);
        den += jac;
    }
    num / den
}

/// `ν_ℓ = E_τ[h(t) Q_ℓ(t)]` under `dτ ∝ (1−t²)^{(d−3)/2} dt`, by Gauss–Legendre
/// quadrature in the angle; `nodes` and `2·nodes` must agree to 1e−6.
pub fn k_eig_sphere(h: &dyn ScalarFunction, d: usize, ell: usize, nodes: usize) -> Result<f64> {
    if d < 3 {
        return input(format!("sphere dimension d = {d} must be at least 3"));
    }
    if nodes < 64 {
        return input(format!("need at least 64 quadrature nodes, got {nodes}"));
    }
    let a = sphere_quadrature(h, d, ell, nodes);
    let b = sphere_quadrature(h, d, ell, 2 * nodes);
    if (a - b).abs() > 1e-6 {
        return Err(Error::Numeric(format!(
            "quadrature for degree {ell} did not converge: {a:e} with {nodes} nodes vs {b:e} with {}",
            2 * nodes
        )));
    }
    Ok(b)
}

/// `N(d,ℓ)`, the dimension of degree-`ℓ` spherical harmonics on `S^{d−1}`.
pub fn sphere_harmonic_dim(d: usize, ell: usize) -> f64 {
    if ell == 0 {
        return 1.0;
    }
    (2 * ell + d - 2) as f64 / ell as f64 * binom(ell + d - 3, d - 2)
}

/// `β·t + (1−β) − λ/k`, or `−∞` outside the space (`k = 0`).
pub fn interplay_score(beta: f64, lambda: f64, t_eig: f64, k_eig: f64) -> f64 {
    if k_eig <= 0.0 {
        return f64::NEG_INFINITY;
    }
    beta * t_eig + (1.0 - beta) - lambda / k_eig
}

/// Index of the best positive score; ties go to the lowest index.
pub fn select(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s > 0.0 && best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// Regularization levels where the selected function changes, from the upper
/// envelope of the score lines; entries are `(λ, from, to)`, `to = None` when
/// no score stays positive.
pub fn regime_crossovers(beta: f64, t_eig: &[f64], k_eig: &[f64]) -> Vec<(f64, Option<usize>, Option<usize>)> {
    let n = t_eig.len().min(k_eig.len());
    let icept: Vec<f64> = (0..n).map(|i| beta * t_eig[i] + 1.0 - beta).collect();
    let slope: Vec<f64> = (0..n)
        .map(|i| if k_eig[i] > 0.0 { 1.0 / k_eig[i] } else { f64::INFINITY })
        .collect();
    let scores_at = |lam: f64| -> Vec<f64> { (0..n).map(|i| interplay_score(beta, lam, t_eig[i], k_eig[i])).collect() };
    let mut out = Vec::new();
    let mut lam = 0.0;
    let mut cur = select(&scores_at(0.0));
    while let Some(c) = cur {
        // next event: a line with smaller slope overtakes, or the current hits zero
        let mut next = icept[c] / slope[c];
        let mut to = None;
        for j in 0..n {
            if j != c && slope[j] < slope[c] {
                let x = (icept[c] - icept[j]) / (slope[c] - slope[j]);
                if x > lam && (x < next || (x == next && to.is_none_or(|t| slope[j] < slope[t]))) {
                    next = x;
                    to = Some(j);
                }
            }
        }
        if to.is_some_and(|t| icept[t] - slope[t] * next <= 0.0) {
            to = None;
        }
        out.push((next, Some(c), to));
        lam = next;
        cur = to;
    }
    if out.is_empty() {
        out.push((0.0, None, None));
    }
    out
}

/// Dense `A[x][ξ] = P(ξ | x)`.
pub fn brute_force_a(law: &dyn AugmentationLaw, d: usize) -> Result<DMatrix<f64>> {
    check_brute_dim(d)?;
    law.validate(d)?;
    let size = 1usize << d;
    let rows: Vec<Vec<(u64, f64)>> = (0..size as u64).into_par_iter().map(|x| law.transition(d, x)).collect();
    let mut a = DMatrix::zeros(size, size);
    for (x, row) in rows.iter().enumerate() {
        for &(y, p) in row {
            a[(x, y as usize)] += p;
        }
    }
    Ok(a)
}

/// `T = AᵀA`.
pub fn brute_force_t(law: &dyn AugmentationLaw, d: usize) -> Result<DMatrix<f64>> {
    let a = brute_force_a(law, d)?;
    let t = a.transpose() * &a;
    Ok((&t + t.transpose()) * 0.5)
}

/// `K[x][y] = k(x, y) / 2^d` over all hypercube points.
pub fn brute_force_k(spec: &KernelSpec, d: usize) -> Result<DMatrix<f64>> {
    let kernel = spec.build()?;
    brute_force_k_with(kernel.as_ref(), d)
}

pub fn brute_force_k_with(kernel: &dyn Kernel, d: usize) -> Result<DMatrix<f64>> {
    check_brute_dim(d)?;
    let size = 1usize << d;
    let pts: Vec<Vec<f64>> = (0..size as u64).map(|x| hypercube_point(d, x)).collect();
    let rows: Vec<Vec<f64>> = (0..size)
        .into_par_iter()
        .map(|i| (0..size).map(|j| kernel.eval_unchecked(&pts[i], &pts[j])).collect())
        .collect();
    let scale = 1.0 / size as f64;
    Ok(DMatrix::from_fn(size, size, |i, j| 0.5 * (rows[i][j] + rows[j][i]) * scale))
}

fn check_brute_dim(d: usize) -> Result<()> {
    if d == 0 {
        return input("dimension must be positive");
    }
    if d > MAX_BRUTE_D {
        return Err(Error::Resource(format!(
            "brute-force operators need 2^{d} x 2^{d} entries; limit is d = {MAX_BRUTE_D}"
        )));
    }
    Ok(())
}

/// `χ_S` on all hypercube points.
pub fn parity_vector(s: &ParitySubset) -> Vec<f64> {
    (0..1u64 << s.d).map(|x| s.chi(x)).collect()
}

/// Max-abs residual of `M v − μ v`.
pub fn eigen_residual(m: &DMatrix<f64>, v: &[f64], mu: f64) -> f64 {
    let n = v.len();
    (0..n)
        .map(|i| {
            let mv: f64 = (0..n).map(|j| m[(i, j)] * v[j]).sum();
            (mv - mu * v[i]).abs()
        })
        .fold(0.0, f64::max)
}

/// Rayleigh quotient `vᵀMv / vᵀv`.
pub fn rayleigh(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    let n = v.len();
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        let mv: f64 = (0..n).map(|j| m[(i, j)] * v[j]).sum();
        num += v[i] * mv;
        den += v[i] * v[i];
    }
    num / den
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectClass {
    Killed,
    Attenuated,
    Invariant,
}

impl EffectClass {
    pub fn of(t: f64) -> Self {
        if t.abs() <= 1e-12 {
            EffectClass::Killed
        } else if (t - 1.0).abs() <= 1e-12 {
            EffectClass::Invariant
        } else {
            EffectClass::Attenuated
        }
    }
}

/// One analytic eigenpair label with its `T` and `K` eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub label: Vec<usize>,
    /// Mirror partner and parity (`+1` symmetric, `−1` antisymmetric) for flips.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partner: Option<(Vec<usize>, i8)>,
    pub card: usize,
    pub diam: usize,
    pub t_eig: f64,
    pub k_eig: f64,
    pub interplay: f64,
    pub class: EffectClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawReport {
    pub law: String,
    pub entries: Vec<SpectrumEntry>,
}

/// Parity-basis eigenvalues of each law on `{−1,+1}^d`. Index flips report
/// symmetric and antisymmetric combinations of mirrored pairs.
pub fn table1_report(d: usize, laws: &[LawSpec]) -> Result<Vec<LawReport>> {
    if d == 0 || d > MAX_BRUTE_D {
        return input(format!("table dimension must lie in [1, {MAX_BRUTE_D}]"));
    }
    laws.iter()
        .map(|spec| {
            let law = spec.build()?;
            law.validate(d)?;
            let mut entries = Vec::new();
            for s in ParitySubset::all(d) {
                let base = |t: f64, partner: Option<(Vec<usize>, i8)>| SpectrumEntry {
                    label: s.indices(),
                    partner,
                    card: s.card(),
                    diam: s.cyclic_diam(),
                    t_eig: t,
                    k_eig: 1.0,
                    interplay: t,
                    class: EffectClass::of(t),
                };
                if spec.kind == "indexflip" {
                    let m = s.mirror();
                    let p = spec.p.unwrap_or(0.0);
                    if m == s {
                        entries.push(base(1.0, None));
                    } else if s.mask < m.mask {
                        entries.push(base(t_eig_indexflip(p, true), Some((m.indices(), 1))));
                        entries.push(base(t_eig_indexflip(p, false), Some((m.indices(), -1))));
                    }
                } else if let Some(t) = law.parity_eigenvalue(&s) {
                    entries.push(base(t, None));
                }
            }
            Ok(LawReport {
                law: law.name(),
                entries,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diameters() {
        let s = ParitySubset::new(8, &[0, 7]).unwrap();
        assert_eq!(s.cyclic_diam(), 2);
        assert_eq!(ParitySubset::new(8, &[3]).unwrap().cyclic_diam(), 1);
        assert_eq!(ParitySubset::empty(8).cyclic_diam(), 0);
        assert_eq!(ParitySubset::new(8, &[0, 4]).unwrap().cyclic_diam(), 5);
    }

    #[test]
    fn window_counts() {
        let s = ParitySubset::new(8, &[2]).unwrap();
        assert_eq!(s.window_count(4), 4);
        assert!((t_eig_crop1d(4, &s) - 0.25).abs() < 1e-15);
        let wide = ParitySubset::new(8, &[0, 4]).unwrap();
        assert_eq!(wide.window_count(6), 4);
        assert_eq!(crop_count_formula(6, &wide), 2);
    }

    #[test]
    fn gegenbauer_low_degree() {
        for t in [-6i64, -2, 0, 4, 6] {
            assert_eq!(gegenbauer_hypercube(0, 6, t).unwrap(), 1.0);
            assert!((gegenbauer_hypercube(1, 6, t).unwrap() - t as f64 / 6.0).abs() < 1e-15);
        }
        assert!(gegenbauer_hypercube(1, 6, 1).is_err());
        assert!(gegenbauer_hypercube(1, 6, 8).is_err());
    }

    #[test]
    fn harmonic_dims() {
        assert_eq!(sphere_harmonic_dim(3, 2), 5.0);
        assert_eq!(sphere_harmonic_dim(8, 3), 112.0);
    }

    #[test]
    fn legendre_weights_integrate() {
        let (x, w) = gauss_legendre(64);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-13);
        let m2: f64 = x.iter().zip(&w).map(|(a, b)| a * a * b).sum();
        assert!((m2 - 2.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn selection_rules() {
        assert_eq!(select(&[0.2, 0.2]), Some(0));
        assert_eq!(select(&[-1.0, 0.0]), None);
        assert_eq!(select(&[f64::NEG_INFINITY, 0.1]), Some(1));
    }
}
