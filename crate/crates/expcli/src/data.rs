//! Synthetic datasets: two interleaved half circles in the plane and shifted
//! points on the sphere.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use ssl_kernel::analytic_spectra::gegenbauer_sphere;
use ssl_kernel::spectral_pretrain::AugmentedDataset;

use crate::error::{config_err, Result};

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Half-moon inputs with their moon membership (`1` when `z₁ > 0`).
#[derive(Debug, Clone)]
pub struct HalfMoon {
    pub data: AugmentedDataset,
    pub moon: Vec<usize>,
}

/// One clean half-moon point `z + 1{z₁>0}·e₂ + σ·u` with `z` uniform on the circle.
pub fn halfmoon_point(sigma: f64, rng: &mut impl Rng) -> (Vec<f64>, usize) {
    let th = rng.random_range(0.0..2.0 * PI);
    let (z0, z1) = (th.cos(), th.sin());
    let side = usize::from(z0 > 0.0);
    let x = vec![z0 + sigma * normal(rng), z1 + side as f64 + sigma * normal(rng)];
    (x, side)
}

pub fn halfmoon_points(n: usize, sigma: f64, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| halfmoon_point(sigma, rng).0).collect()
}

/// `n` inputs with `m` views `x + σ·v` each.
pub fn gen_halfmoon(n: usize, m: usize, sigma: f64, rng: &mut impl Rng) -> Result<HalfMoon> {
    if n == 0 || m == 0 {
        return config_err("half-moon data needs n ≥ 1 and m ≥ 1");
    }
    if !(sigma >= 0.0) {
        return config_err(format!("noise level must be non-negative, got {sigma}"));
    }
    let mut inputs = Vec::with_capacity(n);
    let mut views = Vec::with_capacity(n);
    let mut moon = Vec::with_capacity(n);
    for _ in 0..n {
        let (x, side) = halfmoon_point(sigma, rng);
        let vs = (0..m)
            .map(|_| x.iter().map(|c| c + sigma * normal(rng)).collect())
            .collect();
        inputs.push(x);
        views.push(vs);
        moon.push(side);
    }
    Ok(HalfMoon {
        data: AugmentedDataset::new(inputs, views)?,
        moon,
    })
}

/// Distance from `x` to the unit arc around `c` spanning angles `[a0, a1]`.
pub fn arc_distance(x: &[f64], c: (f64, f64), a0: f64, a1: f64) -> f64 {
    let (dx, dy) = (x[0] - c.0, x[1] - c.1);
    let r = dx.hypot(dy);
    let mut ang = dy.atan2(dx);
    while ang < a0 {
        ang += 2.0 * PI;
    }
    if ang <= a1 {
        return (r - 1.0).abs();
    }
    [a0, a1]
        .iter()
        .map(|a| (x[0] - c.0 - a.cos()).hypot(x[1] - c.1 - a.sin()))
        .fold(f64::INFINITY, f64::min)
}

/// Four classes, two per moon, split along the arc.
///
/// On the moon nearest to `x`, classes `2s` and `2s+1` get probabilities
/// `(1 ± a·sin φ)/2` where `φ` is the angle around that moon's centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcLabels {
    pub sharpness: f64,
}

impl ArcLabels {
    pub fn eta(&self, x: &[f64]) -> [f64; 4] {
        let dl = arc_distance(x, (0.0, 0.0), PI / 2.0, 1.5 * PI);
        let dr = arc_distance(x, (0.0, 1.0), -PI / 2.0, PI / 2.0);
        let a = self.sharpness;
        if dl < dr {
            let f = x[1] / x[0].hypot(x[1]);
            [(1.0 + a * f) / 2.0, (1.0 - a * f) / 2.0, 0.0, 0.0]
        } else {
            let f = (x[1] - 1.0) / x[0].hypot(x[1] - 1.0);
            [0.0, 0.0, (1.0 + a * f) / 2.0, (1.0 - a * f) / 2.0]
        }
    }
}

/// Draws a class from unnormalized non-negative weights; negative entries
/// count as zero.
pub fn sample_class(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().map(|w| w.max(0.0)).sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w.max(0.0);
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Uniform points on the sphere with their cyclic-shift views and the two
/// regression targets `f₁` (degree one, not shift invariant) and `f₃`
/// (degree three, shift invariant).
#[derive(Debug, Clone)]
pub struct SphereTask {
    pub data: AugmentedDataset,
    pub f1: Vec<f64>,
    pub f3: Vec<f64>,
}

pub fn sphere_point(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
        let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r > 1e-12 {
            return v.into_iter().map(|x| x / r).collect();
        }
    }
}

/// `out[j] = x[(j − s) mod d]`.
pub fn cyclic_shift(x: &[f64], s: i64) -> Vec<f64> {
    let d = x.len() as i64;
    (0..d).map(|j| x[(j - s).rem_euclid(d) as usize]).collect()
}

pub fn target_f1(x: &[f64]) -> f64 {
    let d = x.len();
    x.iter().take(3).map(|&t| gegenbauer_sphere(1, d, t)).sum::<f64>() / 3.0
}

pub fn target_f3(x: &[f64]) -> f64 {
    let d = x.len();
    x.iter().map(|&t| gegenbauer_sphere(3, d, t)).sum::<f64>() / d as f64
}

pub fn gen_sphere_task(n: usize, d: usize, shifts: &[i64], rng: &mut impl Rng) -> Result<SphereTask> {
    if d < 4 {
        return config_err(format!("sphere task needs d ≥ 4, got {d}"));
    }
    if n == 0 || shifts.is_empty() {
        return config_err("sphere task needs n ≥ 1 and at least one shift");
    }
    let inputs: Vec<Vec<f64>> = (0..n).map(|_| sphere_point(d, rng)).collect();
    let views = inputs
        .iter()
        .map(|x| shifts.iter().map(|&s| cyclic_shift(x, s)).collect())
        .collect();
    let f1 = inputs.iter().map(|x| target_f1(x)).collect();
    let f3 = inputs.iter().map(|x| target_f3(x)).collect();
    Ok(SphereTask {
        data: AugmentedDataset::new(inputs, views)?,
        f1,
        f3,
    })
}
