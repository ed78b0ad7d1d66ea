//! Log-log rate fits with bootstrap confidence intervals.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub size: f64,
    pub mean: f64,
    pub std: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub grid: Vec<GridPoint>,
    pub slope: f64,
    pub intercept: f64,
    pub ci: (f64, f64),
    pub level: f64,
}

/// Least-squares line `y = a + b·x`, returned as `(b, a)`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let b = sxy / sxx;
    (b, my - b * mx)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
pub fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Slope of `log mean error` against `log size`, with a percentile bootstrap
/// interval from resampling the trials at every grid point.
pub fn fit_slope(points: &[(f64, Vec<f64>)], resamples: usize, level: f64, rng: &mut impl Rng) -> Result<RateFit> {
    if points.len() < 4 {
        return config_err(format!("slope fit needs at least 4 grid points, got {}", points.len()));
    }
    if resamples < 100 {
        return config_err("slope fit needs at least 100 bootstrap resamples");
    }
    for (size, trials) in points {
        if trials.is_empty() || !(*size > 0.0) {
            return config_err("every grid point needs a positive size and at least one trial");
        }
        if trials.iter().any(|v| !(*v > 0.0)) {
            return config_err(format!("non-positive error value at size {size}"));
        }
    }
    let lx: Vec<f64> = points.iter().map(|(s, _)| s.ln()).collect();
    let grid: Vec<GridPoint> = points
        .iter()
        .map(|(s, t)| GridPoint {
            size: *s,
            mean: mean(t),
            std: std_dev(t),
            trials: t.len(),
        })
        .collect();
    let ly: Vec<f64> = grid.iter().map(|g| g.mean.ln()).collect();
    let (slope, intercept) = ols(&lx, &ly);
    let mut boot = Vec::with_capacity(resamples);
    let mut buf = Vec::with_capacity(points.len());
    for _ in 0..resamples {
        buf.clear();
        for (_, t) in points {
            let s: f64 = (0..t.len()).map(|_| t[rng.random_range(0..t.len())]).sum();
            buf.push((s / t.len() as f64).ln());
        }
        boot.push(ols(&lx, &buf).0);
    }
    boot.sort_by(f64::total_cmp);
    let a = (1.0 - level) / 2.0;
    Ok(RateFit {
        grid,
        slope,
        intercept,
        ci: (quantile_sorted(&boot, a), quantile_sorted(&boot, 1.0 - a)),
        level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_power_laws() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sizes = [32.0, 64.0, 128.0, 256.0, 512.0];
        let inv: Vec<(f64, Vec<f64>)> = sizes.iter().map(|&s| (s, vec![3.0 / s])).collect();
        let fit = fit_slope(&inv, 100, 0.99, &mut rng).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
        let root: Vec<(f64, Vec<f64>)> = sizes.iter().map(|&s| (s, vec![2.0 / s.sqrt(); 3])).collect();
        assert!((fit_slope(&root, 100, 0.99, &mut rng).unwrap().slope + 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pts: Vec<(f64, Vec<f64>)> = (1..5).map(|s| (s as f64, vec![0.0])).collect();
        assert!(fit_slope(&pts, 100, 0.99, &mut rng).is_err());
        assert!(fit_slope(&pts[..3], 100, 0.99, &mut rng).is_err());
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert_eq!(quantile_sorted(&v, 0.125), 1.5);
        assert_eq!(std_dev(&[2.0]), 0.0);
    }
}
