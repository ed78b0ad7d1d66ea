use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use ssl_kernel::downstream_probe::*;
use ssl_kernel::kernelspace::KernelSpec;
use ssl_kernel::spectral_pretrain::{fit_representation, AugmentedDataset};
use ssl_kernel::Result;

/// Points are their own representation.
struct Raw(usize);

impl Representation for Raw {
    fn dim(&self) -> usize {
        self.0
    }
    fn embed(&self, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_fn(points.len(), self.0, |r, c| points[r][c]))
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| normal(&mut rng))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[test]
fn closed_form_matches_gradient_descent() {
    for seed in 0..3 {
        let psi = random(20, 4, seed);
        let y = random(20, 2, seed + 10);
        let probe = fit_probe_on(&psi, &y, 0.1).unwrap();
        let gd = ridge_gradient_descent(&psi, &y, 0.1, 10_000);
        let w = probe.weight_matrix();
        let rel = (&w - &gd).norm() / w.norm();
        assert!(rel <= 1e-8, "seed {seed}: {rel}");
    }
}

#[test]
fn trivial_probes() {
    let psi = random(15, 3, 4);
    let zero = fit_probe_on(&psi, &DMatrix::zeros(15, 2), 0.3).unwrap();
    assert!(zero.weight_matrix().iter().all(|v| *v == 0.0));

    let ys = [1.0, 4.0, -2.0, 0.5];
    let probe = fit_probe_on(&DMatrix::from_element(4, 1, 1.0), &column(&ys), 0.0).unwrap();
    assert!((probe.weights[0][0] - 0.875).abs() < 1e-14);

    let y = random(15, 1, 5);
    let mut last = f64::INFINITY;
    for g in [0.0, 0.01, 0.1, 1.0, 10.0, 100.0, 1e4] {
        let w = fit_probe_on(&psi, &y, g).unwrap().weight_matrix().norm();
        assert!(w < last, "gamma {g}");
        last = w;
    }
    assert!(last < 1e-3);
    assert!(fit_probe_on(&psi, &y, -1.0).is_err());
    assert!(fit_probe_on(&psi, &random(3, 1, 0), 1.0).is_err());
}

#[test]
fn singular_design_falls_back_with_warning() {
    let psi = DMatrix::from_fn(6, 2, |r, _| r as f64);
    let y = DMatrix::from_fn(6, 1, |r, _| 2.0 * r as f64);
    let probe = fit_probe_on(&psi, &y, 0.0).unwrap();
    assert_eq!(probe.warnings.len(), 1);
    assert!((probe.predict(&psi) - y).abs().max() < 1e-9);
    let p = fit_probe_on(&DMatrix::zeros(3, 2), &DMatrix::from_element(3, 1, 1.0), 0.0).unwrap();
    assert!(p.weight_matrix().iter().all(|v| *v == 0.0));
}

#[test]
fn predictions_are_rotation_invariant() {
    let pts = rows(&random(30, 3, 7));
    let y = rows(&random(30, 2, 8));
    let data = LabeledDataset::regression(pts.clone(), y).unwrap();
    let base = Raw(3);
    let q = random(3, 3, 9).qr().q();
    let rotated = Transformed { inner: &base, matrix: q };
    let test = rows(&random(10, 3, 10));
    let a = fit_probe(&base, &data, 0.2).unwrap().predict(&base.embed(&test).unwrap());
    let b = fit_probe(&rotated, &data, 0.2).unwrap().predict(&rotated.embed(&test).unwrap());
    assert!((a - b).abs().max() < 1e-9);
}

#[test]
fn effective_dimension_properties() {
    for seed in 0..5 {
        let k = 3 + seed as usize;
        let psi = random(40, k, 100 + seed);
        let sigma = psi.transpose() * &psi / 40.0;
        assert!((effective_dimension_cov(&sigma, 0.0).unwrap() - k as f64).abs() < 1e-12);
        let mut last = k as f64 + 1.0;
        for g in [0.0, 1e-3, 1e-2, 0.1, 1.0, 10.0, 1e6] {
            let e = effective_dimension_cov(&sigma, g).unwrap();
            assert!((0.0..=k as f64 + 1e-12).contains(&e));
            assert!(e < last, "seed {seed} gamma {g}");
            last = e;
        }
        assert!(last < 1e-4);
    }
    let pts = rows(&random(12, 2, 1));
    assert!((effective_dimension(&Raw(2), &pts, 0.0).unwrap() - 2.0).abs() < 1e-12);
    assert!(effective_dimension(&Raw(2), &[], 0.0).is_err());
}

#[test]
fn effective_dimension_plateaus_with_representation_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 40;
    let mut inputs = Vec::new();
    let mut views = Vec::new();
    for _ in 0..n {
        let x = vec![2.0 * normal(&mut rng), 0.3 * normal(&mut rng)];
        let vs = (0..2).map(|_| vec![x[0] + 0.8 * normal(&mut rng), x[1] + 0.8 * normal(&mut rng)]).collect();
        inputs.push(x);
        views.push(vs);
    }
    let data = AugmentedDataset::new(inputs.clone(), views).unwrap();
    let spec = KernelSpec::gaussian(1.0);
    let mut dims = Vec::new();
    let mut positives = 0;
    for k in [2, 4, 8, 16, 32] {
        let model = fit_representation(&data, &spec, 1.0, 0.05, k).unwrap();
        positives = model.eigenvalues.iter().filter(|v| **v > 0.0).count();
        dims.push(effective_dimension(&model, &inputs, 1e-6).unwrap());
    }
    assert!(positives < 32);
    assert!(dims.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{dims:?}");
    assert!(*dims.last().unwrap() <= positives as f64 + 1e-9);
    assert!((dims[4] - dims[3]).abs() < 1e-6, "{dims:?}");
}

#[test]
fn separable_clusters_classify_perfectly() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    for i in 0..40 {
        let c = i % 2;
        let centre = if c == 0 { -2.0 } else { 2.0 };
        pts.push(vec![centre + 0.3 * normal(&mut rng), 0.3 * normal(&mut rng), 1.0]);
        labels.push(c);
    }
    let data = LabeledDataset::classification(pts.clone(), labels.clone(), 2).unwrap();
    let probe = fit_probe(&Raw(3), &data, 1e-3).unwrap();
    for (p, l) in pts.iter().zip(&labels) {
        assert_eq!(classify(&probe, &Raw(3), p).unwrap(), *l);
    }
    assert_eq!(argmax(&[0.9, 0.1, 0.0, 0.0]), 0);
    assert_eq!(argmax(&[0.5, 0.5, 0.0, 0.0]), 0);
    assert!(LabeledDataset::classification(pts, labels, 1).is_err());
}

#[test]
fn excess_risk_cases() {
    let pts = rows(&random(10, 2, 2));
    let w = DMatrix::from_row_slice(2, 1, &[1.5, -0.5]);
    let y: Vec<Vec<f64>> = pts.iter().map(|p| vec![1.5 * p[0] - 0.5 * p[1]]).collect();
    let test = LabeledDataset::regression(pts.clone(), y.clone()).unwrap();
    let exact = RidgeProbe {
        weights: vec![vec![w[(0, 0)]], vec![w[(1, 0)]]],
        gamma: 0.0,
        representation_id: "raw".into(),
        warnings: vec![],
    };
    assert!(excess_risk(&exact, &Raw(2), &test, None).unwrap() < 1e-28);
    let zero = RidgeProbe {
        weights: vec![vec![0.0], vec![0.0]],
        ..exact.clone()
    };
    let norm = y.iter().map(|v| v[0] * v[0]).sum::<f64>() / y.len() as f64;
    assert!((excess_risk(&zero, &Raw(2), &test, Some(norm)).unwrap() - 1.0).abs() < 1e-12);
    assert!(excess_risk(&zero, &Raw(2), &test, Some(0.0)).is_err());
    let empty = LabeledDataset::regression(vec![], vec![]).unwrap();
    assert!(excess_risk(&zero, &Raw(2), &empty, None).is_err());
    let json = serde_json::to_string(&exact).unwrap();
    assert_eq!(serde_json::from_str::<RidgeProbe>(&json).unwrap(), exact);
}

#[test]
fn moment_based_risk_matches_sample_risk() {
    let psi = random(25, 3, 12);
    let q = random(25, 2, 13);
    let w = random(3, 2, 14);
    let n = 25.0;
    let direct = (&psi * &w - &q).norm_squared() / n;
    let p = psi.transpose() * &psi / n;
    let cross = psi.transpose() * &q / n;
    let e2 = q.norm_squared() / n;
    assert!((risk_from_moments(&w, &p, &cross, e2) - direct).abs() < 1e-12);
    let probe = fit_probe_moments(&p, &cross, 0.5).unwrap();
    let on = fit_probe_on(&psi, &q, 0.5).unwrap();
    assert!((probe.weight_matrix() - on.weight_matrix()).abs().max() < 1e-12);
}
