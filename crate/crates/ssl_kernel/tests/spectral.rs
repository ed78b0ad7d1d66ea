use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use ssl_kernel::kernelspace::KernelSpec;
use ssl_kernel::linalg;
use ssl_kernel::spectral_pretrain::*;

fn moons(n: usize, m: usize, sigma: f64, seed: u64) -> (AugmentedDataset, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut inputs = Vec::new();
    let mut views = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..n {
        let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let (z1, z2) = (th.cos(), th.sin());
        let side = usize::from(z1 > 0.0);
        let x = vec![
            z1 + noise.sample(&mut rng),
            z2 + side as f64 + noise.sample(&mut rng),
        ];
        let vs = (0..m)
            .map(|_| vec![x[0] + noise.sample(&mut rng), x[1] + noise.sample(&mut rng)])
            .collect();
        inputs.push(x);
        views.push(vs);
        labels.push(side);
    }
    (AugmentedDataset::new(inputs, views).unwrap(), labels)
}

fn random_points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
}

#[test]
fn t_hat_is_projector_with_exact_spectrum() {
    for (n, m) in [(1, 1), (3, 2), (4, 3), (5, 5)] {
        let t = build_t_hat(n, m);
        assert!(linalg::max_abs(&(&t * &t - &t)) <= 1e-12);
        for r in t.row_iter() {
            assert!((r.sum() - 1.0).abs() < 1e-14);
        }
        let e = linalg::eigh_desc(&t, 1e-9).unwrap();
        let ones = e.values.iter().filter(|v| (*v - 1.0).abs() < 1e-12).count();
        let zeros = e.values.iter().filter(|v| v.abs() < 1e-12).count();
        assert_eq!((ones, zeros), (n, n * (m - 1)));
    }
}

#[test]
fn t_lambda_limits() {
    let (data, _) = moons(6, 2, 0.1, 1);
    let kernel = KernelSpec::gaussian(0.5).build().unwrap();
    let mut b = OperatorBundle::from_dataset(&data, kernel.as_ref(), 1.0, 0.0).unwrap();
    assert!(linalg::max_abs(&(build_t_lambda(&b).unwrap() - &b.t_hat)) < 1e-15);
    b.beta = 0.0;
    let id = DMatrix::identity(12, 12);
    assert!(linalg::max_abs(&(build_t_lambda(&b).unwrap() - id)) < 1e-15);
    b.beta = 1.0;
    let mut prev: Option<Vec<f64>> = None;
    for lam in [0.0, 1e-3, 1e-1, 10.0] {
        b.lambda = lam;
        let t = build_t_lambda(&b).unwrap();
        assert!(linalg::max_abs(&(&t - t.transpose())) <= 1e-12);
        let e = linalg::eigh_desc(&t, 0.0).unwrap().values;
        if lam == 0.0 {
            assert!(e.iter().all(|v| *v > -1e-10 && *v < 1.0 + 1e-10));
        }
        if let Some(p) = prev {
            assert!(e.iter().zip(&p).all(|(a, b)| *a <= b + 1e-9));
        }
        prev = Some(e);
    }
    b.lambda = 1e6;
    let e = linalg::eigh_desc(&build_t_lambda(&b).unwrap(), 0.0).unwrap().values;
    assert!(e[0] <= 1.0 + 1e-9);
    assert!(e.iter().filter(|v| **v > 0.0).count() <= 12 - linalg::positive_range(&b.k_hat, 1e-10).unwrap().values.len() + 1);
}

#[test]
fn orthonormal_components_and_anchor_reproduction() {
    let (data, _) = moons(40, 2, 0.1, 2);
    let model = fit_representation(&data, &KernelSpec::gaussian(0.5), 1.0, 1e-3, 5).unwrap();
    let vals = anchor_values(&model).unwrap();
    let nm = vals.nrows() as f64;
    let mut unscaled = vals.clone();
    for (i, s) in model.scales.iter().enumerate() {
        assert!(*s > 0.0);
        unscaled.column_mut(i).scale_mut(1.0 / s);
    }
    let g = unscaled.transpose() * &unscaled / nm;
    assert!(linalg::max_abs(&(g - DMatrix::identity(5, 5))) < 1e-6);
    // evaluating one anchor goes through the same path as a fresh point
    let one = model.evaluate(&data.views[0][0]).unwrap();
    for i in 0..5 {
        assert!((one[i] - vals[(0, i)]).abs() < 1e-12);
    }
}

#[test]
fn loss_identity_and_optimality_against_random_competitors() {
    let (data, _) = moons(200, 2, 0.1, 3);
    let spec = KernelSpec::gaussian(0.5);
    let k = 5;
    for lambda in [1e-3, 0.0] {
        let model = fit_representation(&data, &spec, 1.0, lambda, k).unwrap();
        let kernel = spec.build().unwrap();
        let bundle = OperatorBundle::from_dataset(&data, kernel.as_ref(), 1.0, lambda).unwrap();
        let psi = anchor_values(&model).unwrap();
        let best = regularized_loss(&bundle, &psi).unwrap();
        let identity: f64 = k as f64 - model.eigenvalues.iter().map(|e| e.max(0.0).powi(2)).sum::<f64>();
        assert!((best - identity).abs() < 1e-6, "{best} vs {identity}");

        let range = linalg::positive_range(&bundle.k_hat, 1e-10).unwrap();
        let nm = psi.nrows();
        let r = range.values.len();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let g = DMatrix::from_fn(r, k, |_, _| StandardNormal.sample(&mut rng));
            let q = (&range.basis * g).qr().q() * (nm as f64).sqrt();
            let mut comp = q.clone();
            for (i, s) in model.scales.iter().enumerate() {
                comp.column_mut(i).scale_mut(*s);
            }
            let loss = regularized_loss(&bundle, &comp).unwrap();
            assert!(best <= loss, "competitor {loss} beat {best}");
        }
    }
}

#[test]
fn gauge_invariance_of_loss() {
    let (data, _) = moons(30, 3, 0.1, 4);
    let model = fit_representation(&data, &KernelSpec::gaussian(0.5), 0.7, 1e-3, 4).unwrap();
    let psi = anchor_values(&model).unwrap();
    let parents = data.parents();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let u = DMatrix::from_fn(4, 4, |_, _| StandardNormal.sample(&mut rng)).qr().q();
    for est in [PairEstimator::Unbiased, PairEstimator::PlugIn] {
        let a = empirical_loss_with(&psi, &parents, 0.7, est).unwrap();
        let b = empirical_loss_with(&(&psi * &u), &parents, 0.7, est).unwrap();
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn beta_zero_recovers_kernel_pca() {
    let (data, _) = moons(60, 2, 0.1, 6);
    let spec = KernelSpec::gaussian(0.5);
    let model = fit_representation(&data, &spec, 0.0, 1e-4, 6).unwrap();
    let views = data.flat_views();
    let g = ssl_kernel::kernelspace::gram(spec.build().unwrap().as_ref(), &views, 0.0).unwrap();
    let e = g.entries.symmetric_eigen();
    let mut order: Vec<usize> = (0..e.eigenvalues.len()).collect();
    order.sort_by(|a, b| e.eigenvalues[*b].partial_cmp(&e.eigenvalues[*a]).unwrap());
    let psi = anchor_values(&model).unwrap();
    for i in 0..6 {
        let oracle = e.eigenvectors.column(order[i]);
        let got = psi.column(i);
        let cos = (oracle.dot(&got) / (oracle.norm() * got.norm())).abs();
        assert!(cos >= 1.0 - 1e-6, "component {i}: cosine {cos}");
    }
}

#[test]
fn degenerate_single_view_spectrum() {
    let (data, _) = moons(10, 1, 0.1, 7);
    let model = fit_representation(&data, &KernelSpec::gaussian(0.5), 1.0, 0.0, 10).unwrap();
    assert!(model.eigenvalues.iter().all(|e| (e - 1.0).abs() < 1e-9));
}

#[test]
fn halfmoon_sign_split() {
    // 11 of seeds 0..12 reach 0.95 at this kernel scale; seed 8 gives 0.927
    let (data, labels) = moons(200, 2, 0.1, 0);
    let model = fit_representation(&data, &KernelSpec::gaussian(0.5), 1.0, 1e-3, 3).unwrap();
    let psi = anchor_values(&model).unwrap();
    let m = data.m();
    let rows = psi.nrows() as f64;
    let nontrivial = (0..3)
        .find(|&c| {
            let pos = psi.column(c).iter().filter(|v| **v > 0.0).count() as f64 / rows;
            pos.min(1.0 - pos) >= 0.1
        })
        .unwrap();
    let col = psi.column(nontrivial);
    let hits = (0..psi.nrows())
        .filter(|&a| (col[a] > 0.0) == (labels[a / m] == 1))
        .count() as f64
        / rows;
    let agree = hits.max(1.0 - hits);
    assert!(agree >= 0.95, "sign agreement {agree}");
}

#[test]
fn sign_gauge_and_zero_model() {
    let (data, _) = moons(12, 2, 0.1, 9);
    let model = fit_representation(&data, &KernelSpec::gaussian(0.5), 1.0, 1e-3, 3).unwrap();
    let mut flipped = model.clone();
    for a in flipped.alpha[1].iter_mut() {
        *a = -*a;
    }
    let pts = random_points(5, 2, 10);
    let a = model.evaluate_many(&pts).unwrap();
    let b = flipped.evaluate_many(&pts).unwrap();
    assert!((a.column(0) - b.column(0)).norm() < 1e-15);
    assert!((a.column(1) + b.column(1)).norm() < 1e-15);
    let mut zero = model.clone();
    zero.scales = vec![0.0; 3];
    assert!(zero.evaluate(&pts[0]).unwrap().norm() == 0.0);
}

#[test]
fn json_round_trip_preserves_outputs() {
    let (data, _) = moons(15, 2, 0.1, 12);
    let model = fit_representation(&data, &KernelSpec::exponential(0.6), 1.0, 1e-3, 4).unwrap();
    let back = RepresentationModel::from_json(&model.to_json().unwrap()).unwrap();
    let pts = random_points(7, 2, 13);
    let a = model.evaluate_many(&pts).unwrap();
    let b = back.evaluate_many(&pts).unwrap();
    assert!(linalg::max_abs(&(a - b)) <= 1e-12);
}

#[test]
fn padding_when_rank_is_short() {
    let x = vec![0.0, 0.0];
    let data = AugmentedDataset::new(vec![x.clone(), x.clone()], vec![vec![x.clone(), x.clone()], vec![x.clone(), x]]).unwrap();
    let model = fit_representation(&data, &KernelSpec::gaussian(1.0), 1.0, 0.0, 3).unwrap();
    assert_eq!(model.k(), 3);
    assert!(!model.warnings.is_empty());
    assert_eq!(model.scales[1], 0.0);
    assert_eq!(model.scales[2], 0.0);
}

#[test]
fn linear_scaling_flag() {
    let (data, _) = moons(20, 2, 0.1, 14);
    let opts = FitOptions {
        scaling: Scaling::Linear,
        ..FitOptions::default()
    };
    let model = fit_representation_with(&data, &KernelSpec::gaussian(0.5), 1.0, 1e-3, 3, opts).unwrap();
    for (s, e) in model.scales.iter().zip(&model.eigenvalues) {
        assert!((s - e.max(0.0)).abs() < 1e-15);
    }
}

#[test]
fn invalid_inputs() {
    let (data, _) = moons(5, 2, 0.1, 15);
    assert!(fit_representation(&data, &KernelSpec::gaussian(0.5), 1.0, 0.0, 11).is_err());
    assert!(fit_representation(&data, &KernelSpec::gaussian(0.5), 1.2, 0.0, 2).is_err());
    assert!(AugmentedDataset::new(vec![vec![0.0]], vec![vec![vec![0.0], vec![0.0, 1.0]]]).is_err());
    assert!(AugmentedDataset::new(vec![vec![0.0], vec![1.0]], vec![vec![vec![0.0]], vec![]]).is_err());
}
