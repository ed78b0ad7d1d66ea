use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use expcli::data::*;
use expcli::seeds::{stream, Purpose};
use expcli::slope::fit_slope;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn noiseless_views_equal_inputs() {
    let moon = gen_halfmoon(50, 3, 0.0, &mut rng(1)).unwrap();
    for (x, vs) in moon.data.inputs.iter().zip(&moon.data.views) {
        assert!(vs.iter().all(|v| v == x));
        let side = usize::from(x[0] > 0.0);
        let centre = side as f64;
        assert!(((x[0]).hypot(x[1] - centre) - 1.0).abs() < 1e-12);
    }
    assert!(gen_halfmoon(0, 2, 0.1, &mut rng(0)).is_err());
    assert!(gen_halfmoon(5, 2, -0.1, &mut rng(0)).is_err());
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut j = i;
    while parent[j] != r {
        let next = parent[j];
        parent[j] = r;
        j = next;
    }
    r
}

#[test]
fn single_linkage_recovers_the_two_moons() {
    let sigma = 0.1;
    let moon = gen_halfmoon(2000, 2, sigma, &mut rng(2)).unwrap();
    let x = &moon.data.inputs;
    let n = x.len();
    let scale = 3.0 * sigma;
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if (x[i][0] - x[j][0]).hypot(x[i][1] - x[j][1]) <= scale {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    let mut sizes = std::collections::HashMap::new();
    for r in &roots {
        *sizes.entry(*r).or_insert(0usize) += 1;
    }
    let mut big: Vec<(usize, usize)> = sizes.iter().map(|(r, s)| (*s, *r)).collect();
    big.sort_unstable_by(|a, b| b.cmp(a));
    assert!(big[0].0 + big[1].0 >= n * 99 / 100, "{:?}", &big[..4.min(big.len())]);
    for &(_, root) in &big[..2] {
        let labels: Vec<usize> = (0..n).filter(|&i| roots[i] == root).map(|i| moon.moon[i]).collect();
        assert!(labels.iter().all(|l| *l == labels[0]));
    }
    let (a, b) = (big[0].1, big[1].1);
    let mut gap = f64::INFINITY;
    for i in (0..n).filter(|&i| roots[i] == a) {
        for j in (0..n).filter(|&j| roots[j] == b) {
            gap = gap.min((x[i][0] - x[j][0]).hypot(x[i][1] - x[j][1]));
        }
    }
    assert!(gap > scale, "gap {gap}");
}

#[test]
fn fixed_seed_gives_identical_data() {
    let a = gen_halfmoon(30, 2, 0.1, &mut stream(5, Purpose::Data, 0, 0)).unwrap();
    let b = gen_halfmoon(30, 2, 0.1, &mut stream(5, Purpose::Data, 0, 0)).unwrap();
    assert_eq!(a.data.inputs, b.data.inputs);
    assert_eq!(a.data.views, b.data.views);
    let c = gen_halfmoon(30, 2, 0.1, &mut stream(5, Purpose::Data, 0, 1)).unwrap();
    assert_ne!(a.data.inputs, c.data.inputs);
    let s = gen_sphere_task(20, 8, &[-1, 0, 1], &mut rng(3)).unwrap();
    let t = gen_sphere_task(20, 8, &[-1, 0, 1], &mut rng(3)).unwrap();
    assert_eq!(s.data.views, t.data.views);
    assert_eq!(s.f3, t.f3);
}

#[test]
fn sphere_targets_and_views() {
    let d = 8;
    let task = gen_sphere_task(200, d, &[-1, 0, 1], &mut rng(4)).unwrap();
    let mut moved = 0.0f64;
    for (i, x) in task.data.inputs.iter().enumerate() {
        assert_eq!(task.data.views[i][1], *x);
        assert_eq!(task.data.views[i][0], cyclic_shift(x, -1));
        for s in 1..d as i64 {
            let y = cyclic_shift(x, s);
            assert!((target_f3(&y) - task.f3[i]).abs() <= 1e-12);
            moved = moved.max((target_f1(&y) - task.f1[i]).abs());
        }
    }
    assert!(moved > 1e-3, "{moved}");
    assert!(gen_sphere_task(10, 3, &[0], &mut rng(0)).is_err());
}

#[test]
fn sphere_marginals_are_centred() {
    let (n, d) = (1500, 8);
    let task = gen_sphere_task(n, d, &[0], &mut rng(6)).unwrap();
    let sd = 1.0 / ((d * n) as f64).sqrt();
    for j in 0..d {
        let m = task.data.inputs.iter().map(|x| x[j]).sum::<f64>() / n as f64;
        assert!(m.abs() <= 3.0 * sd, "coordinate {j}: {m}");
    }
    for x in &task.data.inputs {
        assert!((x.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn arc_labels_follow_the_moons() {
    let lab = ArcLabels { sharpness: 1.0 };
    let left = lab.eta(&[-1.0, 0.0]);
    assert_eq!(left, [0.5, 0.5, 0.0, 0.0]);
    let top = lab.eta(&[0.0, 2.0]);
    assert!((top[2] - 1.0).abs() < 1e-12);
    let mut r = rng(7);
    let mut agree = 0;
    for _ in 0..500 {
        let (x, side) = halfmoon_point(0.1, &mut r);
        let e = lab.eta(&x);
        agree += usize::from((e[2] + e[3] > 0.5) == (side == 1));
    }
    assert!(agree >= 495, "{agree}");
}

#[test]
fn slope_interval_covers_the_true_rate() {
    let sizes = [32.0, 64.0, 128.0, 256.0, 512.0, 1024.0];
    let mut covered = 0;
    for rep in 0..100u64 {
        let mut r = rng(1000 + rep);
        let pts: Vec<(f64, Vec<f64>)> = sizes
            .iter()
            .map(|&s| {
                let trials = (0..20)
                    .map(|_| {
                        let e: f64 = StandardNormal.sample(&mut r);
                        (1.0 + 0.1 * e) / s
                    })
                    .collect();
                (s, trials)
            })
            .collect();
        let fit = fit_slope(&pts, 200, 0.99, &mut r).unwrap();
        covered += usize::from(fit.ci.0 <= -1.0 && -1.0 <= fit.ci.1);
    }
    assert!(covered >= 95, "{covered}/100");
}
