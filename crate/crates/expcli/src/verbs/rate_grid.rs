//! Excess risk over a grid of pretraining and downstream sample sizes.
//!
//! The representation is solved in a Nyström feature space shared by every
//! cell. Population quantities (second moments of the pretraining task, the
//! label model, the risk) are computed once on large samples.
//!
//! Labels follow `η(x) = ¼ + s·Aᵀψ*(x)`, the projection of the arc-split
//! class probabilities onto the population representation `ψ*`, shrunk by `s`
//! so that it is a valid distribution on all but 0.1% of the test points.
//! Classes are drawn from `η` clipped at zero and renormalized.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use ssl_kernel::downstream_probe::{argmax, fit_probe_moments};
use ssl_kernel::kernelspace::{nystrom_features, relative_jitter, FeatureMap};
use ssl_kernel::linalg;
use ssl_kernel::sgd_pretrain::{closed_form, FeatureMoments, FeatureTable};

use crate::config::RateGridConfig;
use crate::data::{gen_halfmoon, halfmoon_points, sample_class, ArcLabels};
use crate::error::{CellContext, Result};
use crate::report::{num, Report, Table};
use crate::seeds::{stream, stream_id, Purpose};
use crate::slope::{fit_slope, mean, quantile_sorted, std_dev, RateFit};
use crate::verbs::RunContext;

const CLASSES: usize = 4;
const POPULATION_BATCH: usize = 10_000;

/// Fixed ingredients shared by every cell.
pub struct Population {
    pub features: FeatureMap,
    pub theta: DMatrix<f64>,
    /// `D × 4` map with `η(x) = ¼ + φ(x)ᵀB`.
    pub label_map: DMatrix<f64>,
    pub label_scale: f64,
    /// Second moment `E φφᵀ` and cross moment `E φηᵀ` on the test sample.
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub e2: f64,
    pub bayes_error: f64,
    pub clip_fraction: f64,
    pub projection_residual: f64,
    /// Features and clipped label probabilities for the 0-1 error.
    pub zo_features: DMatrix<f64>,
    pub zo_eta: DMatrix<f64>,
}

fn eta_rows(features: &DMatrix<f64>, label_map: &DMatrix<f64>) -> DMatrix<f64> {
    (features * label_map).add_scalar(1.0 / CLASSES as f64)
}

fn clip_normalize(mut eta: DMatrix<f64>) -> DMatrix<f64> {
    for mut row in eta.row_iter_mut() {
        row.apply(|v| *v = v.max(0.0));
        let s = row.sum();
        if s > 0.0 {
            row /= s;
        } else {
            row.fill(1.0 / CLASSES as f64);
        }
    }
    eta
}

fn pretrain_moments(cfg: &RateGridConfig, fm: &FeatureMap, n: usize, rng: &mut impl rand::Rng) -> Result<FeatureMoments> {
    let moon = gen_halfmoon(n, cfg.m, cfg.sigma, rng)?;
    Ok(FeatureTable::new(&moon.data, fm)?.moments())
}

fn solve_theta(cfg: &RateGridConfig, mom: &FeatureMoments) -> Result<DMatrix<f64>> {
    // the feature-space objective carries λ·tr Λ, twice the spectral penalty
    Ok(closed_form(mom, cfg.beta, 2.0 * cfg.lambda, cfg.k, 1e-10)?.theta)
}

pub fn build_population(cfg: &RateGridConfig, seed: u64) -> Result<Population> {
    let kernel = cfg.kernel.build()?;
    let landmarks = halfmoon_points(cfg.landmarks, cfg.sigma, &mut stream(seed, Purpose::Landmarks, 0, 0));
    let jitter = relative_jitter(kernel.as_ref(), &landmarks);
    let features = nystrom_features(kernel, &landmarks, jitter)?;

    let batches = cfg.population_inputs.div_ceil(POPULATION_BATCH);
    let parts: Vec<FeatureMoments> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let size = POPULATION_BATCH.min(cfg.population_inputs - b * POPULATION_BATCH);
            pretrain_moments(cfg, &features, size, &mut stream(seed, Purpose::Population, 0, b as u64))
        })
        .collect::<Result<_>>()?;
    let theta = solve_theta(cfg, &FeatureMoments::average(&parts)?)?;

    let labels = ArcLabels {
        sharpness: cfg.label_sharpness,
    };
    let test = halfmoon_points(cfg.test_points, cfg.sigma, &mut stream(seed, Purpose::Test, 0, 0));
    let ft = features.features(&test)?;
    let n = test.len() as f64;
    let target = DMatrix::from_fn(test.len(), CLASSES, |r, c| labels.eta(&test[r])[c] - 1.0 / CLASSES as f64);
    let psi = &ft * theta.transpose();
    let gram = psi.transpose() * &psi;
    let a0 = linalg::pinv_sym(&gram, 1e-12)? * psi.transpose() * &target;
    let dev = &psi * &a0;
    let mut worst: Vec<f64> = dev.row_iter().map(|r| -r.min()).collect();
    worst.sort_by(f64::total_cmp);
    let q = quantile_sorted(&worst, 0.999);
    let label_scale = if q > 0.0 { (0.25 / q).min(1.0) } else { 1.0 };
    let label_map = theta.transpose() * &a0 * label_scale;

    let eta = eta_rows(&ft, &label_map);
    let projection_residual = (&dev - &target).norm_squared() / n;
    let clip_fraction = eta.iter().filter(|v| **v < 0.0).count() as f64 / eta.len() as f64;
    let clipped = clip_normalize(eta.clone());
    let bayes_error = clipped.row_iter().map(|r| 1.0 - r.max()).sum::<f64>() / n;
    let p = ft.transpose() * &ft / n;
    let q = ft.transpose() * &eta / n;
    let e2 = eta.norm_squared() / n;

    let zo = halfmoon_points(cfg.zero_one_points, cfg.sigma, &mut stream(seed, Purpose::Test, 1, 0));
    let zo_features = features.features(&zo)?;
    let zo_eta = clip_normalize(eta_rows(&zo_features, &label_map));
    Ok(Population {
        features,
        theta,
        label_map,
        label_scale,
        p,
        q,
        e2,
        bayes_error,
        clip_fraction,
        projection_residual,
        zo_features,
        zo_eta,
    })
}

struct Pretrained {
    theta: DMatrix<f64>,
    tpt: DMatrix<f64>,
    tq: DMatrix<f64>,
    psi_zo: DMatrix<f64>,
}

struct Sample {
    p: DMatrix<f64>,
    q: DMatrix<f64>,
}

fn downstream_sample(pop: &Population, cfg: &RateGridConfig, n: usize, rng: &mut impl rand::Rng) -> Result<Sample> {
    let pts = halfmoon_points(n, cfg.sigma, rng);
    let f = pop.features.features(&pts)?;
    let eta = eta_rows(&f, &pop.label_map);
    let mut y = DMatrix::zeros(n, CLASSES);
    for (r, row) in eta.row_iter().enumerate() {
        let w: Vec<f64> = row.iter().copied().collect();
        y[(r, sample_class(&w, rng))] = 1.0;
    }
    Ok(Sample {
        p: f.transpose() * &f / n as f64,
        q: f.transpose() * y / n as f64,
    })
}

fn trace_prod(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

/// Ridge weights with `γ` picked on the validation sample.
fn tuned_weights(pre: &Pretrained, train: &Sample, val: &Sample, gammas: &[f64]) -> Result<DMatrix<f64>> {
    let tp = &pre.theta * &train.p;
    let sg = &tp * pre.theta.transpose();
    let b = &pre.theta * &train.q;
    let sv = &pre.theta * &val.p * pre.theta.transpose();
    let bv = &pre.theta * &val.q;
    let k = sg.nrows();
    let mut best: Option<(f64, DMatrix<f64>)> = None;
    for &g in gammas {
        let a = &sg + DMatrix::identity(k, k) * g;
        let w = match a.cholesky() {
            Some(ch) => ch.solve(&b),
            None => fit_probe_moments(&sg, &b, g)?.weight_matrix(),
        };
        let v = trace_prod(&w, &(&sv * &w)) - 2.0 * trace_prod(&w, &bv);
        if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
            best = Some((v, w));
        }
    }
    Ok(best.expect("gamma grid is non-empty").1)
}

fn population_risk(pop: &Population, pre: &Pretrained, w: &DMatrix<f64>) -> f64 {
    trace_prod(w, &(&pre.tpt * w)) - 2.0 * trace_prod(w, &pre.tq) + pop.e2
}

fn zero_one(pop: &Population, pre: &Pretrained, w: &DMatrix<f64>) -> f64 {
    let pred = &pre.psi_zo * w;
    let total: f64 = pred
        .row_iter()
        .enumerate()
        .map(|(r, row)| {
            let v: Vec<f64> = row.iter().copied().collect();
            1.0 - pop.zo_eta[(r, argmax(&v))]
        })
        .sum();
    total / pred.nrows() as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct CellStat {
    pub cell: usize,
    pub n_pre: usize,
    pub n_down: usize,
    pub pairs: usize,
    pub mean: f64,
    pub std: f64,
    pub zero_one: f64,
    pub zero_one_pairs: usize,
    /// Mean over downstream trials for each pretraining trial, and vice versa.
    #[serde(skip)]
    pub pre_means: Vec<f64>,
    #[serde(skip)]
    pub down_means: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Saturation {
    pub n_pre: usize,
    pub means: (f64, f64),
    pub stds: (f64, f64),
    pub detected: bool,
}

pub struct RateGridResult {
    pub cells: Vec<CellStat>,
    pub downstream: RateFit,
    pub pretraining: RateFit,
    pub saturation: Saturation,
    pub population: Population,
}

pub fn run_rate_grid(cfg: &RateGridConfig, seed: u64) -> Result<RateGridResult> {
    cfg.validate()?;
    let pop = build_population(cfg, seed)?;
    let np = cfg.n_pre.len();
    let pre: Vec<Vec<Pretrained>> = cfg
        .n_pre
        .iter()
        .enumerate()
        .map(|(ci, &n)| {
            (0..cfg.pre_trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = stream(seed, Purpose::Pretrain, ci as u64, t as u64);
                    let theta = pretrain_moments(cfg, &pop.features, n, &mut rng)
                        .and_then(|m| solve_theta(cfg, &m))
                        .in_cell(|| format!("pretrain n_pre={n} trial {t}"))?;
                    Ok(Pretrained {
                        tpt: &theta * &pop.p * theta.transpose(),
                        tq: &theta * &pop.q,
                        psi_zo: &pop.zo_features * theta.transpose(),
                        theta,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let zo_trials = cfg.zero_one_trials.min(cfg.down_trials);
    let mut cells: Vec<Option<CellStat>> = (0..np * cfg.n_down.len()).map(|_| None).collect();
    for (cj, &nd) in cfg.n_down.iter().enumerate() {
        // risks[t][ci * P + s], 0-1 errors[t][ci]
        let per_trial: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.down_trials)
            .into_par_iter()
            .map(|t| {
                let label = || format!("downstream n_down={nd} trial {t}");
                let train = downstream_sample(&pop, cfg, nd, &mut stream(seed, Purpose::Downstream, cj as u64, t as u64))
                    .in_cell(label)?;
                let val = downstream_sample(&pop, cfg, nd, &mut stream(seed, Purpose::Validation, cj as u64, t as u64))
                    .in_cell(label)?;
                let mut risks = Vec::with_capacity(np * cfg.pre_trials);
                let mut zo = Vec::new();
                for cell in &pre {
                    for (s, p) in cell.iter().enumerate() {
                        let w = tuned_weights(p, &train, &val, &cfg.gammas).in_cell(label)?;
                        risks.push(population_risk(&pop, p, &w));
                        if t < zo_trials && s == t % cfg.pre_trials {
                            zo.push(zero_one(&pop, p, &w));
                        }
                    }
                }
                Ok((risks, zo))
            })
            .collect::<Result<_>>()?;
        for ci in 0..np {
            let block = |t: usize| &per_trial[t].0[ci * cfg.pre_trials..(ci + 1) * cfg.pre_trials];
            let all: Vec<f64> = (0..cfg.down_trials).flat_map(|t| block(t).iter().copied()).collect();
            let down_means: Vec<f64> = (0..cfg.down_trials).map(|t| mean(block(t))).collect();
            let pre_means: Vec<f64> = (0..cfg.pre_trials)
                .map(|s| (0..cfg.down_trials).map(|t| block(t)[s]).sum::<f64>() / cfg.down_trials as f64)
                .collect();
            let zo: Vec<f64> = (0..zo_trials).map(|t| per_trial[t].1[ci]).collect();
            let cell = ci * cfg.n_down.len() + cj;
            cells[cell] = Some(CellStat {
                cell,
                n_pre: cfg.n_pre[ci],
                n_down: nd,
                pairs: all.len(),
                mean: mean(&all),
                std: std_dev(&all),
                zero_one: if zo.is_empty() { f64::NAN } else { mean(&zo) },
                zero_one_pairs: zo.len(),
                pre_means,
                down_means,
            });
        }
    }
    let cells: Vec<CellStat> = cells.into_iter().map(|c| c.expect("every cell filled")).collect();
    let nd = cfg.n_down.len();
    let at = |ci: usize, cj: usize| &cells[ci * nd + cj];

    let mut boot = stream(seed, Purpose::Bootstrap, 0, 0);
    let down_pts: Vec<(f64, Vec<f64>)> = (0..nd)
        .map(|cj| (cfg.n_down[cj] as f64, at(np - 1, cj).down_means.clone()))
        .collect();
    let downstream = fit_slope(&down_pts, cfg.bootstrap, cfg.confidence, &mut boot)?;
    let mut boot = stream(seed, Purpose::Bootstrap, 0, 1);
    let pre_pts: Vec<(f64, Vec<f64>)> = (0..np)
        .map(|ci| (cfg.n_pre[ci] as f64, at(ci, nd - 1).pre_means.clone()))
        .collect();
    let pretraining = fit_slope(&pre_pts, cfg.bootstrap, cfg.confidence, &mut boot)?;

    let si = cfg.n_pre.iter().position(|&n| n == cfg.saturation_n_pre).expect("validated");
    let (a, b) = (at(si, nd - 2), at(si, nd - 1));
    let saturation = Saturation {
        n_pre: cfg.saturation_n_pre,
        means: (a.mean, b.mean),
        stds: (a.std, b.std),
        detected: (a.mean - b.mean).abs() <= 2.0 * a.std.max(b.std),
    };
    Ok(RateGridResult {
        cells,
        downstream,
        pretraining,
        saturation,
        population: pop,
    })
}

pub fn run(ctx: &RunContext) -> Result<Report> {
    let cfg = &ctx.config.rate_grid;
    let res = run_rate_grid(cfg, ctx.seed)?;
    let mut rep = Report::default();

    let mut cells = Table::new(
        "rate_cells",
        &["cell", "n_pre", "n_down", "seed", "pairs", "mean_risk", "std_risk", "mean_zero_one", "zero_one_pairs"],
    );
    let mut trials = Table::new("rate_trials", &["cell", "axis", "trial", "seed", "stream", "mean_risk"]);
    let nd = cfg.n_down.len();
    for c in &res.cells {
        cells.push(vec![
            c.cell.to_string(),
            c.n_pre.to_string(),
            c.n_down.to_string(),
            ctx.seed.to_string(),
            c.pairs.to_string(),
            num(c.mean),
            num(c.std),
            num(c.zero_one),
            c.zero_one_pairs.to_string(),
        ]);
        let (ci, cj) = (c.cell / nd, c.cell % nd);
        for (t, v) in c.pre_means.iter().enumerate() {
            let id = stream_id(Purpose::Pretrain, ci as u64, t as u64);
            trials.push(vec![c.cell.to_string(), "pretrain".into(), t.to_string(), ctx.seed.to_string(), id.to_string(), num(*v)]);
        }
        for (t, v) in c.down_means.iter().enumerate() {
            let id = stream_id(Purpose::Downstream, cj as u64, t as u64);
            trials.push(vec![c.cell.to_string(), "downstream".into(), t.to_string(), ctx.seed.to_string(), id.to_string(), num(*v)]);
        }
    }
    let mut fits = Table::new("rate_fits", &["axis", "fixed_size", "size", "mean", "std", "trials"]);
    for (axis, fit, fixed) in [
        ("downstream", &res.downstream, cfg.n_pre[cfg.n_pre.len() - 1]),
        ("pretraining", &res.pretraining, cfg.n_down[nd - 1]),
    ] {
        for g in &fit.grid {
            fits.push(vec![axis.into(), fixed.to_string(), num(g.size), num(g.mean), num(g.std), g.trials.to_string()]);
        }
    }
    rep.tables = vec![cells, trials, fits];

    let d = &res.downstream;
    let p = &res.pretraining;
    rep.check(
        "downstream_slope",
        (-1.3..=-0.7).contains(&d.slope),
        format!("slope {:.3} in [-1.3, -0.7], {:.0}% CI [{:.3}, {:.3}]", d.slope, 100.0 * d.level, d.ci.0, d.ci.1),
    );
    rep.check(
        "pretraining_slope",
        (-0.8..=-0.3).contains(&p.slope),
        format!("slope {:.3} in [-0.8, -0.3], {:.0}% CI [{:.3}, {:.3}]", p.slope, 100.0 * p.level, p.ci.0, p.ci.1),
    );
    let s = &res.saturation;
    rep.check(
        "saturation",
        s.detected,
        format!(
            "n_pre={}: last two means {:.5} and {:.5}, std {:.5} and {:.5}",
            s.n_pre, s.means.0, s.means.1, s.stds.0, s.stds.1
        ),
    );
    rep.set("downstream_fit", d);
    rep.set("pretraining_fit", p);
    rep.set("saturation", s);
    let pop = &res.population;
    rep.set("label_scale", pop.label_scale);
    rep.set("bayes_error", pop.bayes_error);
    rep.set("label_clip_fraction", pop.clip_fraction);
    rep.set("label_projection_residual", pop.projection_residual);
    Ok(rep)
}
