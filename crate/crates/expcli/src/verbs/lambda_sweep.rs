//! Downstream error on the sphere as the pretraining regularization varies.
//!
//! Views are cyclic shifts, so weak regularization favours shift-invariant
//! functions (`f₃`) and strong regularization favours low-degree ones (`f₁`).

use nalgebra::DMatrix;
use rayon::prelude::*;

use ssl_kernel::downstream_probe::{column, fit_probe_on};
use ssl_kernel::spectral_pretrain::{fit_from_bundle, FitOptions, OperatorBundle};

use crate::config::LambdaSweepConfig;
use crate::data::{gen_sphere_task, SphereTask};
use crate::error::{CellContext, Result};
use crate::report::{num, Report, Table};
use crate::seeds::{stream, Purpose};
use crate::verbs::RunContext;

pub const TARGETS: [&str; 2] = ["f1", "f3"];

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub trial: usize,
    pub lambda: f64,
    pub target: &'static str,
    pub gamma: f64,
    pub rel_error: f64,
}

fn target(task: &SphereTask, name: &str) -> DMatrix<f64> {
    column(if name == "f1" { &task.f1 } else { &task.f3 })
}

fn mse(pred: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    (pred - y).norm_squared() / y.nrows() as f64
}

fn sweep_trial(cfg: &LambdaSweepConfig, seed: u64, trial: usize) -> Result<Vec<SweepPoint>> {
    let t = trial as u64;
    let train = gen_sphere_task(cfg.n, cfg.d, &cfg.shifts, &mut stream(seed, Purpose::Data, 0, t))?;
    let val = gen_sphere_task(cfg.n_val, cfg.d, &[0], &mut stream(seed, Purpose::Validation, 0, t))?;
    let test = gen_sphere_task(cfg.n_test, cfg.d, &[0], &mut stream(seed, Purpose::Test, 0, t))?;
    let kernel = cfg.kernel.build()?;
    let mut bundle = OperatorBundle::from_dataset(&train.data, kernel.as_ref(), cfg.beta, 0.0)?;
    let mut out = Vec::new();
    for &lambda in &cfg.lambdas {
        bundle.lambda = lambda;
        let model = fit_from_bundle(&train.data, &cfg.kernel, kernel.clone(), &bundle, cfg.k, FitOptions::default())
            .in_cell(|| format!("trial {trial} lambda {lambda:e}"))?;
        let psi = model.evaluate_many(&train.data.inputs)?;
        let psi_val = model.evaluate_many(&val.data.inputs)?;
        let psi_test = model.evaluate_many(&test.data.inputs)?;
        for name in TARGETS {
            let (y, yv, yt) = (target(&train, name), target(&val, name), target(&test, name));
            let mut best: Option<(f64, f64, f64)> = None;
            for &g in &cfg.gammas {
                let probe = fit_probe_on(&psi, &y, g)?;
                let v = mse(&probe.predict(&psi_val), &yv);
                if best.is_none_or(|b| v < b.0) {
                    best = Some((v, g, mse(&probe.predict(&psi_test), &yt)));
                }
            }
            let (_, gamma, err) = best.expect("gamma grid is non-empty");
            out.push(SweepPoint {
                trial,
                lambda,
                target: name,
                gamma,
                rel_error: err / (yt.norm_squared() / yt.nrows() as f64),
            });
        }
    }
    Ok(out)
}

pub fn run_sweep(cfg: &LambdaSweepConfig, seed: u64) -> Result<Vec<SweepPoint>> {
    cfg.validate()?;
    let per: Vec<Vec<SweepPoint>> = (0..cfg.trials).into_par_iter().map(|t| sweep_trial(cfg, seed, t)).collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// Mean relative error per `λ` for one target, in sweep order.
pub fn curve(points: &[SweepPoint], lambdas: &[f64], name: &str) -> Vec<f64> {
    lambdas
        .iter()
        .map(|&l| {
            let v: Vec<f64> = points.iter().filter(|p| p.lambda == l && p.target == name).map(|p| p.rel_error).collect();
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect()
}

pub fn run(ctx: &RunContext) -> Result<Report> {
    let cfg = &ctx.config.lambda_sweep;
    let points = run_sweep(cfg, ctx.seed)?;
    let mut rep = Report::default();
    let mut t = Table::new("lambda_sweep", &["trial", "lambda", "target", "gamma", "rel_error"]);
    for p in &points {
        t.push(vec![p.trial.to_string(), num(p.lambda), p.target.into(), num(p.gamma), num(p.rel_error)]);
    }
    rep.tables.push(t);

    let f1 = curve(&points, &cfg.lambdas, "f1");
    let f3 = curve(&points, &cfg.lambdas, "f3");
    let last = cfg.lambdas.len() - 1;
    let argmin = |c: &[f64]| c.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| cfg.lambdas[i]);
    rep.check(
        "invariant_target_wins_at_small_lambda",
        f3[0] < f1[0],
        format!("lambda {:e}: f3 {:.4} vs f1 {:.4}", cfg.lambdas[0], f3[0], f1[0]),
    );
    rep.check(
        "low_degree_target_improves_with_lambda",
        f1[last] <= 0.5 * f1[0],
        format!("f1 {:.4} at lambda {:e}, {:.4} at lambda {:e}", f1[0], cfg.lambdas[0], f1[last], cfg.lambdas[last]),
    );
    let bounded = points.iter().all(|p| p.rel_error.is_finite() && p.rel_error <= 1.5);
    rep.check("errors_bounded", bounded, "every relative error finite and at most 1.5".to_string());
    rep.set("f1_curve", &f1);
    rep.set("f3_curve", &f3);
    rep.set("f1_argmin_lambda", argmin(&f1));
    rep.set("f3_argmin_lambda", argmin(&f3));
    Ok(rep)
}
