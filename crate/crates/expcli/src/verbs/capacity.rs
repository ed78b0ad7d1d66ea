//! Leading eigenfunctions on a small half-moon sample with and without
//! regularization.
//!
//! With `λ = 0` every function constant across the views of one input is a
//! top eigenfunction, and the canonical basis of that space concentrates on
//! single inputs. A small `λ` selects smooth functions that follow the moons.

use rayon::prelude::*;

use ssl_kernel::spectral_pretrain::{
    fit_from_bundle, spectral_components, FitOptions, OperatorBundle, DEFAULT_TIE_TOL,
};

use crate::config::CapacityConfig;
use crate::data::{gen_halfmoon, HalfMoon};
use crate::error::{config_err, CellContext, Result};
use crate::report::{num, Report, Table};
use crate::seeds::{stream, Purpose};
use crate::verbs::RunContext;

/// Collapse is expected at or below this level.
pub const COLLAPSE_LAMBDA: f64 = 1e-8;
const MIN_MINORITY: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct Component {
    pub lambda: f64,
    pub index: usize,
    pub eigenvalue: f64,
    /// Largest share of the squared coefficients owned by one input's views.
    pub max_input_mass: f64,
    /// Smaller of the positive and negative fractions over the anchors.
    pub minority_fraction: f64,
    /// Best agreement between the sign at the anchors and the moon label of
    /// their input, in `[½, 1]`.
    pub sign_agreement: f64,
    pub values: Vec<f64>,
}

pub fn components(moon: &HalfMoon, cfg: &CapacityConfig, lambda: f64) -> Result<Vec<Component>> {
    let data = &moon.data;
    let kernel = cfg.kernel.build()?;
    let bundle = OperatorBundle::from_dataset(data, kernel.as_ref(), cfg.beta, lambda)?;
    let (pairs, _) = spectral_components(&bundle, DEFAULT_TIE_TOL)?;
    let model = fit_from_bundle(data, &cfg.kernel, kernel, &bundle, cfg.k, FitOptions::default())?;
    let psi = model.evaluate_many(&model.anchors)?;
    let m = data.m();
    let moons: Vec<usize> = data.parents().iter().map(|&i| moon.moon[i]).collect();
    let n = moons.len() as f64;
    let avail = cfg.k.min(pairs.values.len());
    Ok((0..avail)
        .map(|i| {
            let v = pairs.vectors.column(i);
            let total = v.norm_squared();
            let max_input_mass = (0..data.n())
                .map(|a| v.rows(a * m, m).norm_squared() / total)
                .fold(0.0, f64::max);
            let values: Vec<f64> = psi.column(i).iter().copied().collect();
            let pos = values.iter().filter(|x| **x > 0.0).count() as f64 / n;
            let agree = values
                .iter()
                .zip(&moons)
                .filter(|(x, s)| (**x > 0.0) == (**s == 1))
                .count() as f64
                / n;
            Component {
                lambda,
                index: i,
                eigenvalue: pairs.values[i],
                max_input_mass,
                minority_fraction: pos.min(1.0 - pos),
                sign_agreement: agree.max(1.0 - agree),
                values,
            }
        })
        .collect())
}

/// The first component whose sign splits the inputs non-trivially.
pub fn splitting_component(comps: &[Component]) -> Option<&Component> {
    comps.iter().find(|c| c.minority_fraction >= MIN_MINORITY)
}

pub fn run_capacity(cfg: &CapacityConfig, seed: u64) -> Result<(HalfMoon, Vec<Vec<Component>>)> {
    if cfg.lambdas.is_empty() || cfg.k == 0 {
        return config_err("capacity demo needs at least one lambda and k ≥ 1");
    }
    let moon = gen_halfmoon(cfg.n, cfg.m, cfg.sigma, &mut stream(seed, Purpose::Data, 0, 0))?;
    let per = cfg
        .lambdas
        .par_iter()
        .map(|&l| components(&moon, cfg, l).in_cell(|| format!("lambda {l:e}")))
        .collect::<Result<Vec<_>>>()?;
    Ok((moon, per))
}

pub fn run(ctx: &RunContext) -> Result<Report> {
    let cfg = &ctx.config.capacity;
    let (moon, per) = run_capacity(cfg, ctx.seed)?;
    let mut rep = Report::default();
    let mut summary = Table::new(
        "capacity",
        &["lambda", "component", "eigenvalue", "max_input_mass", "minority_fraction", "sign_agreement"],
    );
    let mut dump = Table::new("eigenfunctions", &["lambda", "component", "anchor", "input", "x0", "x1", "moon", "value"]);
    let parents = moon.data.parents();
    let anchors = moon.data.flat_views();
    for comps in &per {
        for c in comps {
            summary.push(vec![
                num(c.lambda),
                c.index.to_string(),
                num(c.eigenvalue),
                num(c.max_input_mass),
                num(c.minority_fraction),
                num(c.sign_agreement),
            ]);
            for (a, v) in c.values.iter().enumerate() {
                let x = &anchors[a];
                dump.push(vec![
                    num(c.lambda),
                    c.index.to_string(),
                    a.to_string(),
                    parents[a].to_string(),
                    num(x[0]),
                    num(x[1]),
                    moon.moon[parents[a]].to_string(),
                    num(*v),
                ]);
            }
        }
    }
    rep.tables = vec![summary, dump];

    for (comps, &lambda) in per.iter().zip(&cfg.lambdas) {
        if lambda <= COLLAPSE_LAMBDA {
            let mass = comps.first().map_or(0.0, |c| c.max_input_mass);
            rep.check(
                &format!("collapse_lambda_{lambda:e}"),
                mass >= 0.9,
                format!("leading component puts {mass:.4} of its mass on one input"),
            );
        } else {
            let (passed, detail) = match splitting_component(comps) {
                Some(c) => (
                    c.sign_agreement >= 0.9,
                    format!("component {} sign matches the moons on {:.3} of anchors", c.index, c.sign_agreement),
                ),
                None => (false, "no component splits the inputs".to_string()),
            };
            rep.check(&format!("moons_lambda_{lambda:e}"), passed, detail);
        }
    }
    rep.set("n", cfg.n);
    rep.set("lambdas", &cfg.lambdas);
    Ok(rep)
}
