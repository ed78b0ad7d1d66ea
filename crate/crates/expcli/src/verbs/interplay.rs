//! Which parity the regularized objective prefers as `λ` grows.
//!
//! Each non-constant parity scores `β·t + (1−β) − λ/k` from its augmentation
//! eigenvalue `t` and kernel eigenvalue `k`; the best positive score wins.

use ssl_kernel::analytic_spectra::{interplay_score, k_eig_dot, regime_crossovers, select, ParitySubset};
use ssl_kernel::kernelspace::h_registry;

use crate::config::InterplayConfig;
use crate::error::{config_err, Result};
use crate::report::{num, Report, Table};
use crate::verbs::RunContext;

#[derive(Debug, Clone)]
pub struct Candidate {
    pub subset: ParitySubset,
    pub t_eig: f64,
    pub k_eig: f64,
}

pub fn candidates(cfg: &InterplayConfig) -> Result<Vec<Candidate>> {
    let law = cfg.law.build()?;
    law.validate(cfg.d)?;
    let h = h_registry().build(&cfg.h, &())?;
    let mut k_by_card = Vec::with_capacity(cfg.d + 1);
    for ell in 0..=cfg.d {
        k_by_card.push(k_eig_dot(h.as_ref(), cfg.d, ell, cfg.normalize)?);
    }
    let mut out = Vec::new();
    for s in ParitySubset::all(cfg.d) {
        if s.card() == 0 {
            continue;
        }
        if let Some(t) = law.parity_eigenvalue(&s) {
            out.push(Candidate {
                t_eig: t,
                k_eig: k_by_card[s.card()],
                subset: s,
            });
        }
    }
    if out.is_empty() {
        return config_err(format!("law `{}` has no parity eigenfunctions", law.name()));
    }
    Ok(out)
}

/// Selected candidate index at each `λ`.
pub fn selection_path(cfg: &InterplayConfig, cands: &[Candidate]) -> Vec<Option<usize>> {
    cfg.lambdas
        .iter()
        .map(|&l| {
            let scores: Vec<f64> = cands.iter().map(|c| interplay_score(cfg.beta, l, c.t_eig, c.k_eig)).collect();
            select(&scores)
        })
        .collect()
}

fn label(s: &ParitySubset) -> String {
    let parts: Vec<String> = s.indices().iter().map(|i| i.to_string()).collect();
    format!("{{{}}}", parts.join(" "))
}

fn opt(i: Option<usize>) -> String {
    i.map_or_else(|| "none".into(), |v| v.to_string())
}

pub fn run(ctx: &RunContext) -> Result<Report> {
    let cfg = &ctx.config.interplay;
    if cfg.lambdas.is_empty() || cfg.regime_t.len() != cfg.regime_k.len() {
        return config_err("interplay needs lambdas and matching regime_t / regime_k");
    }
    let cands = candidates(cfg)?;
    let path = selection_path(cfg, &cands);
    let mut grid = Table::new("interplay", &["lambda", "subset", "card", "diam", "t_eig", "k_eig", "score", "selected"]);
    for (&l, sel) in cfg.lambdas.iter().zip(&path) {
        for (i, c) in cands.iter().enumerate() {
            grid.push(vec![
                num(l),
                label(&c.subset),
                c.subset.card().to_string(),
                c.subset.cyclic_diam().to_string(),
                num(c.t_eig),
                num(c.k_eig),
                num(interplay_score(cfg.beta, l, c.t_eig, c.k_eig)),
                (*sel == Some(i)).to_string(),
            ]);
        }
    }

    let mut regimes = Table::new("regimes", &["function", "t_eig", "k_eig"]);
    for (i, (t, k)) in cfg.regime_t.iter().zip(&cfg.regime_k).enumerate() {
        regimes.push(vec![i.to_string(), num(*t), num(*k)]);
    }
    let cross = regime_crossovers(cfg.beta, &cfg.regime_t, &cfg.regime_k);
    let mut crossovers = Table::new("crossovers", &["lambda", "from", "to"]);
    for (l, from, to) in &cross {
        crossovers.push(vec![num(*l), opt(*from), opt(*to)]);
    }

    let mut rep = Report::default();
    let ks: Vec<f64> = path.iter().flatten().map(|&i| cands[i].k_eig).collect();
    rep.check(
        "selection_moves_to_larger_kernel_eigenvalues",
        ks.windows(2).all(|w| w[1] >= w[0]),
        format!("selected kernel eigenvalues {ks:?}"),
    );
    let increasing = cross.windows(2).all(|w| w[1].0 > w[0].0);
    let chained = cross.windows(2).all(|w| w[0].2 == w[1].1);
    rep.check(
        "crossovers_ordered",
        increasing && chained,
        format!("{} regime changes", cross.len()),
    );
    rep.tables = vec![grid, regimes, crossovers];
    let sel: Vec<Option<String>> = path.iter().map(|s| s.map(|i| label(&cands[i].subset))).collect();
    rep.set("selected", sel);
    rep.set("crossover_lambdas", cross.iter().map(|c| c.0).collect::<Vec<_>>());
    Ok(rep)
}
