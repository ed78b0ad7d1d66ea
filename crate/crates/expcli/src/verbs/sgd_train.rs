//! Projected SGD on Nyström features of half-moon data, compared with the
//! closed-form optimum of the same objective.

use rand::RngCore;

use ssl_kernel::kernelspace::{nystrom_features, relative_jitter};
use ssl_kernel::sgd_pretrain::{
    closed_form, feature_loss, run_sgd_on, threshold_rank, FeatureTable, SgdConfig, SgdResult,
};

use crate::config::SgdTrainConfig;
use crate::data::{gen_halfmoon, halfmoon_points};
use crate::error::Result;
use crate::report::{num, Report, Table};
use crate::seeds::{stream, Purpose};
use crate::verbs::RunContext;

/// Largest accepted relative excess of the averaged iterate over the optimum.
pub const MAX_GAP: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct SgdOutcome {
    pub result: SgdResult,
    pub sgd_loss: f64,
    /// Optimum over all PSD matrices, the set SGD searches.
    pub relaxed_loss: f64,
    pub relative_gap: f64,
    /// Positive eigenvalues of the whitened problem.
    pub positive: usize,
    pub truncated_loss: f64,
    /// Optimum over rank-`k` matrices.
    pub rank_k_loss: f64,
    pub truncated_gap: f64,
}

fn gap(got: f64, best: f64) -> f64 {
    (got - best) / best.abs().max(f64::MIN_POSITIVE)
}

pub fn run_training(cfg: &SgdTrainConfig, seed: u64) -> Result<SgdOutcome> {
    let kernel = cfg.kernel.build()?;
    let landmarks = halfmoon_points(cfg.landmarks, cfg.sigma, &mut stream(seed, Purpose::Landmarks, 0, 0));
    let jitter = relative_jitter(kernel.as_ref(), &landmarks);
    let fm = nystrom_features(kernel, &landmarks, jitter)?;
    let moon = gen_halfmoon(cfg.n, cfg.views, cfg.sigma, &mut stream(seed, Purpose::Data, 0, 0))?;
    let table = FeatureTable::new(&moon.data, &fm)?;
    let sgd = SgdConfig {
        beta: cfg.beta,
        lambda: cfg.lambda,
        k: cfg.k,
        schedule: cfg.schedule.clone(),
        step_scale: cfg.step_scale,
        steps: cfg.steps,
        m: cfg.m,
        seed: stream(seed, Purpose::Sgd, 0, 0).next_u64(),
        averaging_window: cfg.averaging_window,
        trace_every: cfg.trace_every,
    };
    let result = run_sgd_on(&table, &sgd)?;
    let mom = table.moments();
    let loss = |l: &nalgebra::DMatrix<f64>| feature_loss(&mom, l, cfg.beta, cfg.lambda, cfg.k);
    let relaxed = closed_form(&mom, cfg.beta, cfg.lambda, table.dim(), 1e-10)?;
    let rank_k = closed_form(&mom, cfg.beta, cfg.lambda, cfg.k, 1e-10)?;
    let sgd_loss = loss(&result.param.lambda_mat);
    let relaxed_loss = loss(&relaxed.lambda_mat());
    let rank_k_loss = loss(&rank_k.lambda_mat());
    let truncated_loss = loss(&threshold_rank(&result.param, cfg.k)?.lambda_mat);
    Ok(SgdOutcome {
        result,
        sgd_loss,
        relaxed_loss,
        relative_gap: gap(sgd_loss, relaxed_loss),
        positive: relaxed.eigenvalues.iter().filter(|e| **e > 0.0).count(),
        truncated_loss,
        rank_k_loss,
        truncated_gap: gap(truncated_loss, rank_k_loss),
    })
}

pub fn run(ctx: &RunContext) -> Result<Report> {
    let cfg = &ctx.config.sgd;
    let out = run_training(cfg, ctx.seed)?;
    let mut trace = Table::new("sgd_trace", &["step", "loss", "hs_norm", "rank"]);
    for p in &out.result.trace {
        trace.push(vec![p.step.to_string(), num(p.loss), num(p.hs_norm), p.rank.to_string()]);
    }
    let mut rep = Report::default();
    rep.tables.push(trace);
    rep.check(
        "closed_form_gap",
        out.relative_gap <= MAX_GAP,
        format!(
            "averaged loss {:.6} vs PSD optimum {:.6}, relative gap {:.4} (max {MAX_GAP})",
            out.sgd_loss, out.relaxed_loss, out.relative_gap
        ),
    );
    rep.check(
        "rank_k_truncation_gap",
        out.truncated_gap <= MAX_GAP,
        format!(
            "top-{} truncation loss {:.6} vs rank-{} optimum {:.6}, relative gap {:.4}",
            cfg.k, out.truncated_loss, cfg.k, out.rank_k_loss, out.truncated_gap
        ),
    );
    rep.set("sgd_loss", out.sgd_loss);
    rep.set("psd_optimum_loss", out.relaxed_loss);
    rep.set("relative_gap", out.relative_gap);
    rep.set("positive_eigenvalues", out.positive);
    rep.set("truncated_loss", out.truncated_loss);
    rep.set("rank_k_optimum_loss", out.rank_k_loss);
    rep.set("truncated_gap", out.truncated_gap);
    rep.set("step_scale", out.result.step_scale);
    rep.set("final_rank", out.result.param.rank(1e-10));
    Ok(rep)
}
