//! Closed-form hypercube spectra against exhaustively built operators.

use nalgebra::DMatrix;

use ssl_kernel::analytic_spectra::{
    binom, brute_force_k, brute_force_t, eigen_residual, gegenbauer_hypercube, hypercube_tau, k_eig_cnn,
    k_eig_dot, parity_vector, t_eig_bitflip, t_eig_crop1d, t_eig_indexflip, t_eig_translate, uniform_window,
    AugmentationLaw, CyclicParity, LawSpec, ParitySubset,
};
use ssl_kernel::kernelspace::{h_registry, KernelSpec};

use crate::config::OracleConfig;
use crate::error::Result;
use crate::report::{num, Report, Table};
use crate::slope::ols;
use crate::verbs::RunContext;

const RANGE_TOL: f64 = 1e-10;
const GEGENBAUER_D: usize = 10;
const GEGENBAUER_TOL: f64 = 1e-10;
const FC_DIMS: [usize; 4] = [8, 16, 32, 64];
const FC_SLOPE_TOL: f64 = 0.25;

#[derive(Debug, Clone)]
pub struct OracleRow {
    pub group: &'static str,
    pub check: String,
    pub params: String,
    pub max_err: f64,
    pub tol: f64,
}

impl OracleRow {
    pub fn passed(&self) -> bool {
        self.max_err <= self.tol
    }
}

fn parity_residual(t: &DMatrix<f64>, d: usize, eig: impl Fn(&ParitySubset) -> f64) -> f64 {
    ParitySubset::all(d)
        .iter()
        .map(|s| eigen_residual(t, &parity_vector(s), eig(s)))
        .fold(0.0, f64::max)
}

fn indexflip_residual(t: &DMatrix<f64>, d: usize, p: f64) -> f64 {
    let mut err: f64 = 0.0;
    for s in ParitySubset::all(d) {
        let m = s.mirror();
        let (a, b) = (parity_vector(&s), parity_vector(&m));
        let sym: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        err = err.max(eigen_residual(t, &sym, t_eig_indexflip(p, true)));
        if m != s {
            let anti: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            err = err.max(eigen_residual(t, &anti, t_eig_indexflip(p, false)));
        }
    }
    err
}

fn translate_residual(t: &DMatrix<f64>, d: usize, probs: &[f64]) -> Result<f64> {
    let mut err: f64 = 0.0;
    for s in ParitySubset::all(d) {
        if s.card() == 0 || s.orbit_size() < d {
            continue;
        }
        for m in 0..d {
            let cp = CyclicParity::new(s, m)?;
            let e = t_eig_translate(probs, &cp)?;
            let (re, im): (Vec<f64>, Vec<f64>) = (0..1u64 << d).map(|x| cp.eval(x)).unzip();
            err = err.max(eigen_residual(t, &re, e.value)).max(eigen_residual(t, &im, e.value));
        }
    }
    Ok(err)
}

fn range_violation(t: &DMatrix<f64>) -> f64 {
    t.clone()
        .symmetric_eigenvalues()
        .iter()
        .map(|&v| (-v).max(v - 1.0).max(0.0))
        .fold(0.0, f64::max)
}

fn law_rows(cfg: &OracleConfig, laws: &[(LawSpec, String)], k: &DMatrix<f64>, rows: &mut Vec<OracleRow>) -> Result<()> {
    let d = cfg.d;
    for (spec, params) in laws {
        let law: Box<dyn AugmentationLaw> = spec.build()?;
        let t = brute_force_t(law.as_ref(), d)?;
        let err = match spec.kind.as_str() {
            "bitflip" => {
                let p = spec.p.unwrap_or(0.0);
                parity_residual(&t, d, |s| t_eig_bitflip(p, s))
            }
            "crop1d" => {
                let w = spec.w.unwrap_or(1);
                parity_residual(&t, d, |s| t_eig_crop1d(w, s))
            }
            "indexflip" => indexflip_residual(&t, d, spec.p.unwrap_or(0.0)),
            _ => translate_residual(&t, d, spec.probs.as_deref().unwrap_or(&[]))?,
        };
        rows.push(OracleRow {
            group: "equivalence",
            check: format!("{}_eigenvalues", spec.kind),
            params: params.clone(),
            max_err: err,
            tol: cfg.tol,
        });
        rows.push(OracleRow {
            group: "operators",
            check: "t_spectrum_in_unit_interval".into(),
            params: format!("{} {params}", spec.kind),
            max_err: range_violation(&t),
            tol: RANGE_TOL,
        });
        rows.push(OracleRow {
            group: "operators",
            check: "t_k_commute".into(),
            params: format!("{} {params}", spec.kind),
            max_err: (&t * k - k * &t).abs().max(),
            tol: cfg.tol,
        });
    }
    Ok(())
}

fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    ols(&lx, &ly).0
}

/// Every oracle comparison, one row each.
pub fn oracle_rows(cfg: &OracleConfig) -> Result<Vec<OracleRow>> {
    let d = cfg.d;
    let mut laws: Vec<(LawSpec, String)> = Vec::new();
    laws.extend(cfg.bitflip_p.iter().map(|&p| (LawSpec::bitflip(p), format!("p={p}"))));
    laws.extend(cfg.crop_w.iter().map(|&w| (LawSpec::crop1d(w), format!("w={w}"))));
    laws.extend(cfg.indexflip_p.iter().map(|&p| (LawSpec::indexflip(p), format!("p={p}"))));
    for &delta in &cfg.translate_delta {
        laws.push((LawSpec::translate(uniform_window(d, delta)?), format!("delta={delta}")));
    }
    let mut rows = Vec::new();
    let ntk = brute_force_k(&KernelSpec::dot_product("relu_ntk", true), d)?;
    law_rows(cfg, &laws, &ntk, &mut rows)?;

    for name in &cfg.h {
        let h = h_registry().build(name, &())?;
        let k = brute_force_k(&KernelSpec::dot_product(name, true), d)?;
        let nus: Vec<f64> = (0..=d).map(|l| k_eig_dot(h.as_ref(), d, l, true)).collect::<ssl_kernel::Result<_>>()?;
        rows.push(OracleRow {
            group: "equivalence",
            check: "dot_product_eigenvalues".into(),
            params: format!("h={name}"),
            max_err: parity_residual(&k, d, |s| nus[s.card()]),
            tol: cfg.tol,
        });
    }
    let h = h_registry().build("relu_ntk", &())?;
    let k = brute_force_k(&KernelSpec::cnn("relu_ntk", cfg.cnn_q), d)?;
    let mut cnn = Vec::new();
    for s in ParitySubset::all(d) {
        cnn.push(k_eig_cnn(h.as_ref(), d, cfg.cnn_q, &s)?);
    }
    rows.push(OracleRow {
        group: "equivalence",
        check: "cnn_eigenvalues".into(),
        params: format!("h=relu_ntk q={}", cfg.cnn_q),
        max_err: parity_residual(&k, d, |s| cnn[s.mask as usize]),
        tol: cfg.tol,
    });

    let g = GEGENBAUER_D;
    let mut orth: f64 = 0.0;
    for l in 0..=g {
        for lp in 0..=g {
            let mut acc = 0.0;
            for r in 0..=g {
                let t = g as i64 - 2 * r as i64;
                acc += hypercube_tau(g, r) * gegenbauer_hypercube(l, g, t)? * gegenbauer_hypercube(lp, g, t)?;
            }
            let want = if l == lp { 1.0 / binom(g, l) } else { 0.0 };
            orth = orth.max((acc - want).abs());
        }
    }
    rows.push(OracleRow {
        group: "gegenbauer",
        check: "hypercube_orthogonality".into(),
        params: format!("d={g}"),
        max_err: orth,
        tol: GEGENBAUER_TOL,
    });
    let dims: Vec<f64> = FC_DIMS.iter().map(|&d| d as f64).collect();
    for l in [1usize, 2] {
        let nus: Vec<f64> = FC_DIMS.iter().map(|&dd| k_eig_dot(h.as_ref(), dd, l, true)).collect::<ssl_kernel::Result<_>>()?;
        let slope = loglog_slope(&dims, &nus);
        rows.push(OracleRow {
            group: "gegenbauer",
            check: "fc_eigenvalue_slope".into(),
            params: format!("l={l} slope={slope:.4}"),
            max_err: (slope + l as f64).abs(),
            tol: FC_SLOPE_TOL,
        });
    }
    Ok(rows)
}

pub fn run(ctx: &RunContext) -> Result<Report> {
    let rows = oracle_rows(&ctx.config.oracle)?;
    let mut t = Table::new("oracle", &["group", "check", "params", "max_err", "tol", "passed"]);
    let mut rep = Report::default();
    for r in &rows {
        t.push(vec![
            r.group.into(),
            r.check.clone(),
            r.params.clone(),
            num(r.max_err),
            num(r.tol),
            r.passed().to_string(),
        ]);
    }
    for group in ["equivalence", "operators", "gegenbauer"] {
        let mine: Vec<&OracleRow> = rows.iter().filter(|r| r.group == group).collect();
        let failed: Vec<String> = mine.iter().filter(|r| !r.passed()).map(|r| format!("{} {}", r.check, r.params)).collect();
        let worst = mine.iter().map(|r| r.max_err / r.tol).fold(0.0, f64::max);
        rep.check(
            group,
            failed.is_empty(),
            format!("{} comparisons, worst error/tolerance {worst:.3e}, failed: {failed:?}", mine.len()),
        );
    }
    rep.tables.push(t);
    rep.set("cnn_normalization", "nu_h(q, |S|) * #{width-q cyclic patches containing S} / d");
    Ok(rep)
}
