//! Parity-basis eigenvalues of augmentation laws on the hypercube.

use ssl_kernel::analytic_spectra::{table1_report, EffectClass};

use crate::error::{config_err, Result};
use crate::report::{num, Report, Table};
use crate::verbs::RunContext;

fn label(ix: &[usize]) -> String {
    let parts: Vec<String> = ix.iter().map(|i| i.to_string()).collect();
    format!("{{{}}}", parts.join(" "))
}

fn class_name(c: EffectClass) -> &'static str {
    match c {
        EffectClass::Killed => "killed",
        EffectClass::Attenuated => "attenuated",
        EffectClass::Invariant => "invariant",
    }
}

pub fn run(ctx: &RunContext) -> Result<Report> {
    let cfg = &ctx.config.spectra;
    if cfg.laws.is_empty() {
        return config_err("spectra-table needs at least one law");
    }
    let reports = table1_report(cfg.d, &cfg.laws)?;
    let mut t = Table::new("spectra", &["law", "subset", "partner", "parity", "card", "diam", "t_eig", "class"]);
    let mut rep = Report::default();
    for r in &reports {
        let mut counts = [0usize; 3];
        for e in &r.entries {
            let (partner, parity) = match &e.partner {
                Some((p, s)) => (label(p), s.to_string()),
                None => (String::new(), String::new()),
            };
            counts[e.class as usize] += 1;
            t.push(vec![
                r.law.clone(),
                label(&e.label),
                partner,
                parity,
                e.card.to_string(),
                e.diam.to_string(),
                num(e.t_eig),
                class_name(e.class).into(),
            ]);
        }
        let bounded = r.entries.iter().all(|e| e.t_eig.is_finite() && e.t_eig.abs() <= 1.0 + 1e-12);
        rep.check(&format!("{}_bounded", r.law), bounded, "every eigenvalue lies in [-1, 1]".to_string());
        let constant = r.entries.iter().find(|e| e.card == 0);
        rep.check(
            &format!("{}_constant_invariant", r.law),
            constant.is_some_and(|e| e.class == EffectClass::Invariant),
            "the constant function is kept".to_string(),
        );
        rep.set(
            &r.law,
            serde_json::json!({"killed": counts[0], "attenuated": counts[1], "invariant": counts[2]}),
        );
    }
    rep.tables.push(t);
    rep.set("d", cfg.d);
    Ok(rep)
}
