//! Experiment verbs, selected by name at runtime.

use ssl_kernel::registry::Registry;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::report::Report;

pub mod capacity;
pub mod interplay;
pub mod lambda_sweep;
pub mod oracle;
pub mod rate_grid;
pub mod sgd_train;
pub mod spectra;

#[derive(Debug, Clone)]
pub struct RunContext {
    pub config: ExperimentConfig,
    pub seed: u64,
}

pub trait Verb: Send + Sync {
    fn name(&self) -> &'static str;
    fn about(&self) -> &'static str;
    fn run(&self, ctx: &RunContext) -> Result<Report>;
}

macro_rules! verb {
    ($ty:ident, $name:literal, $about:literal, $run:path) => {
        pub struct $ty;
        impl Verb for $ty {
            fn name(&self) -> &'static str {
                $name
            }
            fn about(&self) -> &'static str {
                $about
            }
            fn run(&self, ctx: &RunContext) -> Result<Report> {
                $run(ctx)
            }
        }
    };
}

verb!(SpectraTable, "spectra-table", "parity-basis eigenvalues of augmentation laws", spectra::run);
verb!(RateGrid, "rate-grid", "pretraining and downstream sample-size rates on half-moon data", rate_grid::run);
verb!(LambdaSweep, "lambda-sweep", "downstream error against pretraining regularization on the sphere", lambda_sweep::run);
verb!(CapacityDemo, "capacity-demo", "eigenfunction collapse without regularization", capacity::run);
verb!(Interplay, "interplay", "interplay scores and regime crossovers", interplay::run);
verb!(SgdTrain, "sgd-train", "projected SGD against the closed-form optimum", sgd_train::run);
verb!(OracleCheck, "oracle-check", "closed-form spectra against brute-force operators", oracle::run);

pub fn verb_registry() -> Registry<(), dyn Verb> {
    let mut r: Registry<(), dyn Verb> = Registry::new("verb");
    r.register("spectra-table", |_| Ok(Box::new(SpectraTable)))
        .register("rate-grid", |_| Ok(Box::new(RateGrid)))
        .register("lambda-sweep", |_| Ok(Box::new(LambdaSweep)))
        .register("capacity-demo", |_| Ok(Box::new(CapacityDemo)))
        .register("interplay", |_| Ok(Box::new(Interplay)))
        .register("sgd-train", |_| Ok(Box::new(SgdTrain)))
        .register("oracle-check", |_| Ok(Box::new(OracleCheck)));
    r
}
