#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use expcli::config::{logspace, ExperimentConfig};

/// Every verb at a size that runs in seconds.
pub fn small_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    let r = &mut c.rate_grid;
    r.landmarks = 30;
    r.n_pre = vec![16, 32, 64, 128];
    r.n_down = vec![16, 32, 64, 128];
    r.pre_trials = 20;
    r.down_trials = 20;
    r.population_inputs = 5000;
    r.test_points = 5000;
    r.zero_one_points = 200;
    r.zero_one_trials = 20;
    r.bootstrap = 100;
    let s = &mut c.lambda_sweep;
    s.n = 60;
    s.n_val = 60;
    s.n_test = 200;
    s.k = 8;
    s.trials = 2;
    s.lambdas = logspace(-8.0, -2.0, 4);
    c.sgd.steps = 4000;
    c.sgd.averaging_window = 2000;
    c
}

/// CSV file name to contents for a verb output directory.
pub fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}
