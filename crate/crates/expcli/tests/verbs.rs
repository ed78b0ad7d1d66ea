mod common;

use std::fs;
use std::process::Command;

use expcli::execute;
use expcli::verbs::verb_registry;

use common::{csv_files, small_config};

const VERBS: [&str; 7] = [
    "spectra-table",
    "rate-grid",
    "lambda-sweep",
    "capacity-demo",
    "interplay",
    "sgd-train",
    "oracle-check",
];

#[test]
fn registry_lists_every_verb() {
    let r = verb_registry();
    assert_eq!(r.names(), VERBS.to_vec());
    assert!(r.build("rate_grid", &()).is_err());
}

#[test]
fn every_verb_writes_tables_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    for verb in VERBS {
        let dir = tmp.path().join(verb);
        let (report, files) = execute(verb, small_config(), 11, &dir).unwrap();
        assert!(!report.checks.is_empty(), "{verb}");
        assert!(files.len() >= 2, "{verb}");
        let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["verb"], verb);
        assert_eq!(summary["seed"], 11);
        assert_eq!(summary["passed"], report.all_passed());
        assert_eq!(summary["checks"].as_array().unwrap().len(), report.checks.len());
        for t in &report.tables {
            let text = fs::read_to_string(dir.join(format!("{}.csv", t.name))).unwrap();
            assert_eq!(text.lines().count(), t.rows.len() + 1, "{verb}/{}", t.name);
        }
    }
}

#[test]
fn rate_grid_rows_trace_to_streams() {
    let tmp = tempfile::tempdir().unwrap();
    let (report, _) = execute("rate-grid", small_config(), 3, tmp.path()).unwrap();
    let trials = report.table("rate_trials").unwrap();
    let cfg = small_config().rate_grid;
    let cells = cfg.n_pre.len() * cfg.n_down.len();
    assert_eq!(trials.rows.len(), cells * (cfg.pre_trials + cfg.down_trials));
    assert!(trials.column("seed").unwrap().iter().all(|s| *s == "3"));
    let streams: std::collections::HashSet<(&str, &str)> = trials
        .column("axis")
        .unwrap()
        .into_iter()
        .zip(trials.column("stream").unwrap())
        .collect();
    assert_eq!(streams.len(), cfg.n_pre.len() * cfg.pre_trials + cfg.n_down.len() * cfg.down_trials);
    let cells_t = report.table("rate_cells").unwrap();
    assert_eq!(cells_t.rows.len(), cells);
    let means: Vec<f64> = cells_t.column("mean_risk").unwrap().iter().map(|v| v.parse().unwrap()).collect();
    assert!(means.iter().all(|m| *m > 0.0 && m.is_finite()));
}

#[test]
fn thread_count_does_not_change_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut outs = Vec::new();
    for threads in [1, 3] {
        let dir = tmp.path().join(format!("t{threads}"));
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| execute("rate-grid", small_config(), 9, &dir)).unwrap();
        outs.push(csv_files(&dir));
    }
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn seeds_change_random_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    execute("capacity-demo", small_config(), 1, &tmp.path().join("a")).unwrap();
    execute("capacity-demo", small_config(), 2, &tmp.path().join("b")).unwrap();
    assert_ne!(csv_files(&tmp.path().join("a")), csv_files(&tmp.path().join("b")));
}

#[test]
fn interplay_reports_the_regime_table() {
    let tmp = tempfile::tempdir().unwrap();
    let (report, _) = execute("interplay", small_config(), 0, tmp.path()).unwrap();
    let cross = report.table("crossovers").unwrap();
    let at: Vec<f64> = cross.column("lambda").unwrap().iter().map(|v| v.parse().unwrap()).collect();
    assert!(at.iter().zip([1.0, 2.0, 4.0]).all(|(a, b)| (a - b).abs() < 1e-12), "{at:?}");
    assert_eq!(cross.column("to").unwrap(), vec!["1", "2", "none"]);
    assert!(report.all_passed());
}

#[test]
fn cli_runs_and_validates_arguments() {
    let bin = env!("CARGO_BIN_EXE_expcli");
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "seed = 4\n[spectra]\nd = 6\n").unwrap();
    let out = tmp.path().join("spectra");
    let run = Command::new(bin)
        .args(["spectra-table", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--threads", "1"])
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).contains("PASS"));
    let summary = fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(summary.contains("\"seed\": 4"));
    assert!(out.join("spectra.csv").exists());

    let no_seed = Command::new(bin).args(["interplay", "--out"]).arg(tmp.path().join("x")).output().unwrap();
    assert!(!no_seed.status.success());
    assert!(String::from_utf8_lossy(&no_seed.stderr).contains("seed"));
    let unknown = Command::new(bin).args(["frobnicate", "--seed", "1"]).output().unwrap();
    assert!(!unknown.status.success());
    fs::write(&cfg, "[rate_grid]\nbogus = 1\n").unwrap();
    let bad = Command::new(bin).args(["rate-grid", "--seed", "1", "--config"]).arg(&cfg).output().unwrap();
    assert!(!bad.status.success());
}
