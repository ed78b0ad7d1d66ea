use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use expcli::config::ExperimentConfig;
use expcli::verbs::verb_registry;
use expcli::{execute, CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "expcli", about = "Kernel-regime self-supervised learning experiments")]
struct Cli {
    /// One of: spectra-table, rate-grid, lambda-sweep, capacity-demo,
    /// interplay, sgd-train, oracle-check.
    verb: String,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, default `out/<verb>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; default is one per core.
    #[arg(long)]
    threads: Option<usize>,
}

fn main_inner(cli: Cli) -> Result<bool> {
    let registry = verb_registry();
    if !registry.contains(&cli.verb) {
        registry.build(&cli.verb, &())?;
    }
    let config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let seed = cli
        .seed
        .or(config.seed)
        .ok_or_else(|| CliError::Config("no seed: pass --seed or set `seed` in the config".into()))?;
    if let Some(n) = cli.threads.or(config.threads) {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let out = cli
        .out
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&cli.verb));
    let start = Instant::now();
    let (report, files) = execute(&cli.verb, config, seed, &out)?;
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    for f in &files {
        println!("wrote {}", f.display());
    }
    println!("{} finished in {:.1}s", cli.verb, start.elapsed().as_secs_f64());
    Ok(report.all_passed())
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
