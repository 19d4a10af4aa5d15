//! Runs a small benchmark over the bundled synthetic map and prints the CSV.
//! `generate_instances` rewrites the data files.
//!
//!     cargo run --release --example benchmark

use std::path::PathBuf;
use std::time::Duration;

use dag_ecbs::bench::{run_benchmark, write_csv, ExperimentConfig, RunOptions};
use dag_ecbs::executor::Solver;
use dag_ecbs::weight::SuboptFactor;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data");
    let cfg = ExperimentConfig {
        map: data.join("random-32-32-20-synthetic.map"),
        scens: (1..=3).map(|i| data.join(format!("random-32-32-20-synthetic-random-{i}.scen"))).collect(),
        agent_counts: vec![10, 20],
        solvers: vec![Solver::Dag, Solver::Ecbs],
        windows: vec![2],
        weights: vec![SuboptFactor::integer(2)],
        timeout: Duration::from_secs(10),
        iteration_cap: None,
        seed: 0,
        samples: 1,
        workers: 1,
        stop_on_repeat: true,
        timing: true,
        trace_dir: None,
    };
    cfg.validate()?;
    let rows = run_benchmark(&cfg.load_instances()?, &cfg.settings(), &RunOptions::from(&cfg))?;
    write_csv(&rows, std::io::stdout().lock())?;
    Ok(())
}
