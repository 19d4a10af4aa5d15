use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;

use dag_ecbs::bench::{run_benchmark, write_csv, ExperimentConfig, RunOptions};
use dag_ecbs::executor::Solver;
use dag_ecbs::weight::SuboptFactor;

/// Runs windowed planning episodes over a map and scenario files and writes
/// one CSV row per (scenario, N, sample, solver, W, w).
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// Grid map in the `.map` format.
    #[arg(long)]
    map: PathBuf,
    /// Scenario files in the `.scen` format.
    #[arg(long, required = true, num_args = 1..)]
    scen: Vec<PathBuf>,
    /// Agent counts, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    agents: Vec<usize>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "dag")]
    solver: Vec<Solver>,
    /// Planning windows, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    window: Vec<usize>,
    /// Suboptimality factors such as `1`, `1.5` or `3/2`, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    subopt: Vec<SuboptFactor>,
    /// Budget on summed planning time per episode.
    #[arg(long, default_value_t = 60.0)]
    timeout_s: f64,
    /// Defaults to 10·N·(largest start distance).
    #[arg(long)]
    iteration_cap: Option<usize>,
    /// Seeds the instance samples beyond the first.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Instances per (scenario, N): the first N rows, then seeded samples.
    #[arg(long, default_value_t = 1)]
    instances: usize,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for per-episode logs and penalty dumps.
    #[arg(long)]
    trace_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Stop an episode when a configuration recurs with nothing learned.
    #[arg(long)]
    stop_on_repeat: bool,
    /// Leave timing columns empty so repeated runs are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

fn run(args: Args) -> Result<(), Box<dyn std::error::Error>> {
    if !(args.timeout_s.is_finite() && args.timeout_s > 0.0) {
        return Err("--timeout-s must be positive".into());
    }
    let cfg = ExperimentConfig {
        map: args.map,
        scens: args.scen,
        agent_counts: args.agents,
        solvers: args.solver,
        windows: args.window,
        weights: args.subopt,
        timeout: Duration::from_secs_f64(args.timeout_s),
        iteration_cap: args.iteration_cap,
        seed: args.seed,
        samples: args.instances,
        workers: args.workers,
        stop_on_repeat: args.stop_on_repeat,
        timing: !args.no_timing,
        trace_dir: args.trace_dir,
    };
    cfg.validate()?;
    let instances = cfg.load_instances()?;
    let rows = run_benchmark(&instances, &cfg.settings(), &RunOptions::from(&cfg))?;
    match args.out {
        Some(path) => {
            let mut f = BufWriter::new(File::create(&path)?);
            write_csv(&rows, &mut f)?;
            f.flush()?;
        }
        None => write_csv(&rows, io::stdout().lock())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
