//! Experiment harness: instance generation, the deadlock suite, a worker
//! pool over episodes, and CSV output.

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::executor::{run_episode, EpisodeConfig, EpisodeResult, EpisodeStatus, Solver};
use crate::grid::{parse_map, parse_scenario, AgentTask, Cell, GridMap, ParseError};
use crate::model::{Instance, ModelError};
use crate::weight::SuboptFactor;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
    #[error("{path}: {source}")]
    Model { path: PathBuf, source: ModelError },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// A named instance ready to run.
#[derive(Debug, Clone)]
pub struct BenchInstance {
    pub map_name: String,
    pub scen_name: String,
    /// 0 is the scenario's first `N` rows; others are seeded samples.
    pub sample: usize,
    pub instance: Instance,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub map: PathBuf,
    pub scens: Vec<PathBuf>,
    pub agent_counts: Vec<usize>,
    pub solvers: Vec<Solver>,
    pub windows: Vec<usize>,
    pub weights: Vec<SuboptFactor>,
    pub timeout: Duration,
    pub iteration_cap: Option<usize>,
    pub seed: u64,
    /// Instances drawn per (scenario, N).
    pub samples: usize,
    pub workers: usize,
    pub stop_on_repeat: bool,
    /// When false, timing columns are left empty so output is reproducible.
    pub timing: bool,
    pub trace_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::Config(m.to_string()));
        if self.windows.contains(&0) {
            return bad("windows must be at least 1");
        }
        if self.agent_counts.contains(&0) {
            return bad("agent counts must be positive");
        }
        if self.scens.is_empty() || self.agent_counts.is_empty() || self.solvers.is_empty() || self.windows.is_empty() || self.weights.is_empty() {
            return bad("every list must be nonempty");
        }
        if self.samples == 0 || self.workers == 0 {
            return bad("samples and workers must be positive");
        }
        Ok(())
    }

    pub fn settings(&self) -> Vec<RunSettings> {
        let mut out = Vec::new();
        for &solver in &self.solvers {
            for &window in &self.windows {
                for &weight in &self.weights {
                    out.push(RunSettings { solver, window, weight });
                }
            }
        }
        out
    }

    /// Reads the map and scenarios and draws every instance.
    pub fn load_instances(&self) -> Result<Vec<BenchInstance>, BenchError> {
        let read = |p: &Path| fs::read_to_string(p).map_err(|source| BenchError::Io { path: p.to_path_buf(), source });
        let map = parse_map(&read(&self.map)?).map_err(|source| BenchError::Parse { path: self.map.clone(), source })?;
        let map_name = file_name(&self.map);
        let mut out = Vec::new();
        for scen in &self.scens {
            let text = read(scen)?;
            let rows = parse_all_rows(&text, &map).map_err(|source| BenchError::Parse { path: scen.clone(), source })?;
            for &n in &self.agent_counts {
                for sample in 0..self.samples {
                    let tasks = sample_tasks(&rows, n, self.seed, sample)
                        .ok_or_else(|| BenchError::Config(format!("{} has {} usable rows, {n} requested", scen.display(), rows.len())))?;
                    let instance = Instance::new(map.clone(), tasks).map_err(|source| BenchError::Model { path: scen.clone(), source })?;
                    out.push(BenchInstance { map_name: map_name.clone(), scen_name: file_name(scen), sample, instance });
                }
            }
        }
        Ok(out)
    }
}

fn file_name(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn parse_all_rows(text: &str, map: &GridMap) -> Result<Vec<AgentTask>, ParseError> {
    let available = text.lines().skip(1).filter(|l| !l.trim().is_empty()).count();
    Ok(parse_scenario(text, map, available)?.into_iter().map(|r| r.task).collect())
}

/// Sample 0 takes the first `n` rows. Later samples pick `n` rows at random
/// with distinct starts and distinct goals.
fn sample_tasks(rows: &[AgentTask], n: usize, seed: u64, sample: usize) -> Option<Vec<AgentTask>> {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    if sample > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (sample as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        order.shuffle(&mut rng);
    }
    let mut starts = std::collections::HashSet::new();
    let mut goals = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(n);
    for i in order {
        let t = rows[i];
        if starts.contains(&t.start) || goals.contains(&t.goal) {
            continue;
        }
        starts.insert(t.start);
        goals.insert(t.goal);
        out.push(AgentTask { agent_id: out.len(), ..t });
        if out.len() == n {
            return Some(out);
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSettings {
    pub solver: Solver,
    pub window: usize,
    pub weight: SuboptFactor,
}

/// One CSV row. Column order is the field order.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BenchRow {
    pub map: String,
    pub scen: String,
    pub sample: usize,
    pub agents: usize,
    pub solver: &'static str,
    pub window: usize,
    pub subopt: String,
    pub status: &'static str,
    pub iterations: usize,
    /// Empty unless solved.
    pub sum_of_cost: Option<u64>,
    /// Empty unless solved.
    pub avg_cost_per_agent: Option<f64>,
    pub max_iteration_ms: Option<f64>,
    pub total_planning_ms: Option<f64>,
    pub merges: usize,
    pub largest_group: usize,
    /// `size:count` pairs of the last plan's groups, `;`-separated.
    pub group_sizes: String,
    pub penalty_entries: usize,
    pub recurrences: usize,
    pub stale_recurrences: usize,
    pub resumed_steps: usize,
    pub error: String,
}

impl BenchRow {
    pub fn from_result(inst: &BenchInstance, settings: &RunSettings, res: &EpisodeResult, timing: bool) -> Self {
        let solved = res.status == EpisodeStatus::Solved;
        let n = inst.instance.num_agents();
        let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
        for &s in &res.final_group_sizes {
            *hist.entry(s).or_default() += 1;
        }
        let ms = |d: Duration| d.as_secs_f64() * 1e3;
        Self {
            map: inst.map_name.clone(),
            scen: inst.scen_name.clone(),
            sample: inst.sample,
            agents: n,
            solver: settings.solver.name(),
            window: settings.window,
            subopt: settings.weight.to_string(),
            status: res.status.name(),
            iterations: res.iterations,
            sum_of_cost: solved.then_some(res.cost),
            avg_cost_per_agent: solved.then(|| res.cost as f64 / n as f64),
            max_iteration_ms: timing.then(|| ms(res.max_iteration_time())),
            total_planning_ms: timing.then(|| ms(res.planning_time)),
            merges: res.merges,
            largest_group: res.largest_group,
            group_sizes: hist.iter().map(|(s, c)| format!("{s}:{c}")).collect::<Vec<_>>().join(";"),
            penalty_entries: res.store.len(),
            recurrences: res.recurrences,
            stale_recurrences: res.stale_recurrences,
            resumed_steps: res.resumed_steps,
            error: res.error.clone().unwrap_or_default(),
        }
    }
}

/// The CSV header, in column order.
pub const CSV_COLUMNS: [&str; 21] = [
    "map",
    "scen",
    "sample",
    "agents",
    "solver",
    "window",
    "subopt",
    "status",
    "iterations",
    "sum_of_cost",
    "avg_cost_per_agent",
    "max_iteration_ms",
    "total_planning_ms",
    "merges",
    "largest_group",
    "group_sizes",
    "penalty_entries",
    "recurrences",
    "stale_recurrences",
    "resumed_steps",
    "error",
];

/// Options shared by every episode of a benchmark.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub timeout: Duration,
    pub iteration_cap: Option<usize>,
    pub stop_on_repeat: bool,
    pub workers: usize,
    pub timing: bool,
    pub trace_dir: Option<PathBuf>,
}

impl From<&ExperimentConfig> for RunOptions {
    fn from(c: &ExperimentConfig) -> Self {
        Self {
            timeout: c.timeout,
            iteration_cap: c.iteration_cap,
            stop_on_repeat: c.stop_on_repeat,
            workers: c.workers,
            timing: c.timing,
            trace_dir: c.trace_dir.clone(),
        }
    }
}

/// Runs every `(instance, settings)` pair. Rows come back in input order,
/// instances outermost, whatever order the workers finish in.
pub fn run_benchmark(instances: &[BenchInstance], settings: &[RunSettings], opts: &RunOptions) -> Result<Vec<BenchRow>, BenchError> {
    if let Some(dir) = &opts.trace_dir {
        fs::create_dir_all(dir).map_err(|source| BenchError::Io { path: dir.clone(), source })?;
    }
    let jobs: Vec<(&BenchInstance, &RunSettings)> = instances.iter().flat_map(|i| settings.iter().map(move |s| (i, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| BenchError::Config(e.to_string()))?;
    pool.install(|| {
        jobs.par_iter()
            .map(|&(inst, s)| {
                let mut cfg = EpisodeConfig::new(s.solver, s.window, s.weight).with_timeout(opts.timeout);
                cfg.iteration_cap = opts.iteration_cap;
                cfg.stop_on_repeat = opts.stop_on_repeat;
                let res = run_episode(&inst.instance, &cfg);
                if let Some(dir) = &opts.trace_dir {
                    write_trace(dir, inst, s, &res)?;
                }
                Ok(BenchRow::from_result(inst, s, &res, opts.timing))
            })
            .collect()
    })
}

fn write_trace(dir: &Path, inst: &BenchInstance, s: &RunSettings, res: &EpisodeResult) -> Result<(), BenchError> {
    let stem = format!(
        "{}_{}_n{}_s{}_{}_W{}_w{}",
        inst.map_name.trim_end_matches(".map"),
        inst.scen_name.trim_end_matches(".scen"),
        inst.instance.num_agents(),
        inst.sample,
        s.solver.name(),
        s.window,
        s.weight.to_string().replace('/', "-"),
    );
    let io_err = |path: PathBuf| move |source| BenchError::Io { path: path.clone(), source };
    let log_path = dir.join(format!("{stem}.log.jsonl"));
    let mut log = io::BufWriter::new(fs::File::create(&log_path).map_err(io_err(log_path.clone()))?);
    res.write_log_jsonl(&mut log).and_then(|_| log.flush()).map_err(io_err(log_path))?;
    let dump_path = dir.join(format!("{stem}.penalties.jsonl"));
    let mut dump = io::BufWriter::new(fs::File::create(&dump_path).map_err(io_err(dump_path.clone()))?);
    res.store.dump_jsonl(&mut dump).and_then(|_| dump.flush()).map_err(io_err(dump_path))?;
    Ok(())
}

pub fn write_csv(rows: &[BenchRow], out: impl Write) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(CSV_COLUMNS)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// An instance from the deadlock suite.
#[derive(Debug, Clone)]
pub struct NamedInstance {
    pub name: String,
    pub instance: Instance,
}

/// A `1×k` corridor with one passing bay under its middle cell; two agents
/// start at the ends with swapped goals.
pub fn corridor_swap(k: usize) -> Instance {
    assert!(k >= 3, "corridor needs at least three cells");
    let top = ".".repeat(k);
    let bottom: String = (0..k).map(|c| if c == k / 2 { '.' } else { '@' }).collect();
    let map = GridMap::from_rows(&[&top, &bottom]).expect("well-formed rows");
    let (left, right) = (map.cell(0, 0), map.cell(0, k - 1));
    Instance::new(map, vec![AgentTask { agent_id: 0, start: left, goal: right }, AgentTask { agent_id: 1, start: right, goal: left }])
        .expect("valid corridor")
}

/// Three agents at the ends of a T-junction, each bound for the next arm.
pub fn t_junction_rotation() -> Instance {
    let map = GridMap::from_rows(&[".......", "@@@.@@@", "@@@.@@@", "@@@.@@@"]).expect("well-formed rows");
    let ends = [map.cell(0, 0), map.cell(0, 6), map.cell(3, 3)];
    let tasks = (0..3).map(|i| AgentTask { agent_id: i, start: ends[i], goal: ends[(i + 1) % 3] }).collect();
    Instance::new(map, tasks).expect("valid junction")
}

/// Four agents on the corners of a ring around one blocked cell, each
/// bound for the diagonally opposite corner.
pub fn square_swap() -> Instance {
    let map = GridMap::from_rows(&["...", ".@.", "..."]).expect("well-formed rows");
    let corners = [map.cell(0, 0), map.cell(0, 2), map.cell(2, 2), map.cell(2, 0)];
    let tasks = (0..4).map(|i| AgentTask { agent_id: i, start: corners[i], goal: corners[(i + 2) % 4] }).collect();
    Instance::new(map, tasks).expect("valid square")
}

/// Corridor swaps for `k = 3..=7`, the T-junction rotation and the square
/// swap. Fully deterministic.
pub fn generate_deadlock_suite() -> Vec<NamedInstance> {
    let mut out: Vec<NamedInstance> = (3..=7).map(|k| NamedInstance { name: format!("corridor-{k}"), instance: corridor_swap(k) }).collect();
    out.push(NamedInstance { name: "t-junction".into(), instance: t_junction_rotation() });
    out.push(NamedInstance { name: "square-swap".into(), instance: square_swap() });
    out
}

fn free_cells_connected(map: &GridMap) -> bool {
    let Some(first) = map.passable_cells().next() else { return true };
    let mut seen = vec![false; map.num_cells()];
    seen[first.index()] = true;
    let mut queue = VecDeque::from([first]);
    let mut count = 1;
    while let Some(c) = queue.pop_front() {
        for n in map.moves(c) {
            if !seen[n.index()] {
                seen[n.index()] = true;
                count += 1;
                queue.push_back(n);
            }
        }
    }
    count == map.num_cells() - map.blocked_count()
}

/// A grid with exactly `blocked` obstacle cells whose free cells form one
/// 4-connected component. Obstacles are added one at a time in random order,
/// skipping any that would disconnect the free space.
pub fn random_grid(width: usize, height: usize, blocked: usize, rng: &mut impl Rng) -> Option<GridMap> {
    let n = width * height;
    if blocked >= n {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut cells = vec![false; n];
    let mut placed = 0;
    for i in order {
        if placed == blocked {
            break;
        }
        cells[i] = true;
        if free_cells_connected(&GridMap::new(width, height, cells.clone())) {
            placed += 1;
        } else {
            cells[i] = false;
        }
    }
    (placed == blocked).then(|| GridMap::new(width, height, cells))
}

/// `n` tasks with distinct starts and distinct goals on passable cells.
pub fn random_tasks(map: &GridMap, n: usize, rng: &mut impl Rng) -> Option<Vec<AgentTask>> {
    let free: Vec<Cell> = map.passable_cells().collect();
    if free.len() < n {
        return None;
    }
    let starts: Vec<Cell> = free.choose_multiple(rng, n).copied().collect();
    let goals: Vec<Cell> = free.choose_multiple(rng, n).copied().collect();
    Some((0..n).map(|i| AgentTask { agent_id: i, start: starts[i], goal: goals[i] }).collect())
}

/// The 32×32 benchmark grid with 205 obstacles (20%) used when no external
/// map is supplied, generated from a fixed seed.
pub fn synthetic_random_32() -> GridMap {
    let mut rng = ChaCha8Rng::seed_from_u64(0x3232_0020);
    random_grid(32, 32, 205, &mut rng).expect("205 obstacles fit")
}
