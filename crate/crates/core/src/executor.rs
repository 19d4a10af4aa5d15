//! The plan / execute / update loop.
//!
//! Each iteration plans a window from the current configuration, executes
//! the first step, and (for the grouping planner) raises the heuristic of
//! every disjoint group's start configuration and the intermediate
//! configurations along its window.

use std::collections::HashMap;
use std::io::{self, Write};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::dag::{plan_step, solve_windowed_ecbs_baseline, PlanError, PlannerResult};
use crate::group_ecbs::CtOptions;
use crate::low_level::FocalRule;
use crate::model::{sum_of_cost, validate_transition, Configuration, Instance, ModelError, WindowedPlan};
use crate::penalty::PenaltyStore;
use crate::weight::{Cost, SuboptFactor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Dynamic grouping with learned penalties.
    Dag,
    /// Windowed ECBS over all agents, no learning.
    Ecbs,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Dag => "dag",
            Solver::Ecbs => "ecbs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    OneStep,
    /// Executes the whole window. Ablation only.
    FullWindow,
}

#[derive(Debug, Clone)]
pub struct EpisodeConfig {
    pub solver: Solver,
    pub window: usize,
    pub weight: SuboptFactor,
    /// Budget on summed planning time.
    pub timeout: Duration,
    /// Defaults to `10 · N · max h^BD(start)`.
    pub iteration_cap: Option<usize>,
    pub execution: ExecutionMode,
    /// Stop with [`EpisodeStatus::Livelock`] once replanning is known to
    /// repeat itself: the planner is about to run from a configuration and
    /// store it has seen before, and following the remembered plan through
    /// its window has already been tried there (the baseline never tries).
    pub stop_on_repeat: bool,
    pub max_ct_nodes: Option<usize>,
    /// Overrides the low-level focal rule of the grouping planner.
    pub low_rule: Option<FocalRule>,
}

impl EpisodeConfig {
    pub fn new(solver: Solver, window: usize, weight: SuboptFactor) -> Self {
        Self {
            solver,
            window,
            weight,
            timeout: Duration::from_secs(60),
            iteration_cap: None,
            execution: ExecutionMode::OneStep,
            stop_on_repeat: false,
            max_ct_nodes: None,
            low_rule: None,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_iteration_cap(mut self, cap: usize) -> Self {
        self.iteration_cap = Some(cap);
        self
    }

    fn ct_options(&self, deadline: Instant) -> CtOptions {
        let mut opts = match self.solver {
            Solver::Dag => CtOptions::group(self.window, self.weight),
            Solver::Ecbs => CtOptions::standard(self.window, self.weight),
        };
        if let (Solver::Dag, Some(rule)) = (self.solver, self.low_rule) {
            opts.low = rule;
        }
        opts.max_nodes = self.max_ct_nodes;
        opts.with_deadline(Some(deadline))
    }
}

/// `10 · N · max_i h^BD_i(start)`, at least 1.
pub fn default_iteration_cap(instance: &Instance) -> usize {
    let max_h = instance.tasks().iter().map(|t| instance.h(t.agent_id, t.start)).max().unwrap_or(0) as usize;
    (10 * instance.num_agents() * max_h).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Solved,
    Timeout,
    IterationCap,
    /// A configuration recurred with nothing learned in between.
    Livelock,
    PlannerFailure,
}

impl EpisodeStatus {
    pub fn name(self) -> &'static str {
        match self {
            EpisodeStatus::Solved => "solved",
            EpisodeStatus::Timeout => "timeout",
            EpisodeStatus::IterationCap => "iteration_cap",
            EpisodeStatus::Livelock => "livelock",
            EpisodeStatus::PlannerFailure => "planner_failure",
        }
    }
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("plan does not start at the current configuration")]
    WrongStart,
    #[error("plan has no step to execute")]
    EmptyPlan,
    #[error("invalid executed move: {0}")]
    Invalid(#[from] ModelError),
}

/// Per-iteration record for the episode log.
#[derive(Debug, Clone, serde::Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub config_hash: u64,
    pub groups: Vec<Vec<usize>>,
    pub merges: usize,
    pub solve_calls: usize,
    pub step_cost: Cost,
    pub plan_micros: u64,
    pub store_revision: u64,
    pub store_size: usize,
    /// The step came from the previous plan rather than a new planning call.
    pub resumed: bool,
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub status: EpisodeStatus,
    pub executed: Vec<Configuration>,
    pub cost: Cost,
    pub iterations: usize,
    pub iteration_times: Vec<Duration>,
    pub planning_time: Duration,
    pub merges: usize,
    /// Group sizes of the last successful plan.
    pub final_group_sizes: Vec<usize>,
    pub largest_group: usize,
    /// Returns to an earlier configuration.
    pub recurrences: usize,
    /// Returns to an earlier configuration without any heuristic increase
    /// since the earlier visit.
    pub stale_recurrences: usize,
    /// Planning calls from a configuration and store already planned from.
    pub stale_replans: usize,
    /// Steps taken from an earlier plan because replanning would repeat it.
    pub resumed_steps: usize,
    pub error: Option<String>,
    pub store: PenaltyStore,
    pub log: Vec<IterationRecord>,
}

impl EpisodeResult {
    pub fn solved(&self) -> bool {
        self.status == EpisodeStatus::Solved
    }

    pub fn max_iteration_time(&self) -> Duration {
        self.iteration_times.iter().copied().max().unwrap_or_default()
    }

    /// One JSON line per iteration, then a summary line.
    pub fn write_log_jsonl(&self, mut out: impl Write) -> io::Result<()> {
        for rec in &self.log {
            serde_json::to_writer(&mut out, rec)?;
            out.write_all(b"\n")?;
        }
        let summary = serde_json::json!({
            "summary": true,
            "status": self.status,
            "iterations": self.iterations,
            "cost": self.cost,
            "planning_micros": self.planning_time.as_micros() as u64,
            "merges": self.merges,
            "largest_group": self.largest_group,
            "recurrences": self.recurrences,
            "stale_recurrences": self.stale_recurrences,
            "stale_replans": self.stale_replans,
            "resumed_steps": self.resumed_steps,
            "penalty_entries": self.store.len(),
            "error": self.error,
        });
        serde_json::to_writer(&mut out, &summary)?;
        out.write_all(b"\n")
    }
}

/// What an observer sees after each successful planning call, before the
/// penalty update.
pub struct PlanContext<'a> {
    pub iteration: usize,
    pub config: &'a Configuration,
    pub result: &'a PlannerResult,
    pub store: &'a PenaltyStore,
    pub window: usize,
    pub weight: SuboptFactor,
}

pub trait EpisodeObserver {
    fn on_plan(&mut self, ctx: &PlanContext<'_>);
}

impl<F: FnMut(&PlanContext<'_>)> EpisodeObserver for F {
    fn on_plan(&mut self, ctx: &PlanContext<'_>) {
        self(ctx)
    }
}

/// Returns `plan.steps[1]` after checking it is a legal collision-free move.
pub fn execute_step(instance: &Instance, current: &Configuration, plan: &WindowedPlan) -> Result<Configuration, ExecError> {
    if plan.steps.first() != Some(current) {
        return Err(ExecError::WrongStart);
    }
    let next = plan.steps.get(1).ok_or(ExecError::EmptyPlan)?;
    validate_transition(instance, current, next)?;
    Ok(next.clone())
}

/// Raises `h` for every disjoint group of `result` planned from `config`.
pub fn apply_group_updates(instance: &Instance, store: &mut PenaltyStore, config: &Configuration, result: &PlannerResult) {
    let w = store.weight();
    for sol in &result.groups {
        let start = config.project(&sol.group);
        let update = store.apply_terminal_update(instance, &sol.group, &start, w.scale(sol.cost), sol.terminal_heuristic(w));
        store.apply_intermediate_updates(instance, &sol.group, &sol.steps(), update);
    }
}

pub fn run_episode(instance: &Instance, cfg: &EpisodeConfig) -> EpisodeResult {
    run_episode_observed(instance, cfg, &mut |_: &PlanContext<'_>| {})
}

pub fn run_episode_observed(instance: &Instance, cfg: &EpisodeConfig, observer: &mut dyn EpisodeObserver) -> EpisodeResult {
    assert!(cfg.window >= 1, "window must be at least 1");
    let cap = cfg.iteration_cap.unwrap_or_else(|| default_iteration_cap(instance));
    let goal = instance.goal_configuration();
    let may_commit = cfg.solver == Solver::Dag && cfg.execution == ExecutionMode::OneStep;
    let mut store = PenaltyStore::new(cfg.weight);
    let mut current = instance.start_configuration();
    let mut executed = vec![current.clone()];
    let mut visited: HashMap<Configuration, u64> = HashMap::new();
    let mut planned_at: HashMap<Configuration, PlanMemo> = HashMap::new();
    let mut commitment: Option<Commitment> = None;
    let mut iteration_times = Vec::new();
    let mut planning_time = Duration::ZERO;
    let mut merges = 0;
    let mut final_group_sizes = Vec::new();
    let mut largest_group = 0;
    let mut recurrences = 0;
    let mut stale_recurrences = 0;
    let mut stale_replans = 0;
    let mut resumed_steps = 0;
    let mut log = Vec::new();
    let mut error = None;

    let status = loop {
        if current == goal {
            break EpisodeStatus::Solved;
        }
        if let Some(revision) = visited.insert(current.clone(), store.revision()) {
            recurrences += 1;
            if revision == store.revision() {
                stale_recurrences += 1;
            }
        }
        if iteration_times.len() >= cap {
            break EpisodeStatus::IterationCap;
        }
        if planning_time >= cfg.timeout {
            break EpisodeStatus::Timeout;
        }

        // Planning is deterministic: from a configuration already planned
        // from against the same store it would reproduce the remembered plan,
        // and executing only its first step is what closed the cycle. Follow
        // that plan to the end of its window instead, once per entry.
        if commitment.is_none() {
            if let Some(memo) = planned_at.get_mut(&current).filter(|m| m.revision == store.revision()) {
                stale_replans += 1;
                if may_commit && !memo.committed {
                    memo.committed = true;
                    let last = memo.steps.len() - 1;
                    let from = (0..last).rev().find(|&k| memo.steps[k] == current).unwrap_or(0);
                    commitment = Some(Commitment { steps: memo.steps.clone(), next: from, groups: memo.groups.clone() });
                } else if cfg.stop_on_repeat {
                    break EpisodeStatus::Livelock;
                }
            }
        }
        if let Some(plan) = commitment.as_mut() {
            let step = WindowedPlan { steps: plan.steps[plan.next..].to_vec(), window: plan.steps.len() - 1 - plan.next };
            match execute_step(instance, &current, &step) {
                Ok(next) => {
                    log.push(IterationRecord {
                        iteration: iteration_times.len(),
                        config_hash: current.fingerprint(),
                        groups: plan.groups.clone(),
                        merges: 0,
                        solve_calls: 0,
                        step_cost: sum_of_cost(instance, &[current.clone(), next.clone()]).unwrap_or(0),
                        plan_micros: 0,
                        store_revision: store.revision(),
                        store_size: store.len(),
                        resumed: true,
                    });
                    iteration_times.push(Duration::ZERO);
                    resumed_steps += 1;
                    plan.next += 1;
                    if plan.next + 1 >= plan.steps.len() {
                        commitment = None;
                    }
                    executed.push(next.clone());
                    current = next;
                    continue;
                }
                Err(e) => {
                    error = Some(e.to_string());
                    break EpisodeStatus::PlannerFailure;
                }
            }
        }

        let started = Instant::now();
        let deadline = started + (cfg.timeout - planning_time);
        let opts = cfg.ct_options(deadline);
        let planned = match cfg.solver {
            Solver::Dag => plan_step(instance, &current, &store, &opts),
            Solver::Ecbs => solve_windowed_ecbs_baseline(instance, &current, &opts),
        };
        let elapsed = started.elapsed();
        planning_time += elapsed;
        iteration_times.push(elapsed);

        let result = match planned {
            Ok(r) => r,
            Err(PlanError::Timeout) => break EpisodeStatus::Timeout,
            Err(e) => {
                error = Some(e.to_string());
                break EpisodeStatus::PlannerFailure;
            }
        };
        observer.on_plan(&PlanContext {
            iteration: iteration_times.len() - 1,
            config: &current,
            result: &result,
            store: &store,
            window: cfg.window,
            weight: cfg.weight,
        });
        merges += result.merges;
        final_group_sizes = result.group_sizes();
        largest_group = largest_group.max(final_group_sizes.iter().copied().max().unwrap_or(0));

        let before = current.clone();
        let revision_before = store.revision();
        let steps = match cfg.execution {
            ExecutionMode::OneStep => 1,
            ExecutionMode::FullWindow => cfg.window,
        };
        let mut step_cost = 0;
        for k in 0..steps {
            let window_from_here = WindowedPlan { steps: result.plan.steps[k..].to_vec(), window: cfg.window - k };
            match execute_step(instance, &current, &window_from_here) {
                Ok(next) => {
                    step_cost += sum_of_cost(instance, &[current.clone(), next.clone()]).unwrap_or(0);
                    executed.push(next.clone());
                    current = next;
                }
                Err(e) => {
                    error = Some(e.to_string());
                    break;
                }
            }
        }
        if error.is_some() {
            break EpisodeStatus::PlannerFailure;
        }
        if cfg.solver == Solver::Dag {
            apply_group_updates(instance, &mut store, &before, &result);
        }
        let groups: Vec<Vec<usize>> = result.groups.iter().map(|g| g.group.members().to_vec()).collect();
        log.push(IterationRecord {
            iteration: iteration_times.len() - 1,
            config_hash: before.fingerprint(),
            groups: groups.clone(),
            merges: result.merges,
            solve_calls: result.solve_calls,
            step_cost,
            plan_micros: elapsed.as_micros() as u64,
            store_revision: store.revision(),
            store_size: store.len(),
            resumed: false,
        });
        let committed = planned_at.get(&before).is_some_and(|m| m.revision == revision_before && m.committed);
        planned_at.insert(before, PlanMemo { revision: revision_before, steps: result.plan.steps, groups, committed });
    };

    let cost = sum_of_cost(instance, &executed).unwrap_or(Cost::MAX);
    EpisodeResult {
        status,
        cost,
        iterations: iteration_times.len(),
        executed,
        iteration_times,
        planning_time,
        merges,
        final_group_sizes,
        largest_group,
        recurrences,
        stale_recurrences,
        stale_replans,
        resumed_steps,
        error,
        store,
        log,
    }
}

/// The last plan computed from a configuration and the store revision it saw.
struct PlanMemo {
    revision: u64,
    steps: Vec<Configuration>,
    groups: Vec<Vec<usize>>,
    committed: bool,
}

/// A remembered plan being followed step by step without replanning.
struct Commitment {
    steps: Vec<Configuration>,
    /// Index of the configuration the agents are at.
    next: usize,
    groups: Vec<Vec<usize>>,
}
