//! Dynamic agent grouping: plan groups independently, merge groups whose
//! plans interact, replan until every group is disjoint.
//!
//! Also hosts the windowed ECBS baseline, which plans all agents in one
//! constraint tree with the standard focal rules and no penalties.

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

use crate::grid::Cell;
use crate::group_ecbs::{solve_group, CtOptions, GroupSolution, HighLevelRule, SolveError};
use crate::model::{collisions_into, AgentGroup, Configuration, Instance, ModelError, WindowedPlan};
use crate::penalty::PenaltyStore;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("group {group} has no solution")]
    Infeasible { group: AgentGroup },
    #[error("planning budget exhausted")]
    Timeout,
    #[error("constraint tree node limit reached while planning {group}")]
    NodeLimit { group: AgentGroup },
}

impl PlanError {
    fn from_solve(err: SolveError, group: &AgentGroup) -> Self {
        match err {
            SolveError::Infeasible => PlanError::Infeasible { group: group.clone() },
            SolveError::Timeout => PlanError::Timeout,
            SolveError::NodeLimit => PlanError::NodeLimit { group: group.clone() },
        }
    }
}

/// One planning call's output.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PlannerResult {
    pub plan: WindowedPlan,
    /// Disjoint groups covering every agent, sorted by group.
    pub groups: Vec<GroupSolution>,
    pub merges: usize,
    pub solve_calls: usize,
}

impl PlannerResult {
    fn assemble(instance: &Instance, mut groups: Vec<GroupSolution>, merges: usize, solve_calls: usize) -> Self {
        groups.sort_by(|a, b| a.group.cmp(&b.group));
        let mut paths: Vec<Vec<Cell>> = vec![Vec::new(); instance.num_agents()];
        for g in &groups {
            for (agent, path) in g.group.iter().zip(&g.paths) {
                paths[agent] = path.clone();
            }
        }
        Self { plan: WindowedPlan::from_paths(&paths), groups, merges, solve_calls }
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.group.len()).collect()
    }
}

/// Sorted union of `a` and `others`; the groups must be pairwise disjoint.
pub fn merge_groups(a: &AgentGroup, others: &[AgentGroup]) -> Result<AgentGroup, ModelError> {
    let mut all: Vec<usize> = a.members().to_vec();
    for g in others {
        for m in g.iter() {
            if all.contains(&m) {
                return Err(ModelError::Overlap(m));
            }
            all.push(m);
        }
    }
    Ok(AgentGroup::new(all))
}

/// Indices into `committed` of the groups coupled with `candidate`: any
/// vertex or edge conflict over the window, or a positive-residual penalty
/// entry that spans the candidate and committed groups and is matched by
/// their combined terminal configuration.
pub fn conflicting_groups(candidate: &GroupSolution, committed: &[GroupSolution], store: Option<&PenaltyStore>) -> Vec<usize> {
    let mut hit = vec![false; committed.len()];
    let mut buf = Vec::new();
    for (k, other) in committed.iter().enumerate() {
        'pairs: for (a, pa) in candidate.group.iter().zip(&candidate.paths) {
            for (b, pb) in other.group.iter().zip(&other.paths) {
                buf.clear();
                collisions_into(a, pa, b, pb, &mut buf);
                if !buf.is_empty() {
                    hit[k] = true;
                    break 'pairs;
                }
            }
        }
    }

    if let Some(store) = store {
        let mut owner: HashMap<usize, (Option<usize>, Cell)> = HashMap::new();
        for (a, &cell) in candidate.group.iter().zip(&candidate.terminal) {
            owner.insert(a, (None, cell));
        }
        for (k, other) in committed.iter().enumerate() {
            for (a, &cell) in other.group.iter().zip(&other.terminal) {
                owner.insert(a, (Some(k), cell));
            }
        }
        for (a, &cell) in candidate.group.iter().zip(&candidate.terminal) {
            for &id in store.touching(a, cell) {
                let e = store.entry(id);
                if e.residual() <= 0 || e.group.is_subset_of(&candidate.group) {
                    continue;
                }
                let matched = e.group.iter().zip(&e.locations).all(|(m, loc)| owner.get(&m).is_some_and(|(_, c)| c == loc));
                if matched {
                    for m in e.group.iter() {
                        if let Some((Some(k), _)) = owner.get(&m) {
                            hit[*k] = true;
                        }
                    }
                }
            }
        }
    }
    hit.iter().enumerate().filter(|(_, h)| **h).map(|(k, _)| k).collect()
}

/// Groups in `committed` coupled with `candidate`, in committed order.
pub fn cross_group_conflicts(candidate: &GroupSolution, committed: &[GroupSolution], store: Option<&PenaltyStore>) -> Vec<AgentGroup> {
    conflicting_groups(candidate, committed, store).into_iter().map(|k| committed[k].group.clone()).collect()
}

/// One dynamic-grouping planning call from `config`.
///
/// Groups are popped FIFO, starting from singletons. A group that conflicts
/// with committed groups is merged with all of them; their committed paths
/// are dropped and the merged group is queued for replanning.
pub fn plan_step(instance: &Instance, config: &Configuration, store: &PenaltyStore, opts: &CtOptions) -> Result<PlannerResult, PlanError> {
    debug_assert_eq!(opts.high, HighLevelRule::Group);
    let mut active: VecDeque<AgentGroup> = (0..instance.num_agents()).map(AgentGroup::singleton).collect();
    let mut committed: Vec<GroupSolution> = Vec::new();
    let mut merges = 0;
    let mut solve_calls = 0;

    while let Some(group) = active.pop_front() {
        solve_calls += 1;
        let solution = solve_group(instance, &group, config, Some(store), opts).map_err(|e| PlanError::from_solve(e, &group))?;
        let coupled = conflicting_groups(&solution, &committed, Some(store));
        if coupled.is_empty() {
            committed.push(solution);
            continue;
        }
        let others: Vec<AgentGroup> = coupled.iter().map(|&k| committed[k].group.clone()).collect();
        let merged = merge_groups(&group, &others).expect("committed groups are disjoint from the active group");
        for &k in coupled.iter().rev() {
            committed.remove(k);
        }
        active.retain(|g| g.is_disjoint(&merged));
        active.push_back(merged);
        merges += 1;
    }
    Ok(PlannerResult::assemble(instance, committed, merges, solve_calls))
}

/// Windowed ECBS over all agents at once, without penalties or grouping.
pub fn solve_windowed_ecbs_baseline(instance: &Instance, config: &Configuration, opts: &CtOptions) -> Result<PlannerResult, PlanError> {
    debug_assert_eq!(opts.high, HighLevelRule::Standard);
    let everyone = AgentGroup::new(0..instance.num_agents());
    let solution = solve_group(instance, &everyone, config, None, opts).map_err(|e| PlanError::from_solve(e, &everyone))?;
    Ok(PlannerResult::assemble(instance, vec![solution], 0, 1))
}
