//! Brute-force ground truth over joint configurations of small groups.
//!
//! Every search here ignores agents outside the group, matching how the
//! planners treat a group: `h*` of a group is its optimal sum-of-cost to
//! its own goals when no one else is on the map.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet, VecDeque};
use std::io::{self, Write};

use thiserror::Error;

use crate::grid::{Cell, GridMap};
use crate::group_ecbs::GroupSolution;
use crate::model::{step_cost, AgentGroup, Instance};
use crate::penalty::{EntryId, PenaltyStore};
use crate::weight::{Cost, Scaled, SuboptFactor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    /// Optimal sum-of-cost until every member rests on its goal.
    Full,
    /// Optimal `c(C^0, C^W) + Σ h^BD(C^W)` over collision-free `W`-step moves.
    Windowed(usize),
}

#[derive(Debug, Clone, Copy)]
pub struct OracleLimits {
    pub max_agents: usize,
    /// States popped (A*) or settled (tables) before refusing.
    pub max_states: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self { max_agents: 4, max_states: 4_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("group of {size} agents exceeds the oracle cap of {cap}")]
    TooManyAgents { size: usize, cap: usize },
    #[error("state budget of {0} exhausted")]
    StateLimit(usize),
    #[error("cells beyond 65535 cannot be packed")]
    MapTooLarge,
    #[error("goal configuration unreachable")]
    Unreachable,
}

/// Optimal value and one optimal sequence of group locations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleOutcome {
    pub value: Cost,
    pub steps: Vec<Vec<Cell>>,
}

type Key = u64;

fn pack(cells: &[Cell]) -> Key {
    cells.iter().fold(0u64, |k, c| (k << 16) | u64::from(c.0))
}

fn unpack(key: Key, k: usize) -> Vec<Cell> {
    (0..k).rev().map(|i| Cell(((key >> (16 * i)) & 0xffff) as u32)).collect()
}

fn check_size(map: &GridMap, k: usize, limits: &OracleLimits) -> Result<(), OracleError> {
    if k > limits.max_agents || k > 4 {
        return Err(OracleError::TooManyAgents { size: k, cap: limits.max_agents.min(4) });
    }
    if map.num_cells() > 1 << 16 {
        return Err(OracleError::MapTooLarge);
    }
    Ok(())
}

/// Every collision-free joint successor of `locs`, including waits.
pub fn joint_successors(map: &GridMap, locs: &[Cell]) -> Vec<Vec<Cell>> {
    fn rec(map: &GridMap, locs: &[Cell], cur: &mut Vec<Cell>, out: &mut Vec<Vec<Cell>>) {
        let i = cur.len();
        if i == locs.len() {
            out.push(cur.clone());
            return;
        }
        for next in map.neighbors(locs[i]) {
            let clash = (0..i).any(|j| cur[j] == next || (cur[j] == locs[i] && next == locs[j] && next != locs[i]));
            if !clash {
                cur.push(next);
                rec(map, locs, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(map, locs, &mut Vec::with_capacity(locs.len()), &mut out);
    out
}

fn joint_step_cost(goals: &[Cell], from: &[Cell], to: &[Cell]) -> Cost {
    goals.iter().zip(from).zip(to).map(|((&g, &a), &b)| step_cost(g, a, b)).sum()
}

/// Joint A* with heuristic `Σ h^BD`, which is consistent for this cost.
pub fn joint_astar(
    instance: &Instance,
    group: &AgentGroup,
    start: &[Cell],
    horizon: Horizon,
    limits: &OracleLimits,
) -> Result<OracleOutcome, OracleError> {
    let map = instance.map();
    let k = group.len();
    check_size(map, k, limits)?;
    let goals: Vec<Cell> = group.iter().map(|a| instance.tasks()[a].goal).collect();
    let h = |locs: &[Cell]| instance.group_h(group, locs);
    let window = match horizon {
        Horizon::Full => None,
        Horizon::Windowed(w) => Some(w),
    };
    // Time is part of the state only in windowed mode.
    let node_key = |locs: &[Cell], t: usize| (pack(locs), if window.is_some() { t } else { 0 });

    let mut best: HashMap<(Key, usize), Cost> = HashMap::new();
    let mut parent: HashMap<(Key, usize), (Key, usize)> = HashMap::new();
    let mut heap = BinaryHeap::new();
    let root = node_key(start, 0);
    best.insert(root, 0);
    heap.push(Reverse((h(start), 0 as Cost, root.0, 0usize)));
    let mut popped = 0usize;

    while let Some(Reverse((f, g, key, t))) = heap.pop() {
        let state = node_key(&unpack(key, k), t);
        if best.get(&state).is_some_and(|&b| b < g) {
            continue;
        }
        popped += 1;
        if popped > limits.max_states {
            return Err(OracleError::StateLimit(limits.max_states));
        }
        let locs = unpack(key, k);
        let done = match window {
            Some(w) => t == w,
            None => locs == goals,
        };
        if done {
            let mut steps = vec![locs];
            let mut cur = state;
            while let Some(&p) = parent.get(&cur) {
                steps.push(unpack(p.0, k));
                cur = p;
            }
            steps.reverse();
            return Ok(OracleOutcome { value: f, steps });
        }
        for next in joint_successors(map, &locs) {
            let ng = g + joint_step_cost(&goals, &locs, &next);
            let ns = node_key(&next, t + 1);
            if best.get(&ns).is_some_and(|&b| b <= ng) {
                continue;
            }
            best.insert(ns, ng);
            parent.insert(ns, state);
            heap.push(Reverse((ng + h(&next), ng, ns.0, t + 1)));
        }
    }
    Err(OracleError::Unreachable)
}

/// `h*` for every configuration of one group, by a 0/1 breadth-first search
/// outward from the goal configuration. The joint move graph is symmetric
/// (reversing a collision-free move is collision-free and costs the same),
/// so distances from the goal are distances to it.
#[derive(Debug, Clone)]
pub struct JointDistanceTable {
    group: AgentGroup,
    dist: HashMap<Key, Cost>,
}

impl JointDistanceTable {
    pub fn build(instance: &Instance, group: &AgentGroup, limits: &OracleLimits) -> Result<Self, OracleError> {
        let map = instance.map();
        let k = group.len();
        check_size(map, k, limits)?;
        let goals: Vec<Cell> = group.iter().map(|a| instance.tasks()[a].goal).collect();
        let mut dist: HashMap<Key, Cost> = HashMap::new();
        let mut deque = VecDeque::from([(pack(&goals), 0 as Cost)]);
        let mut settled: HashSet<Key> = HashSet::new();
        dist.insert(pack(&goals), 0);
        while let Some((key, d)) = deque.pop_front() {
            if dist[&key] < d || !settled.insert(key) {
                continue;
            }
            if settled.len() > limits.max_states {
                return Err(OracleError::StateLimit(limits.max_states));
            }
            let locs = unpack(key, k);
            for prev in joint_successors(map, &locs) {
                let c = joint_step_cost(&goals, &prev, &locs);
                let nd = d + c;
                let pk = pack(&prev);
                if dist.get(&pk).is_some_and(|&b| b <= nd) {
                    continue;
                }
                dist.insert(pk, nd);
                if c == 0 {
                    deque.push_front((pk, nd));
                } else {
                    deque.push_back((pk, nd));
                }
            }
        }
        Ok(Self { group: group.clone(), dist })
    }

    pub fn group(&self) -> &AgentGroup {
        &self.group
    }

    /// `None` when the goal configuration cannot be reached.
    pub fn get(&self, locs: &[Cell]) -> Option<Cost> {
        self.dist.get(&pack(locs)).copied()
    }

    pub fn len(&self) -> usize {
        self.dist.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dist.is_empty()
    }
}

/// Minimum cost `c(C^0, C^W)` of reaching each terminal configuration in
/// exactly `W` collision-free steps.
fn terminal_costs(instance: &Instance, group: &AgentGroup, start: &[Cell], window: usize, limits: &OracleLimits) -> Result<HashMap<Key, Cost>, OracleError> {
    let map = instance.map();
    let k = group.len();
    check_size(map, k, limits)?;
    let goals: Vec<Cell> = group.iter().map(|a| instance.tasks()[a].goal).collect();
    let mut layer: HashMap<Key, Cost> = HashMap::from([(pack(start), 0)]);
    for _ in 0..window {
        let mut next_layer: HashMap<Key, Cost> = HashMap::new();
        for (&key, &c) in &layer {
            let locs = unpack(key, k);
            for next in joint_successors(map, &locs) {
                let nc = c + joint_step_cost(&goals, &locs, &next);
                let slot = next_layer.entry(pack(&next)).or_insert(Cost::MAX);
                *slot = (*slot).min(nc);
            }
        }
        if next_layer.len() > limits.max_states {
            return Err(OracleError::StateLimit(limits.max_states));
        }
        layer = next_layer;
    }
    Ok(layer)
}

/// Largest total residual over pairwise disjoint entries, by exhaustion.
pub fn max_disjoint_residual(store: &PenaltyStore, candidates: &[EntryId]) -> Scaled {
    fn rec(store: &PenaltyStore, cands: &[EntryId], used: &mut Vec<usize>) -> Scaled {
        let Some((&first, rest)) = cands.split_first() else { return 0 };
        let skip = rec(store, rest, used);
        let e = store.entry(first);
        if e.group.iter().any(|a| used.contains(&a)) {
            return skip;
        }
        let before = used.len();
        used.extend(e.group.iter());
        let take = e.residual() + rec(store, rest, used);
        used.truncate(before);
        skip.max(take)
    }
    rec(store, candidates, &mut Vec::new())
}

/// Oracle values for one group's windowed problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct WindowedOptimum {
    /// `min c + Σ h^BD`, penalties disabled.
    pub physical: Cost,
    /// `min over terminals of w·(c + Σ h^BD) + R(C^W)`, scaled, where `R` is
    /// the best disjoint set of stored residuals the terminal matches.
    /// Equals `w` times the optimum of `c + h^BD + R/w`.
    pub weighted_bound: Scaled,
}

pub fn windowed_optimum(
    instance: &Instance,
    group: &AgentGroup,
    start: &[Cell],
    window: usize,
    weight: SuboptFactor,
    store: Option<&PenaltyStore>,
    limits: &OracleLimits,
) -> Result<WindowedOptimum, OracleError> {
    let costs = terminal_costs(instance, group, start, window, limits)?;
    let k = group.len();
    let mut physical = Cost::MAX;
    let mut weighted_bound = Scaled::MAX;
    // Sorted so the result does not depend on hash order (it cannot, but
    // this keeps the work deterministic too).
    let mut keys: Vec<(&Key, &Cost)> = costs.iter().collect();
    keys.sort_unstable();
    for (&key, &c) in keys {
        let locs = unpack(key, k);
        let tail = c + instance.group_h(group, &locs);
        physical = physical.min(tail);
        let r = store.map_or(0, |s| max_disjoint_residual(s, &s.matching_candidates(group, &locs)));
        weighted_bound = weighted_bound.min(weight.weigh(tail) + r);
    }
    if costs.is_empty() {
        return Err(OracleError::Unreachable);
    }
    Ok(WindowedOptimum { physical, weighted_bound })
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct BoundReport {
    pub group: AgentGroup,
    pub objective: Scaled,
    pub physical_optimum: Cost,
    pub bound: Scaled,
    pub pass: bool,
}

/// Fails iff the solution's objective exceeds `w` times the oracle optimum.
pub fn verify_group_w_bound(solution: &GroupSolution, optimum: &WindowedOptimum) -> BoundReport {
    BoundReport {
        group: solution.group.clone(),
        objective: solution.objective,
        physical_optimum: optimum.physical,
        bound: optimum.weighted_bound,
        pass: solution.objective <= optimum.weighted_bound,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct AdmissibilityViolation {
    pub entry: EntryId,
    pub h_value: Scaled,
    /// `w·h*`, scaled.
    pub bound: Scaled,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct AdmissibilityReport {
    pub checked: usize,
    pub violations: Vec<AdmissibilityViolation>,
}

impl AdmissibilityReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `h ≤ w·h*` for every stored entry. Entries whose goal
/// configuration is unreachable have `h* = ∞` and pass.
pub fn verify_penalty_admissibility(store: &PenaltyStore, instance: &Instance, limits: &OracleLimits) -> Result<AdmissibilityReport, OracleError> {
    let mut tables: HashMap<AgentGroup, JointDistanceTable> = HashMap::new();
    verify_penalty_admissibility_cached(store, instance, limits, &mut tables)
}

/// As [`verify_penalty_admissibility`], reusing distance tables across calls
/// on the same instance.
pub fn verify_penalty_admissibility_cached(
    store: &PenaltyStore,
    instance: &Instance,
    limits: &OracleLimits,
    tables: &mut HashMap<AgentGroup, JointDistanceTable>,
) -> Result<AdmissibilityReport, OracleError> {
    let w = store.weight();
    let mut report = AdmissibilityReport::default();
    for e in store.entries() {
        if !tables.contains_key(&e.group) {
            tables.insert(e.group.clone(), JointDistanceTable::build(instance, &e.group, limits)?);
        }
        report.checked += 1;
        if let Some(h_star) = tables[&e.group].get(&e.locations) {
            let bound = w.weigh(h_star);
            if e.h_value > bound {
                report.violations.push(AdmissibilityViolation { entry: e.id, h_value: e.h_value, bound });
            }
        }
    }
    Ok(report)
}

/// Two groups with optimal costs `opt` planned at costs `cost`.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct GapRecord {
    pub optimal: [Cost; 2],
    pub planned: [Cost; 2],
    pub weight: SuboptFactor,
    pub global_pass: bool,
    pub group_pass: [bool; 2],
}

/// A plan can be within `w` of the global optimum while one group's part
/// is far outside its own bound.
pub fn check_global_vs_group_gap(optimal: [Cost; 2], planned: [Cost; 2], weight: SuboptFactor) -> GapRecord {
    let within = |c: Cost, opt: Cost| weight.scale(c) <= weight.weigh(opt);
    GapRecord {
        optimal,
        planned,
        weight,
        global_pass: within(planned[0] + planned[1], optimal[0] + optimal[1]),
        group_pass: [within(planned[0], optimal[0]), within(planned[1], optimal[1])],
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct VerificationRecord {
    pub check: String,
    pub instance: String,
    pub expected: serde_json::Value,
    pub actual: serde_json::Value,
    pub pass: bool,
}

pub fn write_verification_jsonl(records: &[VerificationRecord], mut out: impl Write) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
