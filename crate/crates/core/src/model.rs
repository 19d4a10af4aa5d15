//! Shared vocabulary: problem instances, configurations, groups, costs and
//! collisions.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use thiserror::Error;

use crate::grid::{backward_dijkstra, AgentTask, Cell, DistanceField, GridMap};
use crate::weight::Cost;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("agent ids must be contiguous from 0; found {found} at position {position}")]
    AgentIds { position: usize, found: usize },
    #[error("agent {agent}: {what} cell {cell} is blocked or out of bounds")]
    BlockedCell { agent: usize, what: &'static str, cell: Cell },
    #[error("agent {agent} cannot reach its goal from its start")]
    Unreachable { agent: usize },
    #[error("agents {a} and {b} share a {what} cell")]
    SharedCell { a: usize, b: usize, what: &'static str },
    #[error("agent {agent}: illegal move {from} -> {to}")]
    IllegalMove { agent: usize, from: Cell, to: Cell },
    #[error("path length mismatch: {left} vs {right} (window {window})")]
    LengthMismatch { left: usize, right: usize, window: usize },
    #[error("collision in plan: {0}")]
    Collision(Conflict),
    #[error("configuration has {found} agents, expected {expected}")]
    AgentCount { expected: usize, found: usize },
    #[error("groups overlap on agent {0}")]
    Overlap(usize),
}

/// A validated problem: map, tasks, and each agent's distance field.
///
/// Cheap to clone; the map and fields are shared.
#[derive(Debug, Clone)]
pub struct Instance {
    map: Arc<GridMap>,
    tasks: Arc<Vec<AgentTask>>,
    fields: Arc<Vec<DistanceField>>,
}

impl Instance {
    /// Validates tasks against the map and precomputes distance fields.
    ///
    /// Rejects tasks whose start cannot reach the goal and duplicate starts
    /// or goals, since no collision-free start or goal configuration exists
    /// then.
    pub fn new(map: impl Into<Arc<GridMap>>, tasks: Vec<AgentTask>) -> Result<Self, ModelError> {
        let map = map.into();
        for (position, task) in tasks.iter().enumerate() {
            if task.agent_id != position {
                return Err(ModelError::AgentIds { position, found: task.agent_id });
            }
            for (what, cell) in [("start", task.start), ("goal", task.goal)] {
                if !map.is_passable(cell) {
                    return Err(ModelError::BlockedCell { agent: position, what, cell });
                }
            }
        }
        for (a, ta) in tasks.iter().enumerate() {
            for (b, tb) in tasks.iter().enumerate().skip(a + 1) {
                if ta.start == tb.start {
                    return Err(ModelError::SharedCell { a, b, what: "start" });
                }
                if ta.goal == tb.goal {
                    return Err(ModelError::SharedCell { a, b, what: "goal" });
                }
            }
        }
        let fields: Vec<_> = tasks.iter().map(|t| backward_dijkstra(&map, t.goal)).collect();
        for (agent, (task, field)) in tasks.iter().zip(&fields).enumerate() {
            if field.get(task.start).is_none() {
                return Err(ModelError::Unreachable { agent });
            }
        }
        Ok(Self { map, tasks: Arc::new(tasks), fields: Arc::new(fields) })
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn shared_map(&self) -> Arc<GridMap> {
        Arc::clone(&self.map)
    }

    pub fn tasks(&self) -> &[AgentTask] {
        &self.tasks
    }

    pub fn num_agents(&self) -> usize {
        self.tasks.len()
    }

    pub fn field(&self, agent: usize) -> &DistanceField {
        &self.fields[agent]
    }

    /// `h^BD` of one agent; cells the goal cannot be reached from read as a
    /// huge value so they never win a comparison.
    #[inline]
    pub fn h(&self, agent: usize, cell: Cell) -> Cost {
        self.fields[agent].raw(cell) as Cost
    }

    pub fn start_configuration(&self) -> Configuration {
        Configuration(self.tasks.iter().map(|t| t.start).collect())
    }

    pub fn goal_configuration(&self) -> Configuration {
        Configuration(self.tasks.iter().map(|t| t.goal).collect())
    }

    /// Transition cost for one agent, checking legality.
    pub fn transition_cost(&self, agent: usize, from: Cell, to: Cell) -> Result<Cost, ModelError> {
        if !self.map.is_legal_move(from, to) {
            return Err(ModelError::IllegalMove { agent, from, to });
        }
        Ok(step_cost(self.tasks[agent].goal, from, to))
    }

    /// Sum of `h^BD` over the agents in `group` at `locations` (aligned with
    /// the group's members).
    pub fn group_h(&self, group: &AgentGroup, locations: &[Cell]) -> Cost {
        group.iter().zip(locations).map(|(a, c)| self.h(a, *c)).sum()
    }
}

/// Unit cost except when resting on the goal.
#[inline]
pub fn step_cost(goal: Cell, from: Cell, to: Cell) -> Cost {
    Cost::from(!(from == to && from == goal))
}

/// Cost of one agent's cell sequence.
pub fn path_cost(goal: Cell, path: &[Cell]) -> Cost {
    path.windows(2).map(|w| step_cost(goal, w[0], w[1])).sum()
}

/// Transition cost of `task` moving `from -> to` on `map`.
pub fn transition_cost(map: &GridMap, task: &AgentTask, from: Cell, to: Cell) -> Result<Cost, ModelError> {
    if !map.is_legal_move(from, to) {
        return Err(ModelError::IllegalMove { agent: task.agent_id, from, to });
    }
    Ok(step_cost(task.goal, from, to))
}

/// Per-agent locations at one timestep.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct Configuration(pub Vec<Cell>);

impl Configuration {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, agent: usize) -> Cell {
        self.0[agent]
    }

    pub fn cells(&self) -> &[Cell] {
        &self.0
    }

    /// Locations of `group`'s members, in member order.
    pub fn project(&self, group: &AgentGroup) -> Vec<Cell> {
        group.iter().map(|a| self.0[a]).collect()
    }

    /// Stable 64-bit fingerprint for logs.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.0.hash(&mut h);
        h.finish()
    }

    /// First vertex collision among agents, if any.
    pub fn vertex_collision(&self) -> Option<(usize, usize)> {
        for a in 0..self.0.len() {
            for b in a + 1..self.0.len() {
                if self.0[a] == self.0[b] {
                    return Some((a, b));
                }
            }
        }
        None
    }
}

/// Sorted, non-empty set of agent ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct AgentGroup(Vec<usize>);

impl AgentGroup {
    pub fn new(members: impl IntoIterator<Item = usize>) -> Self {
        let mut v: Vec<usize> = members.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        assert!(!v.is_empty(), "agent group must be nonempty");
        Self(v)
    }

    pub fn singleton(agent: usize) -> Self {
        Self(vec![agent])
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, agent: usize) -> bool {
        self.0.binary_search(&agent).is_ok()
    }

    /// Position of `agent` within the member list.
    pub fn position(&self, agent: usize) -> Option<usize> {
        self.0.binary_search(&agent).ok()
    }

    pub fn is_subset_of(&self, other: &AgentGroup) -> bool {
        self.0.iter().all(|a| other.contains(*a))
    }

    pub fn is_disjoint(&self, other: &AgentGroup) -> bool {
        self.0.iter().all(|a| !other.contains(*a))
    }
}

impl fmt::Display for AgentGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, "}}")
    }
}

/// A collision between two agents, or a terminal configuration matching a
/// stored penalty entry.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Conflict {
    Vertex { a: usize, b: usize, cell: Cell, t: usize },
    /// `a` moves `from -> to` over `t -> t+1` while `b` moves `to -> from`.
    Edge { a: usize, b: usize, from: Cell, to: Cell, t: usize },
    Heuristic { entry: usize, t: usize },
}

impl Conflict {
    pub fn timestep(&self) -> usize {
        match *self {
            Conflict::Vertex { t, .. } | Conflict::Edge { t, .. } | Conflict::Heuristic { t, .. } => t,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Conflict::Vertex { .. } => 0,
            Conflict::Edge { .. } => 1,
            Conflict::Heuristic { .. } => 2,
        }
    }

    fn pair(&self) -> (usize, usize) {
        match *self {
            Conflict::Vertex { a, b, .. } | Conflict::Edge { a, b, .. } => (a.min(b), a.max(b)),
            Conflict::Heuristic { entry, .. } => (entry, entry),
        }
    }

    /// Deterministic selection order: timestep, then kind
    /// (vertex, edge, heuristic), then agent pair.
    pub fn order_key(&self) -> (usize, u8, (usize, usize)) {
        (self.timestep(), self.rank(), self.pair())
    }
}

impl fmt::Display for Conflict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Conflict::Vertex { a, b, cell, t } => write!(f, "vertex a{a}/a{b} at {cell} t={t}"),
            Conflict::Edge { a, b, from, to, t } => write!(f, "edge a{a}/a{b} {from}<->{to} t={t}"),
            Conflict::Heuristic { entry, t } => write!(f, "heuristic entry {entry} t={t}"),
        }
    }
}

/// All vertex and edge conflicts between two agents' paths over `[0, window]`.
pub fn detect_collisions(
    (a, path_a): (usize, &[Cell]),
    (b, path_b): (usize, &[Cell]),
    window: usize,
) -> Result<Vec<Conflict>, ModelError> {
    if path_a.len() != window + 1 || path_b.len() != window + 1 {
        return Err(ModelError::LengthMismatch { left: path_a.len(), right: path_b.len(), window });
    }
    let mut out = Vec::new();
    collisions_into(a, path_a, b, path_b, &mut out);
    Ok(out)
}

/// Pushes the conflicts of two equal-length paths, ordered by timestep with
/// the vertex conflict before the edge conflict at equal `t`.
pub(crate) fn collisions_into(a: usize, pa: &[Cell], b: usize, pb: &[Cell], out: &mut Vec<Conflict>) {
    let (a, b, pa, pb) = if a <= b { (a, b, pa, pb) } else { (b, a, pb, pa) };
    for t in 0..pa.len() {
        if pa[t] == pb[t] {
            out.push(Conflict::Vertex { a, b, cell: pa[t], t });
        }
        if t + 1 < pa.len() && pa[t] == pb[t + 1] && pa[t + 1] == pb[t] && pa[t] != pa[t + 1] {
            out.push(Conflict::Edge { a, b, from: pa[t], to: pa[t + 1], t });
        }
    }
}

/// First conflict (in [`Conflict::order_key`] order) among a set of paths.
pub fn first_collision(paths: &[(usize, &[Cell])]) -> Option<Conflict> {
    let mut best: Option<Conflict> = None;
    let mut buf = Vec::new();
    for i in 0..paths.len() {
        for j in i + 1..paths.len() {
            buf.clear();
            collisions_into(paths[i].0, paths[i].1, paths[j].0, paths[j].1, &mut buf);
            if let Some(c) = buf.first() {
                if best.as_ref().is_none_or(|b| c.order_key() < b.order_key()) {
                    best = Some(c.clone());
                }
            }
        }
    }
    best
}

/// Number of colliding (timestep, pair) events among a set of paths.
pub fn count_collisions(paths: &[(usize, &[Cell])]) -> usize {
    let mut n = 0;
    let mut buf = Vec::new();
    for i in 0..paths.len() {
        for j in i + 1..paths.len() {
            buf.clear();
            collisions_into(paths[i].0, paths[i].1, paths[j].0, paths[j].1, &mut buf);
            n += buf.len();
        }
    }
    n
}

/// Sum of transition costs over consecutive configurations.
pub fn sum_of_cost(instance: &Instance, steps: &[Configuration]) -> Result<Cost, ModelError> {
    let mut total = 0;
    for pair in steps.windows(2) {
        for agent in 0..instance.num_agents() {
            total += instance.transition_cost(agent, pair[0].get(agent), pair[1].get(agent))?;
        }
    }
    Ok(total)
}

/// A sequence of `window + 1` joint configurations starting at the current one.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct WindowedPlan {
    pub steps: Vec<Configuration>,
    pub window: usize,
}

impl WindowedPlan {
    /// Builds the joint plan from per-agent paths of equal length.
    pub fn from_paths(paths: &[Vec<Cell>]) -> Self {
        let len = paths.first().map_or(0, Vec::len);
        let steps = (0..len).map(|t| Configuration(paths.iter().map(|p| p[t]).collect())).collect();
        Self { steps, window: len.saturating_sub(1) }
    }

    pub fn agent_path(&self, agent: usize) -> Vec<Cell> {
        self.steps.iter().map(|c| c.get(agent)).collect()
    }

    /// Checks length, move legality and the absence of collisions.
    pub fn validate(&self, instance: &Instance) -> Result<(), ModelError> {
        validate_sequence(instance, &self.steps)?;
        if self.steps.len() != self.window + 1 {
            return Err(ModelError::LengthMismatch { left: self.steps.len(), right: self.window + 1, window: self.window });
        }
        Ok(())
    }

    pub fn cost(&self, instance: &Instance) -> Result<Cost, ModelError> {
        sum_of_cost(instance, &self.steps)
    }
}

/// Checks every configuration and transition of a joint sequence.
pub fn validate_sequence(instance: &Instance, steps: &[Configuration]) -> Result<(), ModelError> {
    let n = instance.num_agents();
    for config in steps {
        if config.len() != n {
            return Err(ModelError::AgentCount { expected: n, found: config.len() });
        }
        for (agent, &cell) in config.cells().iter().enumerate() {
            if !instance.map().is_passable(cell) {
                return Err(ModelError::BlockedCell { agent, what: "plan", cell });
            }
        }
        if let Some((a, b)) = config.vertex_collision() {
            return Err(ModelError::Collision(Conflict::Vertex { a, b, cell: config.get(a), t: 0 }));
        }
    }
    for (t, pair) in steps.windows(2).enumerate() {
        validate_transition(instance, &pair[0], &pair[1]).map_err(|e| match e {
            ModelError::Collision(Conflict::Edge { a, b, from, to, .. }) => {
                ModelError::Collision(Conflict::Edge { a, b, from, to, t })
            }
            other => other,
        })?;
    }
    Ok(())
}

/// Legality and swap check for one joint move.
pub fn validate_transition(instance: &Instance, from: &Configuration, to: &Configuration) -> Result<(), ModelError> {
    let n = instance.num_agents();
    for agent in 0..n {
        instance.transition_cost(agent, from.get(agent), to.get(agent))?;
    }
    if let Some((a, b)) = to.vertex_collision() {
        return Err(ModelError::Collision(Conflict::Vertex { a, b, cell: to.get(a), t: 1 }));
    }
    for a in 0..n {
        for b in a + 1..n {
            let (fa, ta, fb, tb) = (from.get(a), to.get(a), from.get(b), to.get(b));
            if fa == tb && ta == fb && fa != ta {
                return Err(ModelError::Collision(Conflict::Edge { a, b, from: fa, to: ta, t: 0 }));
            }
        }
    }
    Ok(())
}
