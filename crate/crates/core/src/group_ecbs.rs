//! High-level constraint-tree focal search for one agent group.
//!
//! With [`HighLevelRule::Group`] the anchor is ordered by
//! `F3(n) = h_p(n) + w·Σ lb_i` and a node enters focal when
//! `c + w·h^BD(C^W) + h_p(n) <= min F3`. Terminal configurations that match
//! stored penalties are treated as heuristic conflicts: the node is split
//! into one child per entry member forbidding that member's cell at `W`,
//! plus one child that pins every member there and adds the entry's residual
//! to `h_p`.
//!
//! [`HighLevelRule::Standard`] is plain windowed ECBS (`F2 = Σ lb_i`, focal
//! `c + h^BD <= w·min F2`) without penalties; it backs the baseline planner.

use std::collections::BTreeSet;
use std::time::Instant;

use thiserror::Error;

use crate::grid::Cell;
use crate::low_level::{plan_agent_path, AgentConstraint, AgentPath, FocalRule, PathQuery};
use crate::model::{count_collisions, first_collision, AgentGroup, Conflict, Configuration, Instance};
use crate::penalty::{EntryId, PenaltyStore};
use crate::weight::{Cost, Scaled, SuboptFactor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("no constraint-satisfying solution exists for the group")]
    Infeasible,
    #[error("planning budget exhausted")]
    Timeout,
    #[error("constraint tree node limit reached")]
    NodeLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HighLevelRule {
    Group,
    Standard,
}

#[derive(Debug, Clone)]
pub struct CtOptions {
    pub window: usize,
    pub weight: SuboptFactor,
    pub high: HighLevelRule,
    pub low: FocalRule,
    pub deadline: Option<Instant>,
    pub max_nodes: Option<usize>,
    pub trace: bool,
}

impl CtOptions {
    pub fn group(window: usize, weight: SuboptFactor) -> Self {
        Self {
            window,
            weight,
            high: HighLevelRule::Group,
            low: FocalRule::WeightedHeuristic,
            deadline: None,
            max_nodes: None,
            trace: false,
        }
    }

    pub fn standard(window: usize, weight: SuboptFactor) -> Self {
        Self { high: HighLevelRule::Standard, low: FocalRule::Standard, ..Self::group(window, weight) }
    }

    pub fn with_deadline(mut self, deadline: Option<Instant>) -> Self {
        self.deadline = deadline;
        self
    }
}

/// `F3 = h_p + w·Σ lb_i`, in scaled units.
pub fn group_priority(weight: SuboptFactor, penalty: Scaled, lower_bounds: &[Cost]) -> Scaled {
    penalty + weight.weigh(lower_bounds.iter().sum())
}

/// One constraint-tree event, recorded when tracing is enabled.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CtTrace {
    pub node: usize,
    pub parent: Option<usize>,
    pub constraint: Option<String>,
    pub priority: Scaled,
    pub conflict: Option<Conflict>,
}

/// A group's windowed solution and its certificate.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GroupSolution {
    pub group: AgentGroup,
    /// One path of `W + 1` cells per member, in member order.
    pub paths: Vec<Vec<Cell>>,
    pub terminal: Vec<Cell>,
    /// `c(C^0_Gr, C^W_Gr)`.
    pub cost: Cost,
    /// `h^BD(C^W_Gr)`.
    pub terminal_h: Cost,
    /// `h_p` of the solution node.
    pub penalty: Scaled,
    pub incurred: Vec<EntryId>,
    /// Objective under the rule used, scaled: `c + w·h^BD + h_p` for the
    /// group rule, `c + h^BD` for the standard rule.
    pub objective: Scaled,
    /// Focal threshold when the solution was extracted (`min F3` for the
    /// group rule, `w·min F2` for the standard rule).
    pub lower_bound: Scaled,
    pub root_priority: Scaled,
    pub expanded: usize,
    pub generated: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<CtTrace>,
}

impl GroupSolution {
    /// `h(C^W_Gr) = w·h^BD + h_p`, scaled.
    pub fn terminal_heuristic(&self, weight: SuboptFactor) -> Scaled {
        weight.weigh(self.terminal_h) + self.penalty
    }

    pub fn path_of(&self, agent: usize) -> Option<&[Cell]> {
        self.group.position(agent).map(|i| self.paths[i].as_slice())
    }

    /// Group locations at each timestep.
    pub fn steps(&self) -> Vec<Vec<Cell>> {
        let len = self.paths.first().map_or(0, Vec::len);
        (0..len).map(|t| self.paths.iter().map(|p| p[t]).collect()).collect()
    }
}

#[derive(Clone)]
struct CtNode {
    parent: Option<usize>,
    constraints: Vec<Vec<AgentConstraint>>,
    paths: Vec<AgentPath>,
    lbs: Vec<Cost>,
    penalty: Scaled,
    incurred: Vec<EntryId>,
    cost: Cost,
    hbd: Cost,
    conflicts: usize,
    /// Members off their goal that wait on the first step.
    stalls: usize,
    lower: Scaled,
    admission: Scaled,
}

/// Conflicts, then objective, then first-step stalls, then lower bound.
type FocalKey = (usize, Scaled, usize, Scaled, usize);

struct CtSearch<'a> {
    instance: &'a Instance,
    group: &'a AgentGroup,
    start: Vec<Cell>,
    store: Option<&'a PenaltyStore>,
    opts: &'a CtOptions,
    nodes: Vec<CtNode>,
    anchor: BTreeSet<(Scaled, usize)>,
    pending: BTreeSet<(Scaled, usize)>,
    focal: BTreeSet<FocalKey>,
    threshold: Scaled,
    trace: Vec<CtTrace>,
}

impl<'a> CtSearch<'a> {
    fn plan(&self, member: usize, constraints: &[AgentConstraint], others: &[&[Cell]]) -> Option<AgentPath> {
        plan_agent_path(&PathQuery {
            instance: self.instance,
            agent: self.group.members()[member],
            start: self.start[member],
            constraints,
            window: self.opts.window,
            weight: self.opts.weight,
            rule: self.opts.low,
            siblings: others,
        })
    }

    fn threshold_for(&self, min_lower: Scaled) -> Scaled {
        match self.opts.high {
            HighLevelRule::Group => min_lower,
            HighLevelRule::Standard => min_lower * self.opts.weight.numerator() as Scaled,
        }
    }

    fn focal_key(node: &CtNode, id: usize) -> FocalKey {
        (node.conflicts, node.admission, node.stalls, node.lower, id)
    }

    fn terminal(node: &CtNode) -> Vec<Cell> {
        node.paths.iter().map(AgentPath::terminal).collect()
    }

    /// Fills in the derived fields of a node whose paths are final.
    fn finish(&self, mut node: CtNode) -> CtNode {
        let w = self.opts.weight;
        let members = self.group.members();
        node.cost = node.paths.iter().map(|p| p.cost).sum();
        node.hbd = members.iter().zip(&node.paths).map(|(&a, p)| self.instance.h(a, p.terminal())).sum();
        let refs: Vec<(usize, &[Cell])> = members.iter().zip(&node.paths).map(|(&a, p)| (a, p.cells.as_slice())).collect();
        let mut conflicts = count_collisions(&refs);
        if let Some(store) = self.store {
            conflicts += store.matched_excluding(self.group, &Self::terminal(&node), &node.incurred).len();
        }
        node.conflicts = conflicts;
        node.stalls = members
            .iter()
            .zip(&node.paths)
            .filter(|(&a, p)| p.cells[0] == p.cells[1] && p.cells[0] != self.instance.tasks()[a].goal)
            .count();
        match self.opts.high {
            HighLevelRule::Group => {
                node.lower = group_priority(w, node.penalty, &node.lbs);
                node.admission = w.scale(node.cost) + w.weigh(node.hbd) + node.penalty;
            }
            HighLevelRule::Standard => {
                node.lower = node.lbs.iter().sum::<Cost>() as Scaled;
                node.admission = w.scale(node.cost + node.hbd);
            }
        }
        node
    }

    fn insert(&mut self, node: CtNode) -> usize {
        let id = self.nodes.len();
        self.anchor.insert((node.lower, id));
        if node.admission <= self.threshold {
            self.focal.insert(Self::focal_key(&node, id));
        } else {
            self.pending.insert((node.admission, id));
        }
        self.nodes.push(node);
        id
    }

    fn root(&self) -> Option<CtNode> {
        let n = self.group.len();
        let mut paths: Vec<AgentPath> = Vec::with_capacity(n);
        for k in 0..n {
            let others: Vec<&[Cell]> = paths.iter().map(|p| p.cells.as_slice()).collect();
            paths.push(self.plan(k, &[], &others)?);
        }
        let lbs = paths.iter().map(|p| p.lower_bound).collect();
        Some(self.finish(CtNode {
            parent: None,
            constraints: vec![Vec::new(); n],
            paths,
            lbs,
            penalty: 0,
            incurred: Vec::new(),
            cost: 0,
            hbd: 0,
            conflicts: 0,
            stalls: 0,
            lower: 0,
            admission: 0,
        }))
    }

    /// Child of `parent` with one extra constraint on `member`, replanned.
    fn constrained_child(&self, parent: usize, member: usize, constraint: AgentConstraint) -> Option<CtNode> {
        let p = &self.nodes[parent];
        let mut child = p.clone();
        child.parent = Some(parent);
        child.constraints[member].push(constraint);
        let others: Vec<&[Cell]> =
            p.paths.iter().enumerate().filter(|(k, _)| *k != member).map(|(_, q)| q.cells.as_slice()).collect();
        let path = self.plan(member, &child.constraints[member], &others)?;
        // Constraints only accumulate down the tree, so the parent's bound
        // still holds.
        child.lbs[member] = child.lbs[member].max(path.lower_bound);
        child.paths[member] = path;
        Some(self.finish(child))
    }

    fn record(&mut self, node: Option<usize>, parent: Option<usize>, constraint: Option<String>, priority: Scaled, conflict: Option<Conflict>) {
        if self.opts.trace {
            self.trace.push(CtTrace { node: node.unwrap_or(usize::MAX), parent, constraint, priority, conflict });
        }
    }

    fn push_child(&mut self, parent: usize, child: Option<CtNode>, label: String) {
        if let Some(c) = child {
            let priority = c.lower;
            let id = self.insert(c);
            self.record(Some(id), Some(parent), Some(label), priority, None);
        }
    }

    fn run(mut self) -> Result<GroupSolution, SolveError> {
        let root = self.root().ok_or(SolveError::Infeasible)?;
        let root_priority = root.lower;
        let root_id = self.insert(root);
        self.record(Some(root_id), None, None, root_priority, None);
        let window = self.opts.window;
        let mut expanded = 0usize;

        loop {
            if self.opts.deadline.is_some_and(|d| Instant::now() >= d) {
                return Err(SolveError::Timeout);
            }
            if self.opts.max_nodes.is_some_and(|m| self.nodes.len() >= m) {
                return Err(SolveError::NodeLimit);
            }
            let &(min_lower, _) = self.anchor.first().ok_or(SolveError::Infeasible)?;
            let threshold = self.threshold_for(min_lower);
            if threshold > self.threshold {
                self.threshold = threshold;
                while let Some(&(a, id)) = self.pending.first() {
                    if a > threshold {
                        break;
                    }
                    self.pending.pop_first();
                    self.focal.insert(Self::focal_key(&self.nodes[id], id));
                }
            }
            let id = match self.focal.pop_first() {
                Some((.., id)) => id,
                // Only reachable when the low level violates its focal rule.
                None => {
                    let id = self.anchor.first().expect("anchor nonempty").1;
                    self.pending.remove(&(self.nodes[id].admission, id));
                    id
                }
            };
            let node_lower = self.nodes[id].lower;
            self.anchor.remove(&(node_lower, id));
            expanded += 1;

            let members = self.group.members();
            let refs: Vec<(usize, &[Cell])> =
                members.iter().zip(&self.nodes[id].paths).map(|(&a, p)| (a, p.cells.as_slice())).collect();
            if let Some(conflict) = first_collision(&refs) {
                self.record(Some(id), self.nodes[id].parent, None, node_lower, Some(conflict.clone()));
                let pos = |a: usize| self.group.position(a).expect("member");
                match conflict {
                    Conflict::Vertex { a, b, cell, t } => {
                        for agent in [a, b] {
                            let c = AgentConstraint::ForbidVertex { cell, t };
                            let child = self.constrained_child(id, pos(agent), c);
                            self.push_child(id, child, format!("a{agent} !{cell}@{t}"));
                        }
                    }
                    Conflict::Edge { a, b, from, to, t } => {
                        for (agent, f, to) in [(a, from, to), (b, to, from)] {
                            let c = AgentConstraint::ForbidEdge { from: f, to, t };
                            let child = self.constrained_child(id, pos(agent), c);
                            self.push_child(id, child, format!("a{agent} !{f}->{to}@{t}"));
                        }
                    }
                    Conflict::Heuristic { .. } => unreachable!("collision scan yields physical conflicts"),
                }
                continue;
            }

            if let Some(store) = self.store {
                let node = &self.nodes[id];
                let unresolved = store.matched_excluding(self.group, &Self::terminal(node), &node.incurred);
                if let Some(&entry_id) = unresolved.first() {
                    let entry = store.entry(entry_id);
                    self.record(Some(id), node.parent, None, node_lower, Some(Conflict::Heuristic { entry: entry_id, t: window }));
                    for (agent, &cell) in entry.group.iter().zip(&entry.locations) {
                        let member = self.group.position(agent).expect("entry is a subset of the group");
                        let c = AgentConstraint::ForbidVertex { cell, t: window };
                        let child = self.constrained_child(id, member, c);
                        self.push_child(id, child, format!("avoid e{entry_id} via a{agent}"));
                    }
                    let mut incur = self.nodes[id].clone();
                    incur.parent = Some(id);
                    for (agent, &cell) in entry.group.iter().zip(&entry.locations) {
                        let member = self.group.position(agent).expect("member");
                        incur.constraints[member].push(AgentConstraint::RequireVertex { cell, t: window });
                    }
                    incur.penalty += entry.residual();
                    incur.incurred.push(entry_id);
                    let incur = self.finish(incur);
                    self.push_child(id, Some(incur), format!("incur e{entry_id}"));
                    continue;
                }
            }

            let node = &self.nodes[id];
            return Ok(GroupSolution {
                group: self.group.clone(),
                paths: node.paths.iter().map(|p| p.cells.clone()).collect(),
                terminal: Self::terminal(node),
                cost: node.cost,
                terminal_h: node.hbd,
                penalty: node.penalty,
                incurred: node.incurred.clone(),
                objective: node.admission,
                lower_bound: threshold,
                root_priority,
                expanded,
                generated: self.nodes.len(),
                trace: self.trace,
            });
        }
    }
}

/// Plans `group` from `start`, ignoring every agent outside the group.
///
/// `store` supplies penalties for the group rule; pass `None` to plan
/// without learned heuristics.
pub fn solve_group(
    instance: &Instance,
    group: &AgentGroup,
    start: &Configuration,
    store: Option<&PenaltyStore>,
    opts: &CtOptions,
) -> Result<GroupSolution, SolveError> {
    let store = match opts.high {
        HighLevelRule::Group => store,
        HighLevelRule::Standard => None,
    };
    CtSearch {
        instance,
        group,
        start: start.project(group),
        store,
        opts,
        nodes: Vec::new(),
        anchor: BTreeSet::new(),
        pending: BTreeSet::new(),
        focal: BTreeSet::new(),
        threshold: Scaled::MIN,
        trace: Vec::new(),
    }
    .run()
}
