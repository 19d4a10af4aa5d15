//! Constrained space-time focal search for one agent over `(cell, t)`,
//! `t in [0, W]`.
//!
//! The anchor is ordered by `f = g + h^BD`. The focal set holds the open
//! states admitted by the configured [`FocalRule`] against the current anchor
//! minimum, ordered by conflicts with sibling paths, then the rule's
//! admission value, then larger `g`, then cell and timestep. The goal test is `t = W`; the returned lower bound is
//! the anchor minimum when the goal state is selected.

use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use crate::grid::{Cell, GridMap};
use crate::model::{step_cost, Instance};
use crate::weight::{Cost, Scaled, SuboptFactor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentConstraint {
    ForbidVertex { cell: Cell, t: usize },
    /// Forbids moving `from -> to` over `t -> t+1`.
    ForbidEdge { from: Cell, to: Cell, t: usize },
    /// Only used at `t = W`.
    RequireVertex { cell: Cell, t: usize },
}

/// Which states may enter the focal list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FocalRule {
    /// `g + w·h <= w·min f`. Keeps group heuristics `w`-admissible.
    WeightedHeuristic,
    /// Plain ECBS: `g + h <= w·min f`.
    Standard,
}

impl FocalRule {
    /// Scaled admission value compared against `w·min f`.
    #[inline]
    pub fn admission(self, weight: SuboptFactor, g: Cost, h: Cost) -> Scaled {
        match self {
            FocalRule::WeightedHeuristic => weight.scale(g) + weight.weigh(h),
            FocalRule::Standard => weight.scale(g + h),
        }
    }

    #[inline]
    pub fn admits(self, weight: SuboptFactor, g: Cost, h: Cost, min_f: Cost) -> bool {
        self.admission(weight, g, h) <= weight.weigh(min_f)
    }
}

/// Unmodified ECBS focal test `g + h <= w·min f`.
pub fn baseline_focal_admissible(g: Cost, h: Cost, weight: SuboptFactor, min_anchor: Cost) -> bool {
    FocalRule::Standard.admits(weight, g, h, min_anchor)
}

/// Focal test with the heuristic weighted: `g + w·h <= w·min f`.
pub fn weighted_focal_admissible(g: Cost, h: Cost, weight: SuboptFactor, min_anchor: Cost) -> bool {
    FocalRule::WeightedHeuristic.admits(weight, g, h, min_anchor)
}

/// A planned single-agent path over the window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentPath {
    /// Exactly `W + 1` cells.
    pub cells: Vec<Cell>,
    /// `c(C^0_i, C^W_i)`.
    pub cost: Cost,
    /// Anchor minimum `f` at termination.
    pub lower_bound: Cost,
    /// Conflicts with the sibling paths the search was scored against.
    pub conflicts: usize,
}

impl AgentPath {
    pub fn terminal(&self) -> Cell {
        *self.cells.last().expect("non-empty path")
    }
}

/// Inputs of one low-level search.
#[derive(Debug, Clone, Copy)]
pub struct PathQuery<'a> {
    pub instance: &'a Instance,
    pub agent: usize,
    pub start: Cell,
    pub constraints: &'a [AgentConstraint],
    pub window: usize,
    pub weight: SuboptFactor,
    pub rule: FocalRule,
    /// Current paths of the other group members, each `W + 1` long.
    pub siblings: &'a [&'a [Cell]],
}

struct Node {
    cell: Cell,
    t: u32,
    g: Cost,
    conflicts: u32,
    parent: u32,
}

const NO_PARENT: u32 = u32::MAX;

type FocalKey = (u32, Scaled, Reverse<Cost>, Cell, u32, u32);

struct Search<'a> {
    q: &'a PathQuery<'a>,
    nodes: Vec<Node>,
    best: HashMap<(Cell, u32), u32>,
    open: HashSet<u32>,
    anchor: BTreeSet<(Cost, u32)>,
    pending: BTreeSet<(Scaled, u32)>,
    focal: BTreeSet<FocalKey>,
    threshold: Scaled,
}

impl<'a> Search<'a> {
    fn h(&self, cell: Cell) -> Cost {
        self.q.instance.h(self.q.agent, cell)
    }

    fn f(&self, id: u32) -> Cost {
        let n = &self.nodes[id as usize];
        n.g + self.h(n.cell)
    }

    fn focal_key(&self, id: u32) -> FocalKey {
        let n = &self.nodes[id as usize];
        (n.conflicts, self.admission(id), Reverse(n.g), n.cell, n.t, id)
    }

    fn admission(&self, id: u32) -> Scaled {
        let n = &self.nodes[id as usize];
        self.q.rule.admission(self.q.weight, n.g, self.h(n.cell))
    }

    fn push(&mut self, node: Node) {
        let key = (node.cell, node.t);
        let id = self.nodes.len() as u32;
        self.nodes.push(node);
        if let Some(old) = self.best.insert(key, id) {
            if self.open.remove(&old) {
                self.anchor.remove(&(self.f(old), old));
                if !self.pending.remove(&(self.admission(old), old)) {
                    self.focal.remove(&self.focal_key(old));
                }
            }
        }
        self.open.insert(id);
        self.anchor.insert((self.f(id), id));
        let a = self.admission(id);
        if a <= self.threshold {
            self.focal.insert(self.focal_key(id));
        } else {
            self.pending.insert((a, id));
        }
    }

    fn remove_open(&mut self, id: u32) {
        self.open.remove(&id);
        self.anchor.remove(&(self.f(id), id));
        if !self.pending.remove(&(self.admission(id), id)) {
            self.focal.remove(&self.focal_key(id));
        }
    }
}

/// Distances to `target` up to `limit` moves.
fn bounded_distances(map: &GridMap, target: Cell, limit: usize) -> HashMap<Cell, usize> {
    let mut dist = HashMap::from([(target, 0usize)]);
    let mut queue = VecDeque::from([target]);
    while let Some(cell) = queue.pop_front() {
        let d = dist[&cell];
        if d == limit {
            continue;
        }
        for n in map.moves(cell) {
            dist.entry(n).or_insert_with(|| {
                queue.push_back(n);
                d + 1
            });
        }
    }
    dist
}

/// Plans one agent's windowed path. `None` when no path of exactly `W`
/// steps satisfies the constraints.
pub fn plan_agent_path(q: &PathQuery<'_>) -> Option<AgentPath> {
    let w = q.window;
    assert!(w >= 1, "window must be at least 1");
    let map = q.instance.map();
    let goal = q.instance.tasks()[q.agent].goal;

    let mut forbid_v = HashSet::new();
    let mut forbid_e = HashSet::new();
    let mut required: Option<Cell> = None;
    for c in q.constraints {
        match *c {
            AgentConstraint::ForbidVertex { cell, t } => {
                forbid_v.insert((cell, t));
            }
            AgentConstraint::ForbidEdge { from, to, t } => {
                forbid_e.insert((from, to, t));
            }
            AgentConstraint::RequireVertex { cell, t } => {
                debug_assert_eq!(t, w, "require-vertex constraints live at the horizon");
                match required {
                    Some(r) if r != cell => return None,
                    _ => required = Some(cell),
                }
            }
        }
    }
    if forbid_v.contains(&(q.start, 0)) {
        return None;
    }
    if let Some(r) = required {
        if forbid_v.contains(&(r, w)) {
            return None;
        }
    }
    let req_dist = required.map(|r| bounded_distances(map, r, w));
    let reachable = |cell: Cell, t: usize| match &req_dist {
        Some(d) => d.get(&cell).is_some_and(|&d| d <= w - t),
        None => true,
    };
    if !reachable(q.start, 0) {
        return None;
    }

    let mut s = Search {
        q,
        nodes: Vec::new(),
        best: HashMap::new(),
        open: HashSet::new(),
        anchor: BTreeSet::new(),
        pending: BTreeSet::new(),
        focal: BTreeSet::new(),
        threshold: Scaled::MIN,
    };
    let start_conflicts = q.siblings.iter().filter(|p| p[0] == q.start).count() as u32;
    s.push(Node { cell: q.start, t: 0, g: 0, conflicts: start_conflicts, parent: NO_PARENT });

    loop {
        let &(min_f, _) = s.anchor.first()?;
        let threshold = q.weight.weigh(min_f);
        if threshold > s.threshold {
            s.threshold = threshold;
            while let Some(&(a, id)) = s.pending.first() {
                if a > threshold {
                    break;
                }
                s.pending.pop_first();
                s.focal.insert(s.focal_key(id));
            }
        }
        let id = match s.focal.first() {
            Some(k) => k.5,
            // Unreachable for both rules: the anchor minimum is always admitted.
            None => s.anchor.first()?.1,
        };
        s.remove_open(id);

        let (cell, t, g, conflicts) = {
            let n = &s.nodes[id as usize];
            (n.cell, n.t as usize, n.g, n.conflicts)
        };
        if t == w {
            let mut cells = Vec::with_capacity(w + 1);
            let mut cur = id;
            while cur != NO_PARENT {
                let n = &s.nodes[cur as usize];
                cells.push(n.cell);
                cur = n.parent;
            }
            cells.reverse();
            return Some(AgentPath { cells, cost: g, lower_bound: min_f, conflicts: conflicts as usize });
        }

        for next in map.neighbors(cell) {
            let nt = t + 1;
            if forbid_v.contains(&(next, nt)) || forbid_e.contains(&(cell, next, t)) || !reachable(next, nt) {
                continue;
            }
            let ng = g + step_cost(goal, cell, next);
            let extra = q
                .siblings
                .iter()
                .filter(|p| p[nt] == next || (next != cell && p[t] == next && p[nt] == cell))
                .count() as u32;
            let nc = conflicts + extra;
            if let Some(&old) = s.best.get(&(next, nt as u32)) {
                let o = &s.nodes[old as usize];
                if (o.g, o.conflicts) <= (ng, nc) {
                    continue;
                }
            }
            s.push(Node { cell: next, t: nt as u32, g: ng, conflicts: nc, parent: id });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{AgentTask, GridMap};

    fn corridor_instance(len: usize, start: u32, goal: u32) -> Instance {
        Instance::new(GridMap::open(len, 1), vec![AgentTask { agent_id: 0, start: Cell(start), goal: Cell(goal) }]).unwrap()
    }

    fn query<'a>(inst: &'a Instance, constraints: &'a [AgentConstraint], window: usize, w: SuboptFactor) -> PathQuery<'a> {
        PathQuery {
            instance: inst,
            agent: 0,
            start: inst.tasks()[0].start,
            constraints,
            window,
            weight: w,
            rule: FocalRule::WeightedHeuristic,
            siblings: &[],
        }
    }

    #[test]
    fn unconstrained_reaches_goal_and_rests() {
        let inst = corridor_instance(6, 0, 3);
        let p = plan_agent_path(&query(&inst, &[], 5, SuboptFactor::ONE)).unwrap();
        assert_eq!(p.cells, [0, 1, 2, 3, 3, 3].map(Cell).to_vec());
        assert_eq!((p.cost, p.lower_bound), (3, 3));
    }

    #[test]
    fn focal_rule_arithmetic() {
        let w = SuboptFactor::integer(2);
        assert!(weighted_focal_admissible(3, 4, w, 6));
        assert!(!weighted_focal_admissible(5, 4, w, 6));
        assert!(baseline_focal_admissible(5, 4, w, 6));
        // Inclusive boundary.
        assert!(baseline_focal_admissible(8, 4, w, 6));
        assert!(!baseline_focal_admissible(9, 4, w, 6));
        // w = 1 admits only the anchor minimum.
        assert!(baseline_focal_admissible(2, 4, SuboptFactor::ONE, 6));
        assert!(!baseline_focal_admissible(3, 4, SuboptFactor::ONE, 6));
    }

    #[test]
    fn forbid_vertex_forces_wait_or_detour() {
        let inst = Instance::new(GridMap::open(3, 2), vec![AgentTask { agent_id: 0, start: Cell(0), goal: Cell(2) }]).unwrap();
        let cons = [AgentConstraint::ForbidVertex { cell: Cell(1), t: 1 }];
        let p = plan_agent_path(&query(&inst, &cons, 2, SuboptFactor::ONE)).unwrap();
        assert_ne!(p.cells[1], Cell(1));
        assert_eq!(p.lower_bound, 3);
        assert_eq!(p.cost + inst.h(0, p.terminal()), 3);
    }

    #[test]
    fn require_vertex_is_honored() {
        let inst = corridor_instance(6, 2, 5);
        let cons = [AgentConstraint::RequireVertex { cell: Cell(0), t: 2 }];
        let p = plan_agent_path(&query(&inst, &cons, 2, SuboptFactor::ONE)).unwrap();
        assert_eq!(p.cells, [2, 1, 0].map(Cell).to_vec());
        let far = [AgentConstraint::RequireVertex { cell: Cell(5), t: 2 }];
        assert!(plan_agent_path(&query(&inst, &far, 2, SuboptFactor::ONE)).is_none());
    }

    #[test]
    fn forbidden_start_is_infeasible() {
        let inst = corridor_instance(3, 0, 2);
        let cons = [AgentConstraint::ForbidVertex { cell: Cell(0), t: 0 }];
        assert!(plan_agent_path(&query(&inst, &cons, 1, SuboptFactor::ONE)).is_none());
    }

    #[test]
    fn edge_constraint() {
        let inst = corridor_instance(3, 0, 2);
        let cons = [AgentConstraint::ForbidEdge { from: Cell(0), to: Cell(1), t: 0 }];
        let p = plan_agent_path(&query(&inst, &cons, 2, SuboptFactor::ONE)).unwrap();
        assert_eq!(p.cells, [0, 0, 1].map(Cell).to_vec());
    }

    #[test]
    fn avoids_sibling_when_free() {
        // Two equally short routes around a block; the sibling sits on one.
        let map = GridMap::from_rows(&["...", ".@.", "..."]).unwrap();
        let inst = Instance::new(map.clone(), vec![
            AgentTask { agent_id: 0, start: map.cell(0, 0), goal: map.cell(2, 2) },
            AgentTask { agent_id: 1, start: map.cell(0, 2), goal: map.cell(0, 2) },
        ])
        .unwrap();
        let sibling = vec![map.cell(0, 2); 5];
        let sib: [&[Cell]; 1] = [&sibling];
        let q = PathQuery { siblings: &sib, ..query(&inst, &[], 4, SuboptFactor::ONE) };
        let p = plan_agent_path(&q).unwrap();
        assert_eq!(p.conflicts, 0);
        assert_eq!(p.cost, 4);
        assert_eq!(p.cells[1], map.cell(1, 0));
    }
}
