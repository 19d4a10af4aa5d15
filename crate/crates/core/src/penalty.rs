//! Learned group heuristics.
//!
//! Every group configuration starts at `w·h^BD`. Entries are created only
//! when an update raises a value above that, and are never lowered.
//! Entries are stored under their exact agent set and looked up by any
//! planning group that contains that set.

use std::collections::HashMap;
use std::io::{self, Write};

use crate::grid::Cell;
use crate::model::{step_cost, AgentGroup, Instance};
use crate::weight::{Cost, Scaled, SuboptFactor};

pub type EntryId = usize;

/// A stored heuristic value for one group configuration.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct PenaltyEntry {
    pub id: EntryId,
    pub group: AgentGroup,
    /// Aligned with `group`'s members.
    pub locations: Vec<Cell>,
    /// Full `h(C_Gr)` in scaled units.
    pub h_value: Scaled,
    /// `w·h^BD(locations)` in scaled units.
    pub base: Scaled,
}

impl PenaltyEntry {
    /// `h_p = h_value - w·h^BD`.
    pub fn residual(&self) -> Scaled {
        self.h_value - self.base
    }

    pub fn location_of(&self, agent: usize) -> Option<Cell> {
        self.group.position(agent).map(|i| self.locations[i])
    }
}

#[derive(serde::Serialize)]
struct DumpRecord<'a> {
    agents: &'a [usize],
    locations: &'a [Cell],
    h_num: Scaled,
    h_den: u32,
    residual_num: Scaled,
}

#[derive(Debug, Clone)]
pub struct PenaltyStore {
    weight: SuboptFactor,
    entries: Vec<PenaltyEntry>,
    by_key: HashMap<(AgentGroup, Vec<Cell>), EntryId>,
    by_agent_cell: HashMap<(usize, Cell), Vec<EntryId>>,
    revision: u64,
}

impl PenaltyStore {
    pub fn new(weight: SuboptFactor) -> Self {
        Self { weight, entries: Vec::new(), by_key: HashMap::new(), by_agent_cell: HashMap::new(), revision: 0 }
    }

    pub fn weight(&self) -> SuboptFactor {
        self.weight
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[PenaltyEntry] {
        &self.entries
    }

    pub fn entry(&self, id: EntryId) -> &PenaltyEntry {
        &self.entries[id]
    }

    /// Number of strict increases applied so far.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn lookup(&self, group: &AgentGroup, locations: &[Cell]) -> Option<&PenaltyEntry> {
        self.by_key.get(&(group.clone(), locations.to_vec())).map(|&id| &self.entries[id])
    }

    /// `h(C_Gr)`: the stored value for exactly this group configuration, else
    /// `w·Σ h^BD`.
    pub fn group_heuristic(&self, instance: &Instance, group: &AgentGroup, locations: &[Cell]) -> Scaled {
        debug_assert_eq!(group.len(), locations.len());
        self.lookup(group, locations)
            .map(|e| e.h_value)
            .unwrap_or_else(|| self.weight.weigh(instance.group_h(group, locations)))
    }

    /// Entries stored for `(agent, cell)`.
    pub fn touching(&self, agent: usize, cell: Cell) -> &[EntryId] {
        self.by_agent_cell.get(&(agent, cell)).map_or(&[], Vec::as_slice)
    }

    /// Positive-residual entries whose group is a subset of `group` and whose
    /// locations all equal `terminal` (aligned with `group`), reduced to a
    /// pairwise-disjoint selection: largest residual first, ties broken by
    /// the lexicographically smaller group.
    pub fn matched_penalties(&self, group: &AgentGroup, terminal: &[Cell]) -> Vec<EntryId> {
        self.matched_excluding(group, terminal, &[])
    }

    /// As [`Self::matched_penalties`] but seeded with already `selected`
    /// entries: returned entries are disjoint from them and from each other,
    /// and never include them.
    pub fn matched_excluding(&self, group: &AgentGroup, terminal: &[Cell], selected: &[EntryId]) -> Vec<EntryId> {
        let mut candidates = self.matching_candidates(group, terminal);
        candidates.retain(|id| !selected.contains(id));
        candidates.sort_by(|&a, &b| {
            let (ea, eb) = (&self.entries[a], &self.entries[b]);
            eb.residual().cmp(&ea.residual()).then_with(|| ea.group.cmp(&eb.group))
        });
        let mut taken: Vec<usize> = selected.iter().flat_map(|&id| self.entries[id].group.iter()).collect();
        let mut out = Vec::new();
        for id in candidates {
            let e = &self.entries[id];
            if e.group.iter().all(|a| !taken.contains(&a)) {
                taken.extend(e.group.iter());
                out.push(id);
            }
        }
        out
    }

    /// Every positive-residual subset entry matching `terminal`, unsorted and
    /// possibly overlapping.
    pub fn matching_candidates(&self, group: &AgentGroup, terminal: &[Cell]) -> Vec<EntryId> {
        debug_assert_eq!(group.len(), terminal.len());
        let mut out: Vec<EntryId> = Vec::new();
        for (agent, &cell) in group.iter().zip(terminal) {
            for &id in self.touching(agent, cell) {
                let e = &self.entries[id];
                // Only consider each entry from its first member.
                if e.group.members()[0] != agent || e.residual() <= 0 {
                    continue;
                }
                let matches = e
                    .group
                    .iter()
                    .zip(&e.locations)
                    .all(|(m, loc)| group.position(m).is_some_and(|p| terminal[p] == *loc));
                if matches {
                    out.push(id);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Raises `h(group @ locations)` to `value` if that is a strict increase.
    /// Returns whether anything changed.
    pub fn raise(&mut self, instance: &Instance, group: &AgentGroup, locations: &[Cell], value: Scaled) -> bool {
        let key = (group.clone(), locations.to_vec());
        if let Some(&id) = self.by_key.get(&key) {
            let e = &mut self.entries[id];
            if value > e.h_value {
                e.h_value = value;
                self.revision += 1;
                return true;
            }
            return false;
        }
        let base = self.weight.weigh(instance.group_h(group, locations));
        if value <= base {
            return false;
        }
        let id = self.entries.len();
        for (agent, &cell) in group.iter().zip(locations) {
            self.by_agent_cell.entry((agent, cell)).or_default().push(id);
        }
        self.entries.push(PenaltyEntry { id, group: group.clone(), locations: locations.to_vec(), h_value: value, base });
        self.by_key.insert(key, id);
        self.revision += 1;
        true
    }

    /// `h(C^0) <- max(h(C^0), c(C^0, C^W) + h(C^W))`.
    ///
    /// `path_cost` is the plain cost already scaled (`q·c`), `h_terminal` the
    /// group heuristic at `C^W` including the penalties the solution incurred.
    /// Returns the update value `U`.
    pub fn apply_terminal_update(
        &mut self,
        instance: &Instance,
        group: &AgentGroup,
        start: &[Cell],
        path_cost: Scaled,
        h_terminal: Scaled,
    ) -> Scaled {
        let update = path_cost + h_terminal;
        self.raise(instance, group, start, update);
        update
    }

    /// For `t = 1..W-1`: `h(C^t) <- max(h(C^t), U - w·c(C^0, C^t))`.
    ///
    /// `path[t]` holds the group's locations at `t` for `t = 0..=W`.
    pub fn apply_intermediate_updates(
        &mut self,
        instance: &Instance,
        group: &AgentGroup,
        path: &[Vec<Cell>],
        update_value: Scaled,
    ) {
        let w = path.len().saturating_sub(1);
        let mut cost: Cost = 0;
        for t in 1..w {
            cost += group
                .iter()
                .enumerate()
                .map(|(k, a)| step_cost(instance.tasks()[a].goal, path[t - 1][k], path[t][k]))
                .sum::<Cost>();
            let value = update_value - self.weight.weigh(cost);
            self.raise(instance, group, &path[t], value);
        }
    }

    /// One JSON object per entry, in creation order.
    pub fn dump_jsonl(&self, mut out: impl Write) -> io::Result<()> {
        for e in &self.entries {
            let rec = DumpRecord {
                agents: e.group.members(),
                locations: &e.locations,
                h_num: e.h_value,
                h_den: self.weight.denominator(),
                residual_num: e.residual(),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{AgentTask, GridMap};

    fn open_instance(n: usize) -> Instance {
        let map = GridMap::open(6, 1);
        let tasks = (0..n).map(|i| AgentTask { agent_id: i, start: Cell(i as u32), goal: Cell(i as u32) }).collect();
        Instance::new(map, tasks).unwrap()
    }

    #[test]
    fn default_is_weighted_distance() {
        let map = GridMap::open(4, 1);
        let inst = Instance::new(map, vec![AgentTask { agent_id: 0, start: Cell(3), goal: Cell(0) }]).unwrap();
        let store = PenaltyStore::new(SuboptFactor::integer(2));
        let g = AgentGroup::singleton(0);
        assert_eq!(store.group_heuristic(&inst, &g, &[Cell(3)]), 6);
        assert_eq!(store.group_heuristic(&inst, &g, &[Cell(0)]), 0);
    }

    #[test]
    fn lookup_after_raise() {
        let map = GridMap::open(4, 1);
        let inst = Instance::new(map, vec![AgentTask { agent_id: 0, start: Cell(3), goal: Cell(0) }]).unwrap();
        let mut store = PenaltyStore::new(SuboptFactor::integer(2));
        let g = AgentGroup::singleton(0);
        assert!(store.raise(&inst, &g, &[Cell(3)], 7));
        assert_eq!(store.group_heuristic(&inst, &g, &[Cell(3)]), 7);
        assert!(!store.raise(&inst, &g, &[Cell(3)], 6));
        assert_eq!(store.group_heuristic(&inst, &g, &[Cell(3)]), 7);
        assert_eq!(store.revision(), 1);
    }

    #[test]
    fn terminal_update_examples() {
        // Agent 0 at distance 5 from its goal, w = 1.
        let map = GridMap::open(8, 1);
        let inst = Instance::new(map, vec![AgentTask { agent_id: 0, start: Cell(5), goal: Cell(0) }]).unwrap();
        let g = AgentGroup::singleton(0);
        let mut store = PenaltyStore::new(SuboptFactor::ONE);
        let u = store.apply_terminal_update(&inst, &g, &[Cell(5)], 1, 3);
        assert_eq!(u, 4);
        assert_eq!(store.group_heuristic(&inst, &g, &[Cell(5)]), 5);
        assert!(store.is_empty());

        // h(C0) = 4 = h^BD, c = 1, h(CW) = 4 -> 5 with residual 1.
        let u = store.apply_terminal_update(&inst, &g, &[Cell(4)], 1, 4);
        assert_eq!(u, 5);
        let e = store.lookup(&g, &[Cell(4)]).unwrap();
        assert_eq!((e.h_value, e.residual()), (5, 1));
    }

    #[test]
    fn intermediate_updates() {
        let map = GridMap::open(8, 1);
        let inst = Instance::new(map, vec![AgentTask { agent_id: 0, start: Cell(6), goal: Cell(0) }]).unwrap();
        let g = AgentGroup::singleton(0);
        let mut store = PenaltyStore::new(SuboptFactor::ONE);

        store.apply_intermediate_updates(&inst, &g, &[vec![Cell(6)], vec![Cell(6)]], 100);
        assert!(store.is_empty(), "W = 1 has no intermediate configurations");

        // Path 6 -> 5 -> 4 with U = 6: floor at t = 1 is 5, at h^BD(5) = 5 no raise.
        store.apply_intermediate_updates(&inst, &g, &[vec![Cell(6)], vec![Cell(5)], vec![Cell(4)]], 6);
        assert!(store.is_empty());
        // Waiting 6 -> 6 -> 5 with U = 8: floor at t = 1 is 7 > 6.
        store.apply_intermediate_updates(&inst, &g, &[vec![Cell(6)], vec![Cell(6)], vec![Cell(5)]], 8);
        assert_eq!(store.group_heuristic(&inst, &g, &[Cell(6)]), 7);
    }

    #[test]
    fn subset_matching() {
        let inst = open_instance(3);
        let mut store = PenaltyStore::new(SuboptFactor::ONE);
        let g12 = AgentGroup::new([1, 2]);
        store.raise(&inst, &g12, &[Cell(4), Cell(5)], 9);
        let g123 = AgentGroup::new([0, 1, 2]);
        assert_eq!(store.matched_penalties(&g123, &[Cell(0), Cell(4), Cell(5)]), vec![0]);
        assert!(store.matched_penalties(&g123, &[Cell(0), Cell(4), Cell(3)]).is_empty());
        // Not a subset of the planning group.
        assert!(store.matched_penalties(&AgentGroup::new([1]), &[Cell(4)]).is_empty());
    }

    #[test]
    fn overlap_keeps_larger_residual() {
        let inst = open_instance(4);
        let mut store = PenaltyStore::new(SuboptFactor::ONE);
        let terminal = [Cell(0), Cell(1), Cell(2), Cell(3)];
        // {1,2} at (1,2): h^BD = 0, residual 2; {2,3} at (2,3): residual 5.
        store.raise(&inst, &AgentGroup::new([1, 2]), &[Cell(1), Cell(2)], 2);
        store.raise(&inst, &AgentGroup::new([2, 3]), &[Cell(2), Cell(3)], 5);
        let all = AgentGroup::new([0, 1, 2, 3]);
        assert_eq!(store.matched_penalties(&all, &terminal), vec![1]);

        // Equal residuals: lexicographically smaller group wins.
        let mut store = PenaltyStore::new(SuboptFactor::ONE);
        store.raise(&inst, &AgentGroup::new([2, 3]), &[Cell(2), Cell(3)], 4);
        store.raise(&inst, &AgentGroup::new([1, 2]), &[Cell(1), Cell(2)], 4);
        let got = store.matched_penalties(&all, &terminal);
        assert_eq!(got.len(), 1);
        assert_eq!(store.entry(got[0]).group, AgentGroup::new([1, 2]));

        // Disjoint matches are all kept.
        store.raise(&inst, &AgentGroup::new([0]), &[Cell(0)], 1);
        assert_eq!(store.matched_penalties(&all, &terminal).len(), 2);
    }

    #[test]
    fn dump_is_jsonl() {
        let inst = open_instance(2);
        let mut store = PenaltyStore::new(SuboptFactor::new(3, 2).unwrap());
        store.raise(&inst, &AgentGroup::new([0, 1]), &[Cell(0), Cell(1)], 5);
        let mut buf = Vec::new();
        store.dump_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "{\"agents\":[0,1],\"locations\":[0,1],\"h_num\":5,\"h_den\":2,\"residual_num\":5}\n");
    }
}
