use std::collections::{HashMap, VecDeque};

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

use dag_ecbs::bench::{random_grid, random_tasks};
use dag_ecbs::dag::plan_step;
use dag_ecbs::executor::{apply_group_updates, run_episode, EpisodeConfig, Solver};
use dag_ecbs::grid::{backward_dijkstra, Cell, GridMap};
use dag_ecbs::group_ecbs::CtOptions;
use dag_ecbs::model::{count_collisions, validate_sequence, AgentGroup, Instance};
use dag_ecbs::oracle::{joint_astar, Horizon, OracleLimits};
use dag_ecbs::penalty::PenaltyStore;
use dag_ecbs::weight::{Scaled, SuboptFactor};

fn small_instance(seed: u64, side: usize, agents: usize) -> Instance {
    let mut rng = StdRng::seed_from_u64(seed);
    let blocked = side * side / 5;
    let map = random_grid(side, side, blocked, &mut rng).expect("obstacles fit");
    let tasks = random_tasks(&map, agents, &mut rng).expect("free cells");
    Instance::new(map, tasks).expect("valid")
}

fn weights() -> impl Strategy<Value = SuboptFactor> {
    prop_oneof![Just(SuboptFactor::ONE), Just(SuboptFactor::new(3, 2).unwrap()), Just(SuboptFactor::integer(2))]
}

/// Plain BFS over passable cells, including the wait-free unit edges.
fn bfs(map: &GridMap, goal: Cell) -> Vec<Option<u32>> {
    let mut dist = vec![None; map.num_cells()];
    dist[goal.index()] = Some(0);
    let mut queue = VecDeque::from([goal]);
    while let Some(c) = queue.pop_front() {
        let (r, col) = map.coords(c);
        let d = dist[c.index()].unwrap();
        let around = [(r.wrapping_sub(1), col), (r + 1, col), (r, col.wrapping_sub(1)), (r, col + 1)];
        for (nr, nc) in around {
            if let Some(n) = map.try_cell(nr, nc) {
                if map.is_passable(n) && dist[n.index()].is_none() {
                    dist[n.index()] = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
    }
    dist
}

/// Pairwise recount of vertex and swap collisions, straight from the
/// definitions.
fn naive_collisions(paths: &[Vec<Cell>]) -> usize {
    let mut n = 0;
    for i in 0..paths.len() {
        for j in i + 1..paths.len() {
            let (a, b) = (&paths[i], &paths[j]);
            for t in 0..a.len() {
                n += usize::from(a[t] == b[t]);
                if t + 1 < a.len() {
                    n += usize::from(a[t] != a[t + 1] && a[t] == b[t + 1] && a[t + 1] == b[t]);
                }
            }
        }
    }
    n
}

fn random_walk(map: &GridMap, start: Cell, len: usize, choices: &[usize]) -> Vec<Cell> {
    let mut path = vec![start];
    for k in 0..len {
        let here = *path.last().unwrap();
        let moves: Vec<Cell> = map.moves(here).collect();
        path.push(moves[choices[k] % moves.len()]);
    }
    path
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn distance_field_matches_bfs(seed in any::<u64>(), side in 3usize..9) {
        let inst = small_instance(seed, side, 1);
        let map = inst.map();
        for goal in map.passable_cells().take(6) {
            let field = backward_dijkstra(map, goal);
            let expected = bfs(map, goal);
            for (c, want) in expected.iter().enumerate() {
                prop_assert_eq!(field.get(Cell(c as u32)), *want);
            }
        }
    }

    #[test]
    fn collision_count_is_symmetric_and_matches_recount(
        seed in any::<u64>(),
        window in 1usize..6,
        choices in prop::collection::vec(0usize..5, 20),
    ) {
        let inst = small_instance(seed, 4, 4);
        let map = inst.map();
        let paths: Vec<Vec<Cell>> = inst
            .tasks()
            .iter()
            .enumerate()
            .map(|(k, t)| random_walk(map, t.start, window, &choices[k * 5..]))
            .collect();
        let forward: Vec<(usize, &[Cell])> = paths.iter().enumerate().map(|(i, p)| (i, p.as_slice())).collect();
        let mut backward = forward.clone();
        backward.reverse();
        let counted = count_collisions(&forward);
        prop_assert_eq!(counted, count_collisions(&backward));
        prop_assert_eq!(counted, naive_collisions(&paths));
    }

    #[test]
    fn store_values_never_decrease(
        seed in any::<u64>(),
        weight in weights(),
        raises in prop::collection::vec((0usize..3, 0usize..6, 0i64..60), 1..40),
    ) {
        let inst = small_instance(seed, 4, 3);
        let cells: Vec<Cell> = inst.map().passable_cells().collect();
        let groups = [AgentGroup::new([0, 1]), AgentGroup::new([1, 2]), AgentGroup::new([0, 1, 2])];
        let mut store = PenaltyStore::new(weight);
        let mut seen: HashMap<(AgentGroup, Vec<Cell>), Scaled> = HashMap::new();
        for (g, offset, value) in raises {
            let group = &groups[g];
            let locs: Vec<Cell> = (0..group.len()).map(|k| cells[(offset + 3 * k) % cells.len()]).collect();
            let before_rev = store.revision();
            let before = store.group_heuristic(&inst, group, &locs);
            let changed = store.raise(&inst, group, &locs, value);
            let after = store.group_heuristic(&inst, group, &locs);
            prop_assert_eq!(changed, value > before);
            prop_assert_eq!(after, before.max(value));
            prop_assert_eq!(store.revision(), before_rev + u64::from(changed));
            if changed {
                seen.insert((group.clone(), locs), after);
            }
            for e in store.entries() {
                let recorded = seen[&(e.group.clone(), e.locations.clone())];
                prop_assert!(e.h_value >= recorded);
            }
        }
    }

    #[test]
    fn joint_optimum_ignores_member_order(seed in any::<u64>()) {
        let inst = small_instance(seed, 5, 3);
        let limits = OracleLimits::default();
        let forward = AgentGroup::new([0, 1, 2]);
        let start = inst.start_configuration();
        let base = joint_astar(&inst, &forward, start.cells(), Horizon::Full, &limits);
        // Relabel the agents in reverse and solve the mirrored instance.
        let mut tasks = inst.tasks().to_vec();
        tasks.reverse();
        for (i, t) in tasks.iter_mut().enumerate() {
            t.agent_id = i;
        }
        let mirrored = Instance::new(inst.shared_map(), tasks).unwrap();
        let other = joint_astar(&mirrored, &forward, mirrored.start_configuration().cells(), Horizon::Full, &limits);
        prop_assert_eq!(base.map(|o| o.value).ok(), other.map(|o| o.value).ok());
    }

    #[test]
    fn episodes_are_deterministic(seed in any::<u64>(), window in 1usize..4, weight in weights()) {
        let inst = small_instance(seed, 6, 3);
        let cfg = EpisodeConfig::new(Solver::Dag, window, weight).with_iteration_cap(150);
        let a = run_episode(&inst, &cfg);
        let b = run_episode(&inst, &cfg);
        prop_assert_eq!(a.status, b.status);
        prop_assert_eq!(&a.executed, &b.executed);
        let (mut da, mut db) = (Vec::new(), Vec::new());
        a.store.dump_jsonl(&mut da).unwrap();
        b.store.dump_jsonl(&mut db).unwrap();
        prop_assert_eq!(da, db);
        prop_assert!(validate_sequence(&inst, &a.executed).is_ok());
    }

    #[test]
    fn planning_call_is_collision_free_and_updates_only_its_groups(
        seed in any::<u64>(),
        window in 1usize..4,
        weight in weights(),
    ) {
        let inst = small_instance(seed, 6, 4);
        let mut store = PenaltyStore::new(weight);
        let mut config = inst.start_configuration();
        let opts = CtOptions::group(window, weight);
        for _ in 0..6 {
            let result = plan_step(&inst, &config, &store, &opts).unwrap();
            prop_assert!(result.plan.validate(&inst).is_ok());
            for g in &result.groups {
                prop_assert!(g.objective <= g.lower_bound);
                prop_assert_eq!(g.paths.len(), g.group.len());
            }
            let before: Vec<Scaled> = store.entries().iter().map(|e| e.h_value).collect();
            apply_group_updates(&inst, &mut store, &config, &result);
            for e in store.entries() {
                let grew = before.get(e.id).is_none_or(|&h| e.h_value > h);
                if grew {
                    prop_assert!(result.groups.iter().any(|g| g.group == e.group));
                }
            }
            config = result.plan.steps[1].clone();
        }
    }
}
