//! Solves one two-agent group in a corridor under the group rule (learned
//! penalties, weighted low level) and the standard rule, and prints the
//! certificate each search returns.
//!
//!     cargo run --example group_search

use dag_ecbs::bench::corridor_swap;
use dag_ecbs::group_ecbs::{solve_group, CtOptions};
use dag_ecbs::model::AgentGroup;
use dag_ecbs::penalty::PenaltyStore;
use dag_ecbs::weight::SuboptFactor;

fn main() {
    let instance = corridor_swap(5);
    let group = AgentGroup::new([0, 1]);
    let start = instance.start_configuration();
    let weight = SuboptFactor::integer(2);
    let store = PenaltyStore::new(weight);
    let map = instance.map();

    for (label, opts) in [("group", CtOptions::group(3, weight)), ("standard", CtOptions::standard(3, weight))] {
        let sol = solve_group(&instance, &group, &start, Some(&store), &opts).expect("solvable");
        println!("{label} rule: objective {} (lower bound {}), cost {}, terminal h {}, {} CT nodes expanded", sol.objective, sol.lower_bound, sol.cost, sol.terminal_h, sol.expanded);
        for (agent, path) in group.iter().zip(&sol.paths) {
            let coords: Vec<_> = path.iter().map(|&c| map.coords(c)).collect();
            println!("  agent {agent}: {coords:?}");
        }
    }
}
