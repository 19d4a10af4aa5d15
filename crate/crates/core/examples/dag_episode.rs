//! Walks a three-agent rotation through a T-junction one planning call at a
//! time, printing the groups, the executed move and what the penalty store
//! learned.
//!
//!     cargo run --release --example dag_episode

use dag_ecbs::bench::t_junction_rotation;
use dag_ecbs::executor::{run_episode_observed, EpisodeConfig, PlanContext, Solver};
use dag_ecbs::weight::SuboptFactor;

fn main() {
    let instance = t_junction_rotation();
    let cfg = EpisodeConfig::new(Solver::Dag, 2, SuboptFactor::integer(2));
    let map = instance.map();
    let mut show = |ctx: &PlanContext<'_>| {
        let groups: Vec<String> = ctx.result.groups.iter().map(|g| format!("{}:{}", g.group, g.objective)).collect();
        let at: Vec<_> = ctx.config.cells().iter().map(|&c| map.coords(c)).collect();
        println!("{:>3} at {at:?} groups [{}] store {}", ctx.iteration, groups.join(" "), ctx.store.len());
    };
    let res = run_episode_observed(&instance, &cfg, &mut show);
    println!("{} after {} iterations, sum of cost {}, {} merges", res.status.name(), res.iterations, res.cost, res.merges);
    for e in res.store.entries() {
        let locs: Vec<_> = e.locations.iter().map(|&c| map.coords(c)).collect();
        println!("  learned h={} for {} at {locs:?}", e.h_value, e.group);
    }
}
