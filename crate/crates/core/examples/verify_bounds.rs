//! Checks planner output against brute-force oracles on small random
//! instances: every group's objective against the windowed optimum, and
//! every learned value against the true joint distance.
//!
//!     cargo run --release --example verify_bounds

use std::collections::HashMap;

use dag_ecbs::bench::{random_grid, random_tasks};
use dag_ecbs::executor::{run_episode_observed, EpisodeConfig, PlanContext, Solver};
use dag_ecbs::model::Instance;
use dag_ecbs::oracle::{check_global_vs_group_gap, verify_group_w_bound, verify_penalty_admissibility_cached, windowed_optimum, OracleLimits};
use dag_ecbs::weight::SuboptFactor;
use rand::rngs::StdRng;
use rand::SeedableRng;

fn main() {
    let gap = check_global_vs_group_gap([10, 40], [30, 45], SuboptFactor::integer(2));
    println!("costs 30+45 against optima 10+40 at w=2: global {} group {:?}", gap.global_pass, gap.group_pass);

    let limits = OracleLimits::default();
    let mut rng = StdRng::seed_from_u64(7);
    let (mut checked, mut failed, mut entries, mut violations) = (0, 0, 0, 0);
    for _ in 0..20 {
        let map = random_grid(6, 6, 8, &mut rng).expect("room for obstacles");
        let tasks = random_tasks(&map, 3, &mut rng).expect("enough free cells");
        let instance = Instance::new(map, tasks).expect("valid tasks");
        let cfg = EpisodeConfig::new(Solver::Dag, 2, SuboptFactor::new(3, 2).unwrap()).with_iteration_cap(200);
        let mut check = |ctx: &PlanContext<'_>| {
            for sol in &ctx.result.groups {
                let start = ctx.config.project(&sol.group);
                let opt = windowed_optimum(&instance, &sol.group, &start, ctx.window, ctx.weight, Some(ctx.store), &limits).expect("small group");
                checked += 1;
                failed += usize::from(!verify_group_w_bound(sol, &opt).pass);
            }
        };
        let res = run_episode_observed(&instance, &cfg, &mut check);
        let report = verify_penalty_admissibility_cached(&res.store, &instance, &limits, &mut HashMap::new()).expect("small groups");
        entries += report.checked;
        violations += report.violations.len();
    }
    println!("group bounds: {checked} checked, {failed} failed");
    println!("learned values: {entries} checked, {violations} above w times the true distance");
}
