//! Runs both planners on the deadlock suite and prints one line per run.
//!
//!     cargo run --release --example deadlock_suite

use dag_ecbs::bench::generate_deadlock_suite;
use dag_ecbs::executor::{run_episode, EpisodeConfig, Solver};
use dag_ecbs::model::AgentGroup;
use dag_ecbs::oracle::{joint_astar, Horizon, OracleLimits};
use dag_ecbs::weight::SuboptFactor;

fn main() {
    println!("{:<12} {:>4} {:>2} {:>2} {:>14} {:>6} {:>5} {:>8} {:>6}", "instance", "alg", "W", "w", "status", "iters", "cost", "entries", "stale");
    for named in generate_deadlock_suite() {
        let inst = &named.instance;
        let everyone = AgentGroup::new(0..inst.num_agents());
        let optimum = joint_astar(inst, &everyone, inst.start_configuration().cells(), Horizon::Full, &OracleLimits::default())
            .map(|o| o.value.to_string())
            .unwrap_or_else(|e| e.to_string());
        println!("{}: joint optimum {optimum}", named.name);
        for solver in [Solver::Dag, Solver::Ecbs] {
            for window in [1, 2] {
                for w in [1, 2] {
                    let cfg = EpisodeConfig::new(solver, window, SuboptFactor::integer(w));
                    let res = run_episode(inst, &cfg);
                    println!(
                        "{:<12} {:>4} {:>2} {:>2} {:>14} {:>6} {:>5} {:>8} {:>6}",
                        named.name,
                        solver.name(),
                        window,
                        w,
                        res.status.name(),
                        res.iterations,
                        res.cost,
                        res.store.len(),
                        res.stale_recurrences
                    );
                }
            }
        }
    }
}
