//! Parses a map, builds one agent's distance field and runs the windowed
//! focal search with and without a blocking constraint.
//!
//!     cargo run --example single_agent

use dag_ecbs::grid::{backward_dijkstra, parse_map, AgentTask};
use dag_ecbs::low_level::{plan_agent_path, AgentConstraint, FocalRule, PathQuery};
use dag_ecbs::model::Instance;
use dag_ecbs::weight::SuboptFactor;

const MAP: &str = "type octile
height 4
width 6
map
......
.@@@@.
......
......
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let map = parse_map(MAP)?;
    let start = map.cell(0, 0);
    let goal = map.cell(2, 5);
    let field = backward_dijkstra(&map, goal);
    println!("distance to goal from (0,0): {:?}", field.get(start));
    for row in 0..map.height() {
        let line: Vec<String> = (0..map.width())
            .map(|col| field.get(map.cell(row, col)).map_or(" @".into(), |d| format!("{d:2}")))
            .collect();
        println!("  {}", line.join(" "));
    }

    let instance = Instance::new(map.clone(), vec![AgentTask { agent_id: 0, start, goal }])?;
    let weight = SuboptFactor::new(3, 2)?;
    let blocked = [AgentConstraint::ForbidVertex { cell: map.cell(0, 2), t: 2 }];
    for (label, constraints) in [("free", &[][..]), ("(0,2) forbidden at t=2", &blocked[..])] {
        let query = PathQuery {
            instance: &instance,
            agent: 0,
            start,
            constraints,
            window: 4,
            weight,
            rule: FocalRule::WeightedHeuristic,
            siblings: &[],
        };
        let path = plan_agent_path(&query).expect("a path within the window exists");
        let coords: Vec<_> = path.cells.iter().map(|&c| map.coords(c)).collect();
        println!("{label}: cost {} lower bound {} path {coords:?}", path.cost, path.lower_bound);
    }
    Ok(())
}
