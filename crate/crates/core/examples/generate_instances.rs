//! Writes the synthetic 32×32 map (205 obstacles, connected free space) and
//! seeded scenario files next to it.
//!
//!     cargo run --release --example generate_instances -- [out_dir] [scen_count] [agents_per_scen]

use std::fs;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dag_ecbs::bench::{random_tasks, synthetic_random_32};
use dag_ecbs::grid::{backward_dijkstra, write_scenario};

fn main() -> std::io::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data").into()));
    let count: u64 = args.next().map_or(10, |s| s.parse().expect("scenario count"));
    let agents: usize = args.next().map_or(100, |s| s.parse().expect("agents per scenario"));
    fs::create_dir_all(&dir)?;

    let map = synthetic_random_32();
    let name = "random-32-32-20-synthetic.map";
    fs::write(dir.join(name), map.to_map_string())?;
    println!("{} ({} blocked)", dir.join(name).display(), map.blocked_count());

    for k in 1..=count {
        let mut rng = ChaCha8Rng::seed_from_u64(k);
        let tasks = random_tasks(&map, agents, &mut rng).expect("enough free cells");
        let fields: Vec<_> = tasks.iter().map(|t| backward_dijkstra(&map, t.goal)).collect();
        let path = dir.join(format!("random-32-32-20-synthetic-random-{k}.scen"));
        fs::write(&path, write_scenario(&map, name, &tasks, &fields))?;
        println!("{}", path.display());
    }
    Ok(())
}
