pub mod bench;
pub mod dag;
pub mod executor;
pub mod grid;
pub mod group_ecbs;
pub mod low_level;
pub mod model;
pub mod oracle;
pub mod penalty;
pub mod weight;
