//! Scene-graph world knowledge, episode generation, a grid-world simulator,
//! baseline agents and metrics for embodied NPC benchmarks.

pub mod agents;
pub mod config;
pub mod dialogue;
pub mod external;
pub mod fixtures;
pub mod geometry;
pub mod metrics;
pub mod scene;
pub mod sim;
pub mod taskgen;
pub mod verify;
pub mod wkm;
pub mod world;
