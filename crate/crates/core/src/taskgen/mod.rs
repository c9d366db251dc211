//! Episode generation: occupancy maps, collision-free ground-truth paths,
//! unique and coarse instructions, and pick-and-place conditions.

mod conditions;
mod episode;
mod instruct;
mod occupancy;
mod paths;

pub use conditions::{canonical_placement, feasible_patterns, sample_conditions, Pattern, PlaceRelation, PlacementCondition};
pub use episode::{
    generate_episode, generate_episodes, read_episodes, split_for, write_episodes, Episode, EpisodeGenerator,
    GenerationConfig, Split, Task,
};
pub use instruct::{
    compose_locomanip, gen_instruction_objnav, gen_instruction_socialnav, perturb_utterance, receptacle_infos,
    relation_clause, speak, voiced, LlmSpeaker, NavInstruction, PerturbConfig, SocialInstruction, Speaker,
    TemplateSpeaker,
};
pub use occupancy::{
    build_occupancy, squared_edt, supercover, Cell, Clearance, OccupancyConfig, OccupancyMap, OccupancySummary,
    Traversability,
};
pub use paths::{approach_cell, polyline_length, smooth, DistanceField, GoalPaths, Path, PathConfig};

use crate::wkm::WkmError;

#[derive(Debug, thiserror::Error)]
pub enum TaskGenError {
    #[error("scene has no floor polygon")]
    NoFloor,
    #[error("occupancy grid sizing: {0}")]
    Sizing(String),
    #[error("target excluded: {0}")]
    TargetExcluded(String),
    #[error("generation failed: {0}")]
    Generation(String),
    #[error(transparent)]
    Wkm(#[from] WkmError),
    #[error("episode file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("episode file {path} line {line}: {msg}")]
    Format { path: String, line: usize, msg: String },
}
