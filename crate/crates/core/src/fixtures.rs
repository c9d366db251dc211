//! Bundled example scenes, used by tests, benchmarks and the demo service.

use crate::scene::{parse_scene, Scene};

pub const FIVE_OBJECTS: &str = include_str!("../fixtures/five_objects.json");
pub const APPENDIX_COUCH: &str = include_str!("../fixtures/appendix_couch.json");
pub const APARTMENT_A: &str = include_str!("../fixtures/apartment_a.json");
pub const APARTMENT_B: &str = include_str!("../fixtures/apartment_b.json");

/// (scene id, document) for every bundled scene.
pub const ALL: &[(&str, &str)] = &[
    ("five_objects", FIVE_OBJECTS),
    ("appendix_couch", APPENDIX_COUCH),
    ("apartment_a", APARTMENT_A),
    ("apartment_b", APARTMENT_B),
];

/// Parses a bundled scene by id. Panics on unknown ids; bundled documents are
/// known to be valid.
pub fn scene(id: &str) -> Scene {
    let (_, text) = ALL.iter().find(|(k, _)| *k == id).unwrap_or_else(|| panic!("no bundled scene `{id}`"));
    parse_scene(text, id, id).expect("bundled scene parses")
}

/// Scenes large enough for episode generation.
pub fn benchmark_scenes() -> Vec<Scene> {
    vec![scene("apartment_a"), scene("apartment_b")]
}
