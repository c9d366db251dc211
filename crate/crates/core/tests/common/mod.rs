//! Small hand-built scenes shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use serde_json::{json, Map, Value};

use npcbench::config::Config;
use npcbench::geometry::Point2;
use npcbench::scene::{parse_scene, Scene};
use npcbench::sim::Pose;
use npcbench::taskgen::{Episode, Path, Split, Task};
use npcbench::world::World;

pub fn obj(id: &str, room: &str, min: [f64; 3], max: [f64; 3], description: &[&str]) -> Value {
    let category = id.split('/').next().unwrap();
    let center: Vec<f64> = (0..3).map(|k| 0.5 * (min[k] + max[k])).collect();
    json!({
        "instance_id": id,
        "category": category,
        "scope": "",
        "room": room,
        "position": center,
        "min_points": min,
        "max_points": max,
        "description": description,
    })
}

pub fn interactive(mut v: Value) -> Value {
    v["interactive"] = json!(true);
    v
}

/// A scene with one rectangular room spanning `[0, w] x [0, h]`.
pub fn room_scene(id: &str, w: f64, h: f64, objects: Vec<Value>) -> Scene {
    let mut m = Map::new();
    for o in objects {
        m.insert(o["instance_id"].as_str().unwrap().to_string(), o);
    }
    m.insert("scene_id".into(), json!(id));
    m.insert(
        "regions".into(),
        json!([{"region_id": "1", "label": "hall", "polygon": [[0, 0], [w, 0], [w, h], [0, h]]}]),
    );
    parse_scene(&Value::Object(m).to_string(), id, id).unwrap()
}

pub fn world(scene: Scene) -> Arc<World> {
    Arc::new(World::build(scene, &Config::default()).unwrap())
}

/// A 16 m x 3 m corridor with a chair near its far end.
pub fn corridor() -> Scene {
    room_scene(
        "corridor",
        16.0,
        3.0,
        vec![obj("chair/1", "1/hall", [14.0, 1.2, 0.0], [14.5, 1.8, 0.9], &["The object is a blue chair."])],
    )
}

/// An episode whose ground-truth path is the straight segment from the start
/// to `goal`.
pub fn episode(scene_id: &str, task: Task, start: Pose, target: &str, goal: Point2) -> Episode {
    Episode {
        episode_id: format!("{scene_id}-manual"),
        task,
        scene_id: scene_id.into(),
        split: Split::Validation,
        seed: 1,
        start_pose: start,
        target: target.into(),
        instruction: format!("Find the {}.", target.split('/').next().unwrap()),
        gt_path: Path::new(vec![start.position, goal]),
        constraint_trace: vec![],
        instruction_trace: vec![],
        conditions: vec![],
        pattern: None,
    }
}

pub fn p(x: f64, y: f64) -> Point2 {
    Point2::new(x, y)
}
