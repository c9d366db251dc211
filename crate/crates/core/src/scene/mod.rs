//! Annotated scenes: object records, BEV regions and the derived scene graph.

mod attributes;
mod io;
mod relations;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geometry::{point_in_polygon, polygon_is_simple, Aabb, Point2};

pub use attributes::{extract_attributes, tokenize, AttributeSet, DEFAULT_COLORS, DEFAULT_SHAPES};
pub use io::{load_scene, parse_scene, save_scene, scene_to_string};
pub use relations::{classify_pair, derive_relations, RelationConfig};

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("{path}: format error at line {line}, column {column}: {msg}")]
    Syntax { path: String, line: usize, column: usize, msg: String },
    #[error("{path}: format error in `{field}`: {msg}")]
    Field { path: String, field: String, msg: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Closed relation vocabulary of the scene graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Near,
    On,
    In,
    Above,
    Below,
    Under,
    OutOf,
}

impl Relation {
    pub const ALL: [Relation; 7] = [
        Relation::Near,
        Relation::On,
        Relation::In,
        Relation::Above,
        Relation::Below,
        Relation::Under,
        Relation::OutOf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Near => "near",
            Relation::On => "on",
            Relation::In => "in",
            Relation::Above => "above",
            Relation::Below => "below",
            Relation::Under => "under",
            Relation::OutOf => "out_of",
        }
    }

    /// Reading used in rendered text ("out of" rather than "out_of").
    pub fn phrase(self) -> &'static str {
        match self {
            Relation::OutOf => "out of",
            r => r.as_str(),
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Relation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Relation::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("relation `{s}` is outside the relation vocabulary"))
    }
}

/// One annotated object record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub instance_id: String,
    pub category: String,
    #[serde(default)]
    pub scope: String,
    pub room: String,
    pub position: [f64; 3],
    pub min_points: [f64; 3],
    pub max_points: [f64; 3],
    #[serde(default)]
    pub description: Vec<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub interactive: bool,
    /// Annotated neighbours: instance_id -> (relation, distance).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub nearby_objects: BTreeMap<String, (Relation, f64)>,
    /// Unknown fields, kept for round-tripping.
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl ObjectInstance {
    pub fn aabb(&self) -> Aabb {
        Aabb::new(self.min_points, self.max_points)
    }

    pub fn position2(&self) -> Point2 {
        Point2::new(self.position[0], self.position[1])
    }

    /// Text after the first `/` of the room string ("1/living room" -> "living room").
    pub fn room_name(&self) -> &str {
        room_label(&self.room)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let id = &self.instance_id;
        let prefix = id.split('/').next().unwrap_or_default();
        if !id.contains('/') || prefix != self.category {
            return Err(SceneError::Validation(format!(
                "instance_id `{id}` must be prefixed by its category `{}`",
                self.category
            )));
        }
        for axis in 0..3 {
            if !(self.min_points[axis] <= self.max_points[axis]) {
                return Err(SceneError::Validation(format!(
                    "`{id}`: min_points > max_points on axis {}",
                    ["x", "y", "z"][axis]
                )));
            }
        }
        let tol = 1e-6;
        for axis in 0..3 {
            let p = self.position[axis];
            if !(p >= self.min_points[axis] - tol && p <= self.max_points[axis] + tol) {
                return Err(SceneError::Validation(format!(
                    "`{id}`: position lies outside its bounding box on axis {}",
                    ["x", "y", "z"][axis]
                )));
            }
        }
        for (other, (_, d)) in &self.nearby_objects {
            if !d.is_finite() || *d < 0.0 {
                return Err(SceneError::Validation(format!(
                    "`{id}`: nearby_objects distance to `{other}` must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }
}

pub fn room_label(room: &str) -> &str {
    room.split_once('/').map(|(_, name)| name).unwrap_or(room)
}

/// Category of an instance id ("chair/1" -> "chair").
pub fn category_of(instance_id: &str) -> &str {
    instance_id.split('/').next().unwrap_or(instance_id)
}

/// A BEV room polygon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub region_id: String,
    pub label: String,
    pub polygon: Vec<[f64; 2]>,
}

impl Region {
    pub fn points(&self) -> Vec<Point2> {
        self.polygon.iter().map(|p| Point2::new(p[0], p[1])).collect()
    }

    /// The "index/name" room string objects in this region carry.
    pub fn room_string(&self) -> String {
        format!("{}/{}", self.region_id, self.label)
    }

    pub fn contains(&self, p: Point2) -> bool {
        point_in_polygon(p, &self.points())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub scene_id: String,
    pub objects: BTreeMap<String, ObjectInstance>,
    pub regions: Vec<Region>,
}

impl Scene {
    pub fn object(&self, id: &str) -> Option<&ObjectInstance> {
        self.objects.get(id)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        for (key, obj) in &self.objects {
            if key != &obj.instance_id {
                return Err(SceneError::Validation(format!(
                    "record key `{key}` differs from its instance_id `{}`",
                    obj.instance_id
                )));
            }
            obj.validate()?;
            for other in obj.nearby_objects.keys() {
                if !self.objects.contains_key(other) {
                    return Err(SceneError::Validation(format!(
                        "`{key}`: nearby object `{other}` is not in the scene"
                    )));
                }
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for r in &self.regions {
            if !seen.insert(r.region_id.as_str()) {
                return Err(SceneError::Validation(format!("duplicate region_id `{}`", r.region_id)));
            }
            if r.polygon.len() < 3 || !polygon_is_simple(&r.points()) {
                return Err(SceneError::Validation(format!(
                    "region `{}` polygon must be simple with >= 3 vertices",
                    r.region_id
                )));
            }
        }
        Ok(())
    }

    /// Objects of one category, sorted by id.
    pub fn ids_of_category(&self, category: &str) -> Vec<String> {
        self.objects
            .values()
            .filter(|o| o.category == category)
            .map(|o| o.instance_id.clone())
            .collect()
    }

    /// Region containing `p`. Boundary points and overlaps resolve to the
    /// first-declared region.
    pub fn assign_room(&self, p: Point2) -> Option<&Region> {
        let hits: Vec<&Region> = self.regions.iter().filter(|r| r.contains(p)).collect();
        let first = *hits.first()?;
        if hits.len() > 1 && !hits.iter().all(|r| on_polygon_edge(p, &r.points())) {
            tracing::warn!(
                point = ?p,
                first = %first.region_id,
                other = %hits[1].region_id,
                "overlapping regions contain point; first-declared wins"
            );
        }
        Some(first)
    }
}

fn on_polygon_edge(p: Point2, poly: &[Point2]) -> bool {
    (0..poly.len()).any(|i| {
        crate::geometry::point_segment_distance(p, poly[i], poly[(i + 1) % poly.len()]) <= 1e-12
    })
}

/// One directed relation; reads "source relation target".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationEdge {
    pub source: String,
    pub target: String,
    pub relation: Relation,
    pub distance: f64,
}

/// Relational snapshot of a scene at one simulation step.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraph {
    pub scene_id: String,
    pub nodes: BTreeMap<String, ObjectInstance>,
    pub adjacency: BTreeMap<String, Vec<RelationEdge>>,
    pub step_stamp: u64,
}

impl SceneGraph {
    pub fn node(&self, id: &str) -> Option<&ObjectInstance> {
        self.nodes.get(id)
    }

    pub fn edges(&self, id: &str) -> &[RelationEdge] {
        self.adjacency.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn category(&self, id: &str) -> Option<&str> {
        self.nodes.get(id).map(|o| o.category.as_str())
    }

    /// Edges of `id` as (relation, neighbour category) pairs.
    pub fn relation_categories<'a>(&'a self, id: &str) -> impl Iterator<Item = (Relation, &'a str)> + 'a {
        self.edges(id)
            .iter()
            .map(move |e| (e.relation, self.category(&e.target).unwrap_or(category_of(&e.target))))
    }

    pub fn has_edge(&self, source: &str, relation: Relation, target: &str) -> bool {
        self.edges(source).iter().any(|e| e.relation == relation && e.target == target)
    }

    /// Checks the graph invariants: endpoints exist, no duplicate (target, relation).
    pub fn check_invariants(&self) -> Result<(), String> {
        for (src, edges) in &self.adjacency {
            if !self.nodes.contains_key(src) {
                return Err(format!("adjacency source `{src}` missing from nodes"));
            }
            let mut seen = std::collections::BTreeSet::new();
            for e in edges {
                if &e.source != src || !self.nodes.contains_key(&e.target) {
                    return Err(format!("dangling edge {} -> {}", e.source, e.target));
                }
                if !e.distance.is_finite() || e.distance < 0.0 {
                    return Err(format!("edge {} -> {} has invalid distance", e.source, e.target));
                }
                if !seen.insert((e.target.as_str(), e.relation)) {
                    return Err(format!("duplicate edge {} -{}-> {}", e.source, e.relation, e.target));
                }
            }
        }
        Ok(())
    }
}
