use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Relation, RelationEdge, Scene, SceneGraph};
use crate::geometry::Aabb;

/// Thresholds of the AABB relation rules, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelationConfig {
    /// Pairs whose minimum AABB gap reaches this value get no edge.
    pub near_threshold: f64,
    /// Vertical contact band for on/under.
    pub contact_tolerance: f64,
    /// Slack allowed on each face for containment.
    pub in_tolerance: f64,
}

impl Default for RelationConfig {
    fn default() -> Self {
        Self { near_threshold: 2.5, contact_tolerance: 0.02, in_tolerance: 0.01 }
    }
}

fn volume(b: &Aabb) -> f64 {
    (0..3).map(|i| b.extent(i)).product()
}

/// Relation of `a` to `b` and of `b` to `a`, or `None` when too far apart.
///
/// Rules: degenerate boxes only ever relate by `near`; containment beats
/// vertical stacking; stacking requires positive horizontal overlap, with
/// contact (|gap| < tolerance) giving on/under and a clear gap giving
/// above/below; anything else within range is `near`.
pub fn classify_pair(a: &Aabb, b: &Aabb, cfg: &RelationConfig) -> Option<(Relation, Relation, f64)> {
    let gap = a.gap(b);
    if !(gap < cfg.near_threshold) {
        return None;
    }
    if a.is_degenerate() || b.is_degenerate() {
        return Some((Relation::Near, Relation::Near, gap));
    }
    let a_in_b = a.inside(b, cfg.in_tolerance);
    let b_in_a = b.inside(a, cfg.in_tolerance);
    if a_in_b && (!b_in_a || volume(a) <= volume(b)) {
        return Some((Relation::In, Relation::OutOf, gap));
    }
    if b_in_a {
        return Some((Relation::OutOf, Relation::In, gap));
    }
    if a.axis_overlap(b, 0) > 0.0 && a.axis_overlap(b, 1) > 0.0 {
        let tol = cfg.contact_tolerance;
        let a_over = a.min[2] - b.max[2];
        let b_over = b.min[2] - a.max[2];
        if a_over.abs() < tol {
            return Some((Relation::On, Relation::Under, gap));
        }
        if b_over.abs() < tol {
            return Some((Relation::Under, Relation::On, gap));
        }
        if a_over >= tol {
            return Some((Relation::Above, Relation::Below, gap));
        }
        if b_over >= tol {
            return Some((Relation::Below, Relation::Above, gap));
        }
    }
    Some((Relation::Near, Relation::Near, gap))
}

/// Builds the scene graph. Annotated `nearby_objects` entries replace the
/// derived edge of the same ordered pair.
pub fn derive_relations(scene: &Scene, cfg: &RelationConfig) -> SceneGraph {
    let ids: Vec<&String> = scene.objects.keys().collect();
    let mut adjacency: BTreeMap<String, BTreeMap<String, (Relation, f64)>> =
        ids.iter().map(|id| ((*id).clone(), BTreeMap::new())).collect();

    for (i, a_id) in ids.iter().enumerate() {
        let a = scene.objects[*a_id].aabb();
        for b_id in &ids[i + 1..] {
            let b = scene.objects[*b_id].aabb();
            if let Some((ab, ba, d)) = classify_pair(&a, &b, cfg) {
                adjacency.get_mut(*a_id).unwrap().insert((*b_id).clone(), (ab, d));
                adjacency.get_mut(*b_id).unwrap().insert((*a_id).clone(), (ba, d));
            }
        }
    }
    for (id, obj) in &scene.objects {
        let row = adjacency.get_mut(id).unwrap();
        for (other, rel) in &obj.nearby_objects {
            row.insert(other.clone(), *rel);
        }
    }

    let adjacency = adjacency
        .into_iter()
        .map(|(src, row)| {
            let edges = row
                .into_iter()
                .map(|(target, (relation, distance))| RelationEdge {
                    source: src.clone(),
                    target,
                    relation,
                    distance,
                })
                .collect();
            (src, edges)
        })
        .collect();

    SceneGraph {
        scene_id: scene.scene_id.clone(),
        nodes: scene.objects.clone(),
        adjacency,
        step_stamp: 0,
    }
}
