//! Field-of-view and line-of-sight tests against object footprints.

use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Point2, Rect};
use crate::scene::Relation;
use crate::world::World;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FovConfig {
    /// Half of the horizontal field of view, degrees.
    pub half_angle_deg: f64,
    /// Maximum sensing range, meters.
    pub range: f64,
}

impl Default for FovConfig {
    fn default() -> Self {
        Self { half_angle_deg: 45.0, range: 10.0 }
    }
}

/// An object tall enough to block sight lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Occluder {
    pub id: String,
    pub footprint: Rect,
    pub max_z: f64,
}

/// Objects intersecting the projection band, i.e. the ones that also block
/// motion.
pub fn occluders(scene: &crate::scene::Scene, z_band: [f64; 2]) -> Vec<Occluder> {
    scene
        .objects
        .values()
        .filter(|o| o.max_points[2] >= z_band[0] && o.min_points[2] <= z_band[1])
        .map(|o| Occluder { id: o.instance_id.clone(), footprint: o.aabb().footprint(), max_z: o.max_points[2] })
        .collect()
}

/// Nearest point of the object's footprint to `from`.
pub fn sight_point(world: &World, target: &str, from: Point2) -> Option<Point2> {
    Some(world.scene.object(target)?.aabb().footprint().nearest_point(from))
}

/// Unobstructed sight line from `from` to the target's nearest footprint
/// point. Only objects at least as tall as the target occlude it; the target,
/// the held object and whatever the target rests on or in never do.
pub fn line_of_sight(world: &World, from: Point2, target: &str, held: Option<&str>) -> bool {
    let Some(obj) = world.scene.object(target) else { return false };
    let to = obj.aabb().footprint().nearest_point(from);
    let d = from.dist(to);
    if d < 1e-9 {
        return true;
    }
    // Stop just short of the target so touching neighbours don't count.
    let end = from.lerp(to, ((d - 1e-6) / d).max(0.0));
    let support: Vec<&str> = world
        .graph
        .edges(target)
        .iter()
        .filter(|e| matches!(e.relation, Relation::On | Relation::In))
        .map(|e| e.target.as_str())
        .collect();
    let tz = obj.max_points[2];
    !world.occluders.iter().any(|o| {
        o.id != target
            && Some(o.id.as_str()) != held
            && o.max_z >= tz
            && !support.contains(&o.id.as_str())
            && o.footprint.intersects_segment(from, end)
    })
}

/// Bearing (relative to `heading`, radians) and range to the target.
pub fn bearing_range(world: &World, position: Point2, heading: f64, target: &str) -> Option<(f64, f64)> {
    let p = sight_point(world, target, position)?;
    let v = p.sub(position);
    let range = v.norm();
    let bearing = if range < 1e-12 { 0.0 } else { wrap_angle(v.y.atan2(v.x) - heading) };
    Some((bearing, range))
}

pub fn fov_visible(world: &World, position: Point2, heading: f64, target: &str, held: Option<&str>, cfg: &FovConfig) -> bool {
    let Some((bearing, range)) = bearing_range(world, position, heading, target) else { return false };
    range <= cfg.range
        && bearing.abs() <= cfg.half_angle_deg.to_radians() + 1e-9
        && line_of_sight(world, position, target, held)
}
