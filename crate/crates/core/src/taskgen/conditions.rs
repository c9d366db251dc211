use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{receptacle_infos, GenerationConfig, TaskGenError};
use crate::geometry::Aabb;
use crate::metrics::check_conditions;
use crate::scene::Relation;
use crate::wkm::{InfoCondition, KnowledgeSession};
use crate::world::World;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaceRelation {
    On,
    Nearby,
}

impl PlaceRelation {
    pub fn as_str(self) -> &'static str {
        match self {
            PlaceRelation::On => "on",
            PlaceRelation::Nearby => "nearby",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementCondition {
    pub relation: PlaceRelation,
    /// Description of acceptable receptacles; any matching object satisfies
    /// the condition.
    pub receptacle_spec: InfoCondition,
    /// The receptacle the condition was sampled from.
    pub receptacle_witness: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    On,
    Nearby,
    NearbyNearby,
    OnNearby,
}

impl Pattern {
    pub const ALL: [Pattern; 4] = [Pattern::On, Pattern::Nearby, Pattern::NearbyNearby, Pattern::OnNearby];

    pub fn relations(self) -> &'static [PlaceRelation] {
        match self {
            Pattern::On => &[PlaceRelation::On],
            Pattern::Nearby => &[PlaceRelation::Nearby],
            Pattern::NearbyNearby => &[PlaceRelation::Nearby, PlaceRelation::Nearby],
            Pattern::OnNearby => &[PlaceRelation::On, PlaceRelation::Nearby],
        }
    }
}

/// Objects the source currently rests on or in.
fn supports(world: &World, source: &str) -> BTreeSet<String> {
    world
        .graph
        .edges(source)
        .iter()
        .filter(|e| matches!(e.relation, Relation::On | Relation::In))
        .map(|e| e.target.clone())
        .collect()
}

/// Witness pools for `source`: receptacles for "on", any fixed object for
/// "nearby". Objects the source currently rests on are left out so a
/// condition never holds before the agent acts.
fn pools(world: &World, source: &str, cfg: &GenerationConfig) -> (Vec<String>, Vec<String>) {
    let skip = supports(world, source);
    let mut on = Vec::new();
    let mut nearby = Vec::new();
    for (id, o) in &world.scene.objects {
        if id == source || skip.contains(id) || o.interactive || cfg.exclude_categories.contains(&o.category) {
            continue;
        }
        if cfg.receptacles.contains(&o.category) {
            on.push(id.clone());
        }
        nearby.push(id.clone());
    }
    (on, nearby)
}

fn pairs_within(world: &World, a: &[String], b: &[String], gap: f64) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for x in a {
        let bx = world.scene.objects[x].aabb();
        for y in b {
            if x != y && bx.gap(&world.scene.objects[y].aabb()) <= gap {
                out.push((x.clone(), y.clone()));
            }
        }
    }
    out
}

/// Patterns that have at least one witness assignment for `source`.
pub fn feasible_patterns(world: &World, source: &str, cfg: &GenerationConfig) -> Vec<Pattern> {
    let (on, nearby) = pools(world, source, cfg);
    Pattern::ALL
        .into_iter()
        .filter(|p| match p {
            Pattern::On => !on.is_empty(),
            Pattern::Nearby => !nearby.is_empty(),
            Pattern::NearbyNearby => !pairs_within(world, &nearby, &nearby, cfg.witness_gap).is_empty(),
            Pattern::OnNearby => !pairs_within(world, &on, &nearby, cfg.witness_gap).is_empty(),
        })
        .collect()
}

/// A placement of the source's box that the conditions' witnesses accept:
/// resting centred on the first witness.
pub fn canonical_placement(world: &World, source: &str, conditions: &[PlacementCondition]) -> Option<Aabb> {
    let src = world.scene.object(source)?.aabb();
    let w = world.scene.object(&conditions.first()?.receptacle_witness)?.aabb();
    let c = w.center();
    let s = src.center();
    Some(src.translated([c[0] - s[0], c[1] - s[1], w.max[2] + 0.001 - src.min[2]]))
}

/// Draws a pattern uniformly (redrawing infeasible ones), witnesses uniformly
/// from their pools, and receptacle descriptions with random attribute drops.
pub fn sample_conditions<R: Rng>(
    world: &World,
    source: &str,
    cfg: &GenerationConfig,
    session: &mut KnowledgeSession,
    rng: &mut R,
) -> Result<(Pattern, Vec<PlacementCondition>), TaskGenError> {
    let feasible = feasible_patterns(world, source, cfg);
    if feasible.is_empty() {
        return Err(TaskGenError::Generation(format!("no placement pattern is possible for {source}")));
    }
    let (on, nearby) = pools(world, source, cfg);
    for _ in 0..cfg.max_attempts {
        let pattern = Pattern::ALL[rng.gen_range(0..Pattern::ALL.len())];
        if !feasible.contains(&pattern) {
            tracing::debug!(?pattern, source, "pattern infeasible, redrawing");
            continue;
        }
        let witnesses: Vec<String> = match pattern {
            Pattern::On => vec![on[rng.gen_range(0..on.len())].clone()],
            Pattern::Nearby => vec![nearby[rng.gen_range(0..nearby.len())].clone()],
            Pattern::NearbyNearby | Pattern::OnNearby => {
                let first = if pattern == Pattern::OnNearby { &on } else { &nearby };
                let a = first[rng.gen_range(0..first.len())].clone();
                let b = nearby[rng.gen_range(0..nearby.len())].clone();
                let ga = world.scene.objects[&a].aabb();
                if a == b || ga.gap(&world.scene.objects[&b].aabb()) > cfg.witness_gap {
                    tracing::debug!(?pattern, a, b, "witnesses too far apart, redrawing");
                    continue;
                }
                vec![a, b]
            }
        };
        let mut conditions = Vec::new();
        for (rel, w) in pattern.relations().iter().zip(&witnesses) {
            let category = world.graph.category(w).unwrap_or_default().to_string();
            let mut spec = InfoCondition::category(category);
            for info in receptacle_infos(&world.knowledge, session, w, cfg.drop_probability, rng)? {
                spec.merge(&info);
            }
            conditions.push(PlacementCondition { relation: *rel, receptacle_spec: spec, receptacle_witness: w.clone() });
        }
        let placed = canonical_placement(world, source, &conditions);
        let flags = check_conditions(placed.as_ref(), &conditions, &world.knowledge, &world.relations, &cfg.placement);
        if flags.iter().all(|&f| f) {
            return Ok((pattern, conditions));
        }
        tracing::debug!(?pattern, ?witnesses, "canonical placement misses a condition, redrawing");
    }
    Err(TaskGenError::Generation(format!("no satisfiable placement conditions for {source} after {} draws", cfg.max_attempts)))
}
