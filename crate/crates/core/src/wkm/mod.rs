//! The world knowledge manager: difference search, information lookup and
//! candidate filtering over a scene graph, plus description grounding.
//!
//! `find_diff`, `get_info` and `filter` follow the difference-search program
//! with its category > room > relation > appearance priority. Map iteration
//! is made deterministic: candidates by instance id, relation types and
//! anchor categories lexicographically.

mod ground;
mod similarity;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scene::{extract_attributes, AttributeSet, Relation, SceneGraph, DEFAULT_COLORS, DEFAULT_SHAPES};

pub use ground::{parse_utterance, GroundingError, Utterance, RELATION_LEXICON};
pub use similarity::{cosine, token_cosine, EmbeddingSimilarity, ProviderError, SimilarityProvider, TokenCosine};

/// Anchor category marking "no object of this relation type".
pub const NOTHING: &str = "nothing";

pub const APPEARANCE_THRESHOLD: f64 = 0.9;

#[derive(Debug, thiserror::Error)]
pub enum WkmError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("appearance attributes of `{0}` exhausted")]
    AppearanceExhausted(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// The first level at which a candidate set differs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "diff_type", content = "payload", rename_all = "snake_case")]
pub enum Difference {
    Category(BTreeSet<String>),
    Room(BTreeSet<String>),
    /// `category` is [`NOTHING`] when the target lacks the relation type entirely.
    Relation { relation: Relation, category: String },
    Appearance,
}

/// One relation requirement: (has, relation, neighbour category).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationClause(pub bool, pub Relation, pub String);

impl RelationClause {
    pub fn has(&self) -> bool {
        self.0
    }
    pub fn relation(&self) -> Relation {
        self.1
    }
    pub fn category(&self) -> &str {
        &self.2
    }
    pub fn is_nothing(&self) -> bool {
        self.2 == NOTHING
    }
}

/// Knowledge about one object, used both as disclosed information and as a
/// filter condition.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InfoCondition {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub room: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<Vec<RelationClause>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub appearance: Option<Vec<String>>,
}

impl InfoCondition {
    pub fn category(c: impl Into<String>) -> Self {
        Self { category: Some(c.into()), ..Default::default() }
    }

    pub fn room(r: impl Into<String>) -> Self {
        Self { room: Some(r.into()), ..Default::default() }
    }

    pub fn relation(has: bool, rel: Relation, cat: impl Into<String>) -> Self {
        Self { relation: Some(vec![RelationClause(has, rel, cat.into())]), ..Default::default() }
    }

    pub fn appearance(a: impl Into<String>) -> Self {
        Self { appearance: Some(vec![a.into()]), ..Default::default() }
    }

    pub fn is_empty(&self) -> bool {
        self.category.is_none() && self.room.is_none() && self.relation.is_none() && self.appearance.is_none()
    }

    /// Conjunction of two conditions. Later category/room values win.
    pub fn merge(&mut self, other: &InfoCondition) {
        if other.category.is_some() {
            self.category.clone_from(&other.category);
        }
        if other.room.is_some() {
            self.room.clone_from(&other.room);
        }
        if let Some(r) = &other.relation {
            self.relation.get_or_insert_with(Vec::new).extend(r.iter().cloned());
        }
        if let Some(a) = &other.appearance {
            self.appearance.get_or_insert_with(Vec::new).extend(a.iter().cloned());
        }
    }
}

/// Per-dialogue state: the set of already disclosed appearance attributes
/// and the sampler's RNG.
#[derive(Debug, Clone)]
pub struct KnowledgeSession {
    sampled: BTreeSet<String>,
    rng: ChaCha8Rng,
}

impl KnowledgeSession {
    pub fn new(seed: u64) -> Self {
        Self { sampled: BTreeSet::new(), rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn sampled(&self) -> &BTreeSet<String> {
        &self.sampled
    }

    pub fn reset(&mut self) {
        self.sampled.clear();
    }
}

pub struct WorldKnowledge {
    graph: Arc<SceneGraph>,
    attributes: BTreeMap<String, AttributeSet>,
    provider: Arc<dyn SimilarityProvider>,
    colors: BTreeSet<String>,
    shapes: BTreeSet<String>,
}

impl std::fmt::Debug for WorldKnowledge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WorldKnowledge")
            .field("scene", &self.graph.scene_id)
            .field("provider", &self.provider.name())
            .finish()
    }
}

impl WorldKnowledge {
    /// Knowledge over `graph` with the default vocabularies and the offline
    /// token-cosine similarity.
    pub fn new(graph: Arc<SceneGraph>) -> Self {
        Self::with_provider(graph, Arc::new(TokenCosine))
    }

    pub fn with_provider(graph: Arc<SceneGraph>, provider: Arc<dyn SimilarityProvider>) -> Self {
        let colors = DEFAULT_COLORS.iter().map(|s| s.to_string()).collect();
        let shapes = DEFAULT_SHAPES.iter().map(|s| s.to_string()).collect();
        Self::with_vocab(graph, provider, colors, shapes)
    }

    pub fn with_vocab(
        graph: Arc<SceneGraph>,
        provider: Arc<dyn SimilarityProvider>,
        colors: BTreeSet<String>,
        shapes: BTreeSet<String>,
    ) -> Self {
        let attributes = graph
            .nodes
            .iter()
            .map(|(id, o)| (id.clone(), extract_attributes(o, &colors, &shapes)))
            .collect();
        Self { graph, attributes, provider, colors, shapes }
    }

    pub fn graph(&self) -> &Arc<SceneGraph> {
        &self.graph
    }

    pub fn attributes(&self, id: &str) -> Option<&AttributeSet> {
        self.attributes.get(id)
    }

    pub fn provider(&self) -> &Arc<dyn SimilarityProvider> {
        &self.provider
    }

    pub fn vocab(&self) -> (&BTreeSet<String>, &BTreeSet<String>) {
        (&self.colors, &self.shapes)
    }

    pub fn similarity(&self, a: &str, b: &str) -> Result<f64, ProviderError> {
        self.provider.similarity(a, b)
    }

    fn node(&self, id: &str) -> Result<&crate::scene::ObjectInstance, WkmError> {
        self.graph.node(id).ok_or_else(|| WkmError::UnknownObject(id.to_string()))
    }

    /// Relation type -> neighbour category -> count, with `near` always present.
    fn relation_sets(&self, id: &str) -> BTreeMap<Relation, BTreeMap<String, usize>> {
        let mut sets: BTreeMap<Relation, BTreeMap<String, usize>> = BTreeMap::new();
        sets.insert(Relation::Near, BTreeMap::new());
        for (rel, cat) in self.graph.relation_categories(id) {
            *sets.entry(rel).or_default().entry(cat.to_string()).or_insert(0) += 1;
        }
        sets
    }

    /// Finds one difference that can shrink `candidates` around `target`.
    pub fn find_diff(&self, target: &str, candidates: &BTreeSet<String>) -> Result<Difference, WkmError> {
        if !candidates.contains(target) {
            return Err(WkmError::Contract(format!("target `{target}` is not among the candidates")));
        }
        if candidates.len() < 2 {
            return Err(WkmError::Contract("find_diff needs at least two candidates".into()));
        }
        let mut categories = BTreeSet::new();
        let mut rooms = BTreeSet::new();
        let mut relations: BTreeMap<Relation, Vec<BTreeMap<String, usize>>> = BTreeMap::new();
        let mut current: BTreeMap<Relation, BTreeMap<String, usize>> = BTreeMap::new();

        for id in candidates {
            let obj = self.node(id)?;
            categories.insert(obj.category.clone());
            rooms.insert(obj.room.clone());
            for (rel, item) in self.relation_sets(id) {
                if id == target {
                    current.insert(rel, item.clone());
                }
                relations.entry(rel).or_default().push(item);
            }
        }

        if categories.len() > 1 {
            return Ok(Difference::Category(categories));
        }
        if rooms.len() > 1 {
            return Ok(Difference::Room(rooms));
        }
        // Relation types iterate in lexicographic order of their names.
        let mut rel_types: Vec<Relation> = relations.keys().copied().collect();
        rel_types.sort_by_key(|r| r.as_str());
        for rel in rel_types {
            let mut obj_list = relations.remove(&rel).unwrap_or_default();
            obj_list.resize_with(candidates.len(), BTreeMap::new);
            let Some(target_dict) = current.get(&rel) else {
                return Ok(Difference::Relation { relation: rel, category: NOTHING.to_string() });
            };
            for other in &obj_list {
                for cat in target_dict.keys() {
                    if !other.contains_key(cat) {
                        return Ok(Difference::Relation { relation: rel, category: cat.clone() });
                    }
                }
            }
        }
        Ok(Difference::Appearance)
    }

    /// The target's own value at the level named by `diff`.
    pub fn get_info(
        &self,
        session: &mut KnowledgeSession,
        object: &str,
        diff: &Difference,
    ) -> Result<InfoCondition, WkmError> {
        let obj = self.node(object)?;
        match diff {
            Difference::Category(_) => Ok(InfoCondition::category(obj.category.clone())),
            Difference::Room(_) => Ok(InfoCondition::room(obj.room.clone())),
            Difference::Relation { relation, category } => {
                let pairs: Vec<(Relation, &str)> = self.graph.relation_categories(object).collect();
                if category == NOTHING {
                    let present = pairs.iter().any(|(r, _)| r == relation);
                    return Ok(InfoCondition::relation(!present, *relation, NOTHING));
                }
                let flag = pairs.iter().any(|(r, c)| r == relation && c == category);
                Ok(InfoCondition::relation(flag, *relation, category.clone()))
            }
            Difference::Appearance => {
                let attrs = &self.attributes[object];
                let fresh: Vec<&String> =
                    attrs.entries.iter().map(|(_, a)| a).filter(|a| !session.sampled.contains(*a)).collect();
                if fresh.is_empty() {
                    return Err(WkmError::AppearanceExhausted(object.to_string()));
                }
                let attr = fresh[session.rng.gen_range(0..fresh.len())].clone();
                session.sampled.insert(attr.clone());
                Ok(InfoCondition::appearance(attr))
            }
        }
    }

    fn clause_holds(&self, id: &str, clause: &RelationClause) -> bool {
        let mut rels = BTreeSet::new();
        let mut matched = false;
        for (rel, cat) in self.graph.relation_categories(id) {
            rels.insert(rel);
            if rel == clause.relation() && cat == clause.category() {
                matched = true;
            }
        }
        match (clause.has(), clause.is_nothing()) {
            (true, true) => !rels.contains(&clause.relation()),
            (true, false) => matched,
            (false, true) => rels.contains(&clause.relation()),
            (false, false) => !matched,
        }
    }

    /// Subset of `candidates` meeting every part of `condition`.
    pub fn filter(
        &self,
        candidates: &BTreeSet<String>,
        condition: &InfoCondition,
    ) -> Result<BTreeSet<String>, WkmError> {
        if condition.is_empty() {
            return Err(WkmError::Contract("filter condition is empty".into()));
        }
        let mut out = BTreeSet::new();
        'cands: for id in candidates {
            let Some(obj) = self.graph.node(id) else {
                tracing::warn!(object = %id, "filter skips unknown candidate");
                continue;
            };
            if let Some(c) = &condition.category {
                if *c != obj.category {
                    continue;
                }
            }
            if let Some(r) = &condition.room {
                if *r != obj.room {
                    continue;
                }
            }
            if let Some(clauses) = &condition.relation {
                if !clauses.iter().all(|c| self.clause_holds(id, c)) {
                    continue;
                }
            }
            if let Some(wanted) = &condition.appearance {
                let entries = &self.attributes[id].entries;
                for a in wanted {
                    let mut hit = false;
                    for (_, b) in entries {
                        if self.provider.similarity(a, b)? > APPEARANCE_THRESHOLD {
                            hit = true;
                            break;
                        }
                    }
                    if !hit {
                        continue 'cands;
                    }
                }
            }
            out.insert(id.clone());
        }
        Ok(out)
    }

    /// Applies `conditions` in order starting from `candidates`.
    pub fn fold_filter(
        &self,
        candidates: &BTreeSet<String>,
        conditions: &[InfoCondition],
    ) -> Result<BTreeSet<String>, WkmError> {
        let mut c = candidates.clone();
        for cond in conditions {
            c = self.filter(&c, cond)?;
        }
        Ok(c)
    }

    /// All objects sharing `id`'s category.
    pub fn category_candidates(&self, category: &str) -> BTreeSet<String> {
        self.graph.nodes.values().filter(|o| o.category == category).map(|o| o.instance_id.clone()).collect()
    }
}
