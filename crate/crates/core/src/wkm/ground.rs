use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::WorldKnowledge;
use crate::scene::{tokenize, Relation};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GroundingError {
    #[error("no object matches the anchor description `{0}`")]
    Anchor(String),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("no neighbour of {anchors:?} stands in relation `{relation}`")]
    Relation { anchors: Vec<String>, relation: String },
    #[error("description is ambiguous between {0:?}")]
    Ambiguous(Vec<String>),
}

/// Relation phrases recognised in utterances, canonical phrase first per relation.
pub const RELATION_LEXICON: &[(&str, Relation)] = &[
    ("near", Relation::Near),
    ("next to", Relation::Near),
    ("beside", Relation::Near),
    ("close to", Relation::Near),
    ("on", Relation::On),
    ("on top of", Relation::On),
    ("in", Relation::In),
    ("inside", Relation::In),
    ("above", Relation::Above),
    ("over", Relation::Above),
    ("below", Relation::Below),
    ("beneath", Relation::Below),
    ("under", Relation::Under),
    ("underneath", Relation::Under),
    ("out of", Relation::OutOf),
];

/// Sentence openers stripped before parsing.
const OPENERS: &[&str] = &["i want to get", "please find", "can you find", "bring me", "go to", "locate", "find"];

/// "<target object info> <relation> <anchor object info>".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub target_info: String,
    pub relation: Relation,
    pub anchor_info: String,
}

impl Utterance {
    pub fn render(&self) -> String {
        format!("{} {} {}", self.target_info, self.relation.phrase(), self.anchor_info)
    }
}

/// Splits a (possibly perturbed) template utterance back into its parts.
pub fn parse_utterance(text: &str) -> Option<Utterance> {
    let mut tokens = tokenize(text);
    for opener in OPENERS {
        let o = tokenize(opener);
        if tokens.len() > o.len() && tokens[..o.len()] == o[..] {
            tokens.drain(..o.len());
            break;
        }
    }
    let mut phrases: Vec<(Vec<String>, Relation)> =
        RELATION_LEXICON.iter().map(|(p, r)| (tokenize(p), *r)).collect();
    phrases.sort_by_key(|(p, _)| std::cmp::Reverse(p.len()));
    for start in 1..tokens.len() {
        for (p, rel) in &phrases {
            let end = start + p.len();
            if end < tokens.len() && tokens[start..end] == p[..] {
                return Some(Utterance {
                    target_info: tokens[..start].join(" "),
                    relation: *rel,
                    anchor_info: tokens[end..].join(" "),
                });
            }
        }
    }
    None
}

fn relation_by_name(name: &str) -> Option<Relation> {
    let toks = tokenize(name).join(" ");
    name.parse::<Relation>()
        .ok()
        .or_else(|| RELATION_LEXICON.iter().find(|(p, _)| *p == toks).map(|(_, r)| *r))
}

impl WorldKnowledge {
    /// Category hit (1.0) plus half the fraction of mentioned colour/shape words
    /// the object carries.
    pub fn match_score(&self, id: &str, info: &str) -> f64 {
        let Some(obj) = self.graph.node(id) else { return 0.0 };
        let toks: BTreeSet<String> = tokenize(info).into_iter().collect();
        let cat_hit = tokenize(&obj.category).iter().all(|t| toks.contains(t));
        let mentioned: Vec<&String> =
            toks.iter().filter(|t| self.colors.contains(*t) || self.shapes.contains(*t)).collect();
        let attr = if mentioned.is_empty() {
            0.0
        } else {
            let a = &self.attributes[id];
            let hits = mentioned.iter().filter(|t| a.colors.contains(**t) || a.shapes.contains(**t)).count();
            hits as f64 / mentioned.len() as f64
        };
        (if cat_hit { 1.0 } else { 0.0 }) + 0.5 * attr
    }

    fn best<'a>(&self, ids: impl Iterator<Item = &'a String>, info: &str) -> (f64, Vec<String>) {
        let mut best = f64::NEG_INFINITY;
        let mut tied = Vec::new();
        for id in ids {
            let s = self.match_score(id, info);
            if s > best + 1e-12 {
                best = s;
                tied.clear();
                tied.push(id.clone());
            } else if (s - best).abs() <= 1e-12 {
                tied.push(id.clone());
            }
        }
        (best, tied)
    }

    /// Objects `x` with an edge (x, relation, anchor).
    fn related_to(&self, anchors: &[String], relation: Relation) -> BTreeSet<String> {
        self.graph
            .adjacency
            .iter()
            .filter(|(src, edges)| {
                !anchors.contains(src) && edges.iter().any(|e| e.relation == relation && anchors.contains(&e.target))
            })
            .map(|(src, _)| src.clone())
            .collect()
    }

    /// Resolves "<target> <relation> <anchor>" to one instance.
    pub fn ground(&self, target_info: &str, anchor_info: &str, relation_name: &str) -> Result<String, GroundingError> {
        let relation =
            relation_by_name(relation_name).ok_or_else(|| GroundingError::UnknownRelation(relation_name.into()))?;
        let (score, anchors) = self.best(self.graph.nodes.keys(), anchor_info);
        if anchors.is_empty() || score <= 0.0 {
            return Err(GroundingError::Anchor(anchor_info.to_string()));
        }
        let neighbours = self.related_to(&anchors, relation);
        if neighbours.is_empty() {
            return Err(GroundingError::Relation { anchors, relation: relation.to_string() });
        }
        let (_, tied) = self.best(neighbours.iter(), target_info);
        match tied.len() {
            1 => Ok(tied.into_iter().next().unwrap()),
            _ => Err(GroundingError::Ambiguous(tied)),
        }
    }

    /// Parses a free utterance and grounds it.
    pub fn ground_utterance(&self, text: &str) -> Result<String, GroundingError> {
        let u = parse_utterance(text).ok_or_else(|| GroundingError::UnknownRelation(text.to_string()))?;
        self.ground(&u.target_info, &u.anchor_info, u.relation.as_str())
    }

    fn info_options(&self, id: &str) -> Vec<String> {
        let obj = &self.graph.nodes[id];
        let a = &self.attributes[id];
        let cat = &obj.category;
        let mut out = vec![format!("the {cat}")];
        out.extend(a.colors.iter().map(|c| format!("the {c} {cat}")));
        out.extend(a.shapes.iter().map(|s| format!("the {s} {cat}")));
        for c in &a.colors {
            out.extend(a.shapes.iter().map(|s| format!("the {c} {s} {cat}")));
        }
        out
    }

    /// A template utterance that singles out `target`, if the scene graph allows one.
    pub fn describe(&self, target: &str) -> Option<Utterance> {
        let mut edges: Vec<_> = self.graph.edges(target).iter().collect();
        edges.sort_by(|a, b| (a.relation.as_str(), &a.target).cmp(&(b.relation.as_str(), &b.target)));
        for e in edges {
            let anchor_info = self.info_options(&e.target).into_iter().find(|info| {
                let (s, tied) = self.best(self.graph.nodes.keys(), info);
                s > 0.0 && tied.len() == 1 && tied[0] == e.target
            });
            let Some(anchor_info) = anchor_info else { continue };
            let pool = self.related_to(std::slice::from_ref(&e.target), e.relation);
            let target_info = self.info_options(target).into_iter().find(|info| {
                let (_, tied) = self.best(pool.iter(), info);
                tied.len() == 1 && tied[0] == target
            });
            if let Some(target_info) = target_info {
                return Some(Utterance { target_info, relation: e.relation, anchor_info });
            }
        }
        None
    }
}
