use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TaskGenError;
use crate::external::LlmClient;
use crate::scene::{room_label, tokenize};
use crate::wkm::{parse_utterance, InfoCondition, KnowledgeSession, RelationClause, WorldKnowledge, RELATION_LEXICON};

/// Renders one relation requirement as a trailing clause.
pub fn relation_clause(c: &RelationClause) -> String {
    let phrase = c.relation().phrase();
    match (c.has(), c.is_nothing()) {
        (true, false) => format!("{phrase} a {}", c.category()),
        (false, false) => format!("not {phrase} any {}", c.category()),
        (true, true) => format!("with nothing it is {phrase}"),
        (false, true) => format!("{phrase} something"),
    }
}

fn appearance_clause(a: &str) -> String {
    let t = a.trim().trim_end_matches('.');
    let t = t.strip_prefix("The object is ").or_else(|| t.strip_prefix("the object is ")).unwrap_or(t);
    format!("({})", t.to_lowercase())
}

/// Deterministic template description: category, then room, relation and
/// appearance clauses in trace order.
pub fn speak(category: &str, infos: &[InfoCondition]) -> String {
    let mut noun = category.to_string();
    let mut parts = Vec::new();
    for info in infos {
        if let Some(c) = &info.category {
            noun = c.clone();
        }
        if let Some(r) = &info.room {
            parts.push(format!("in the {}", room_label(r)));
        }
        if let Some(rels) = &info.relation {
            parts.extend(rels.iter().map(relation_clause));
        }
        if let Some(apps) = &info.appearance {
            parts.extend(apps.iter().map(|a| appearance_clause(a)));
        }
    }
    let mut s = format!("the {noun}");
    for p in parts {
        s.push(' ');
        s.push_str(&p);
    }
    s
}

fn sentence(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => format!("{}{}.", f.to_uppercase(), c.as_str()),
        None => String::new(),
    }
}

/// Optional fluency rewrite of template text. The template and the recorded
/// trace stay authoritative; a speaker returning `None` keeps the template.
pub trait Speaker: Send + Sync {
    fn rewrite(&self, template: &str) -> Option<String>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct TemplateSpeaker;

impl Speaker for TemplateSpeaker {
    fn rewrite(&self, _template: &str) -> Option<String> {
        None
    }
}

/// Rewrites through an external LLM; falls back to the template on failure.
pub struct LlmSpeaker(pub LlmClient);

impl Speaker for LlmSpeaker {
    fn rewrite(&self, template: &str) -> Option<String> {
        let prompt = format!(
            "Rewrite the following description of an object as one fluent sentence. Keep every fact and add none.\n{template}"
        );
        match self.0.complete(&prompt) {
            Ok(t) if !t.trim().is_empty() => Some(t.trim().to_string()),
            Ok(_) => None,
            Err(e) => {
                tracing::warn!(error = %e, "speaker unavailable, keeping template text");
                None
            }
        }
    }
}

pub fn voiced(speaker: &dyn Speaker, template: String) -> String {
    speaker.rewrite(&template).unwrap_or(template)
}

fn disambiguate(
    wk: &WorldKnowledge,
    session: &mut KnowledgeSession,
    mut cands: BTreeSet<String>,
    target: &str,
    max_rounds: usize,
    mut on_info: impl FnMut(&InfoCondition),
) -> Result<(Vec<InfoCondition>, BTreeSet<String>), TaskGenError> {
    let mut infos = Vec::new();
    while cands.len() > 1 && infos.len() < max_rounds {
        let diff = wk.find_diff(target, &cands)?;
        let info = wk.get_info(session, target, &diff)?;
        let next = wk.filter(&cands, &info)?;
        if !next.contains(target) {
            return Err(TaskGenError::Generation(format!("condition {info:?} rejects its own target {target}")));
        }
        on_info(&info);
        cands = next;
        infos.push(info);
    }
    Ok((infos, cands))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavInstruction {
    pub instruction: String,
    pub description: String,
    pub trace: Vec<InfoCondition>,
}

/// Unique description of `target`: find_diff/get_info/filter until only the
/// target is left.
pub fn gen_instruction_objnav(
    wk: &WorldKnowledge,
    session: &mut KnowledgeSession,
    candidates: &BTreeSet<String>,
    target: &str,
) -> Result<NavInstruction, TaskGenError> {
    let category = wk.graph().category(target).ok_or_else(|| TaskGenError::Generation(format!("unknown target {target}")))?;
    let (trace, left) = disambiguate(wk, session, candidates.clone(), target, usize::MAX, |_| {})?;
    debug_assert_eq!(left.len(), 1);
    let description = speak(category, &trace);
    Ok(NavInstruction { instruction: sentence(&format!("find {description}")), description, trace })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocialInstruction {
    pub instruction: String,
    pub rounds: usize,
    /// Every condition searched during the rounds; only the last is spoken.
    pub searched: Vec<InfoCondition>,
    pub remaining: BTreeSet<String>,
}

/// Coarse instruction from the last attribute of a random number of rounds
/// in `[1, round_cap)`.
pub fn gen_instruction_socialnav<R: Rng>(
    wk: &WorldKnowledge,
    session: &mut KnowledgeSession,
    candidates: &BTreeSet<String>,
    target: &str,
    round_cap: usize,
    rng: &mut R,
) -> Result<SocialInstruction, TaskGenError> {
    let category = wk.graph().category(target).ok_or_else(|| TaskGenError::Generation(format!("unknown target {target}")))?;
    let rounds = rng.gen_range(1..round_cap.max(2));
    let (searched, remaining) = disambiguate(wk, session, candidates.clone(), target, rounds, |_| {})?;
    let spoken: Vec<InfoCondition> = searched.last().cloned().into_iter().collect();
    let instruction = sentence(&format!("find {}", speak(category, &spoken)));
    Ok(SocialInstruction { instruction, rounds, searched, remaining })
}

/// Receptacle description for one placement condition: the witness's
/// disambiguating infos with room and relation infos each kept with
/// probability `1 - drop_probability`.
pub fn receptacle_infos<R: Rng>(
    wk: &WorldKnowledge,
    session: &mut KnowledgeSession,
    witness: &str,
    drop_probability: f64,
    rng: &mut R,
) -> Result<Vec<InfoCondition>, TaskGenError> {
    let category = wk.graph().category(witness).ok_or_else(|| TaskGenError::Generation(format!("unknown witness {witness}")))?;
    let cands = wk.category_candidates(category);
    let (trace, _) = disambiguate(wk, session, cands, witness, usize::MAX, |_| {})?;
    let mut kept = Vec::new();
    for info in trace {
        let droppable = info.room.is_some() || info.relation.is_some();
        if !droppable || rng.gen::<f64>() >= drop_probability {
            kept.push(info);
        }
    }
    Ok(kept)
}

/// Pick-and-place instruction composed from the handheld object's unique
/// description and the (relation, receptacle description) pairs.
pub fn compose_locomanip(source_desc: &str, placements: &[(&str, String)]) -> String {
    let clauses: Vec<String> = placements
        .iter()
        .map(|(rel, desc)| match *rel {
            "on" => format!("on {desc}"),
            _ => format!("near {desc}"),
        })
        .collect();
    sentence(&format!("pick up {source_desc} and place it {}", clauses.join(" and ")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbConfig {
    pub hide_category: f64,
    pub replace_relation: f64,
    pub adjust_sentence: f64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self { hide_category: 0.0, replace_relation: 0.5, adjust_sentence: 0.5 }
    }
}

const SENTENCE_OPENERS: &[&str] = &["find", "please find", "i want to get", "can you find", "locate"];

/// Applies category hiding, relation synonym replacement and an opening
/// phrase to a "<target> <relation> <anchor>" utterance, each with its
/// configured probability.
pub fn perturb_utterance<R: Rng>(u: &str, cfg: &PerturbConfig, rng: &mut R) -> String {
    let Some(mut parts) = parse_utterance(u) else { return u.to_string() };
    let mut relation_text = parts.relation.phrase().to_string();
    if rng.gen::<f64>() < cfg.hide_category {
        let toks = tokenize(&parts.target_info);
        if let Some(last) = toks.last() {
            let mut toks = toks.clone();
            let n = toks.len();
            toks[n - 1] = if last == "object" { last.clone() } else { "object".into() };
            parts.target_info = toks.join(" ");
        }
    }
    if rng.gen::<f64>() < cfg.replace_relation {
        let alts: Vec<&str> = RELATION_LEXICON
            .iter()
            .filter(|(p, r)| *r == parts.relation && *p != parts.relation.phrase())
            .map(|(p, _)| *p)
            .collect();
        if !alts.is_empty() {
            relation_text = alts[rng.gen_range(0..alts.len())].to_string();
        }
    }
    let mut out = format!("{} {} {}", parts.target_info, relation_text, parts.anchor_info);
    if rng.gen::<f64>() < cfg.adjust_sentence {
        out = format!("{} {out}", SENTENCE_OPENERS[rng.gen_range(0..SENTENCE_OPENERS.len())]);
    }
    out
}
