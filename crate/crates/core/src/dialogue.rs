//! NPC dialogue: three-round progressive disclosure for social navigation
//! and object-centric question answering.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::scene::{room_label, Relation};
use crate::taskgen::{speak, voiced, Episode, Speaker, Task};
use crate::wkm::{InfoCondition, KnowledgeSession, SimilarityProvider, WkmError, WorldKnowledge};

pub const MAX_ROUNDS: usize = 3;
pub const QA_THRESHOLD: f64 = 0.6;

#[derive(Debug, thiserror::Error)]
pub enum DialogueError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Knowledge(#[from] WkmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Agent,
    Npc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub speaker: Role,
    pub text: String,
    pub step: u64,
}

/// One answered question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub question: String,
    pub reply: String,
    pub condition: Option<InfoCondition>,
    pub candidates_before: usize,
    pub candidates_after: usize,
}

#[derive(Debug, Clone)]
pub struct DialogueSession {
    pub episode_id: String,
    pub target: String,
    pub memory: Vec<Message>,
    pub remaining_rounds: usize,
    /// objects_0, objects_1, ...: one entry per disclosed condition.
    pub candidate_history: Vec<BTreeSet<String>>,
    pub disclosed: Vec<InfoCondition>,
    pub rounds: Vec<RoundRecord>,
    knowledge: KnowledgeSession,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub episode_id: String,
    pub messages: Vec<Message>,
    pub rounds: Vec<RoundRecord>,
    /// |objects_i| per disclosure, starting with |objects_0|.
    pub candidate_counts: Vec<usize>,
}

impl DialogueSession {
    /// objects_0 is every object of the target's category consistent with
    /// what the instruction already said.
    pub fn open(episode: &Episode, wk: &WorldKnowledge, seed: u64) -> Result<Self, DialogueError> {
        if episode.task != Task::SocialLoconav {
            return Err(DialogueError::Contract(format!("episode {} is not a social navigation episode", episode.episode_id)));
        }
        let mut s = Self::for_target(&episode.episode_id, &episode.target, wk, seed)?;
        let heard = wk.fold_filter(&s.candidate_history[0], &episode.instruction_trace)?;
        if !heard.contains(&episode.target) {
            return Err(DialogueError::Contract(format!("instruction of {} excludes its own target", episode.episode_id)));
        }
        s.candidate_history = vec![heard];
        Ok(s)
    }

    /// Session over all objects of the target's category.
    pub fn for_target(episode_id: &str, target: &str, wk: &WorldKnowledge, seed: u64) -> Result<Self, DialogueError> {
        let category = wk.graph().category(target).ok_or_else(|| WkmError::UnknownObject(target.to_string()))?;
        Ok(Self {
            episode_id: episode_id.to_string(),
            target: target.to_string(),
            memory: Vec::new(),
            remaining_rounds: MAX_ROUNDS,
            candidate_history: vec![wk.category_candidates(category)],
            disclosed: Vec::new(),
            rounds: Vec::new(),
            knowledge: KnowledgeSession::new(seed),
        })
    }

    pub fn candidates(&self) -> &BTreeSet<String> {
        self.candidate_history.last().unwrap()
    }

    /// Answers one question by disclosing the next distinguishing condition.
    pub fn handle_message(
        &mut self,
        wk: &WorldKnowledge,
        question: &str,
        step: u64,
        speaker: &dyn Speaker,
    ) -> Result<String, DialogueError> {
        if self.remaining_rounds == 0 {
            return Ok("Sorry, I can't answer more questions.".to_string());
        }
        let category = wk.graph().category(&self.target).unwrap_or_default().to_string();
        let current = self.candidates().clone();
        let before = current.len();
        let (reply, condition) = if current.len() <= 1 {
            let mut all = self.disclosed.clone();
            all.insert(0, InfoCondition::room(wk.graph().node(&self.target).map(|o| o.room.clone()).unwrap_or_default()));
            (format!("You have found it: {}.", speak(&category, &all)), None)
        } else {
            let diff = wk.find_diff(&self.target, &current)?;
            match wk.get_info(&mut self.knowledge, &self.target, &diff) {
                Ok(info) => {
                    let next = wk.filter(&current, &info)?;
                    self.candidate_history.push(next);
                    self.disclosed.push(info.clone());
                    (disclosure_reply(&category, &info), Some(info))
                }
                Err(WkmError::AppearanceExhausted(_)) => ("I have nothing more to add about it.".to_string(), None),
                Err(e) => return Err(e.into()),
            }
        };
        let reply = voiced(speaker, reply);
        self.remaining_rounds -= 1;
        self.memory.push(Message { speaker: Role::Agent, text: question.to_string(), step });
        self.memory.push(Message { speaker: Role::Npc, text: reply.clone(), step });
        self.rounds.push(RoundRecord {
            question: question.to_string(),
            reply: reply.clone(),
            condition,
            candidates_before: before,
            candidates_after: self.candidates().len(),
        });
        Ok(reply)
    }

    pub fn transcript(&self) -> Transcript {
        Transcript {
            episode_id: self.episode_id.clone(),
            messages: self.memory.clone(),
            rounds: self.rounds.clone(),
            candidate_counts: self.candidate_history.iter().map(BTreeSet::len).collect(),
        }
    }
}

fn disclosure_reply(category: &str, info: &InfoCondition) -> String {
    let described = speak(category, std::slice::from_ref(info));
    let clause = described.strip_prefix(&format!("the {category}")).unwrap_or(&described).trim();
    if clause.is_empty() {
        format!("It is {described}.")
    } else {
        format!("The {category} you are looking for is {clause}.")
    }
}

fn list(items: &[String]) -> String {
    match items.len() {
        0 => String::new(),
        1 => items[0].clone(),
        _ => format!("{} and {}", items[..items.len() - 1].join(", "), items[items.len() - 1]),
    }
}

fn relation_answer(wk: &WorldKnowledge, target: &str, rel: Relation) -> String {
    let mut edges: Vec<_> = wk.graph().edges(target).iter().filter(|e| e.relation == rel).collect();
    edges.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.target.cmp(&b.target)));
    let names: Vec<String> = edges
        .iter()
        .map(|e| format!("a {}", wk.graph().category(&e.target).unwrap_or("thing")))
        .collect();
    if names.is_empty() {
        format!("There is nothing it is {}.", rel.phrase())
    } else {
        format!("It is {} {}.", rel.phrase(), list(&names))
    }
}

fn full_description(wk: &WorldKnowledge, target: &str) -> String {
    let Some(obj) = wk.graph().node(target) else { return String::new() };
    let mut s = format!("It is a {} in the {}.", obj.category, room_label(&obj.room));
    for d in &obj.description {
        s.push(' ');
        s.push_str(d.trim());
    }
    s
}

/// Keyword-routed answer from the target's record.
pub fn answer_qa(question: &str, target: &str, wk: &WorldKnowledge) -> String {
    let q = format!(" {} ", crate::scene::tokenize(question).join(" "));
    let has = |w: &str| q.contains(&format!(" {w} "));
    let Some(obj) = wk.graph().node(target) else { return String::new() };
    let attrs = wk.attributes(target);
    if has("room") || has("where") {
        return format!("It is in the {}.", room_label(&obj.room));
    }
    for (words, rel) in [
        (&["near", "next", "beside", "around", "close", "nearby"][..], Relation::Near),
        (&["under", "underneath", "beneath"][..], Relation::Under),
        (&["below"][..], Relation::Below),
        (&["above", "over"][..], Relation::Above),
        (&["inside", "in"][..], Relation::In),
        (&["on", "top"][..], Relation::On),
    ] {
        if words.iter().any(|w| has(w)) {
            return relation_answer(wk, target, rel);
        }
    }
    if has("color") || has("colour") {
        if let Some(a) = attrs.filter(|a| !a.colors.is_empty()) {
            return format!("It is {}.", list(&a.colors.iter().cloned().collect::<Vec<_>>()));
        }
    }
    if has("shape") {
        if let Some(a) = attrs.filter(|a| !a.shapes.is_empty()) {
            return format!("It is {}.", list(&a.shapes.iter().cloned().collect::<Vec<_>>()));
        }
    }
    if has("look") || has("appearance") || has("describe") || has("material") || has("made") {
        return obj.description.iter().map(|s| s.trim()).collect::<Vec<_>>().join(" ");
    }
    if has("category") || has("kind") || has("type") {
        return format!("It is a {}.", obj.category);
    }
    full_description(wk, target)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaRecord {
    pub question: String,
    pub gold_answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaItem {
    pub question: String,
    pub gold_answer: String,
    pub npc_answer: String,
    /// `None` when the provider failed; such items are excluded from the mean.
    pub similarity: Option<f64>,
    pub score: Option<u32>,
}

impl QaItem {
    pub fn new(question: &str, gold: &str, npc: &str) -> Self {
        Self { question: question.into(), gold_answer: gold.into(), npc_answer: npc.into(), similarity: None, score: None }
    }
}

/// 100 when strictly above the threshold, else 0.
pub fn qa_score(similarity: f64) -> u32 {
    if similarity > QA_THRESHOLD {
        100
    } else {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaReport {
    pub items: Vec<QaItem>,
    pub scored: usize,
    pub unscored: usize,
    /// Mean score over scored items; `None` when nothing could be scored.
    pub mean: Option<f64>,
}

pub fn score_qa(items: &[QaItem], provider: &dyn SimilarityProvider) -> QaReport {
    let mut out = Vec::with_capacity(items.len());
    let (mut total, mut scored) = (0u64, 0usize);
    for item in items {
        let mut item = item.clone();
        match provider.similarity(&item.npc_answer, &item.gold_answer) {
            Ok(s) => {
                let score = qa_score(s);
                item.similarity = Some(s);
                item.score = Some(score);
                total += score as u64;
                scored += 1;
            }
            Err(e) => {
                tracing::warn!(question = %item.question, error = %e, "QA item left unscored");
                item.similarity = None;
                item.score = None;
            }
        }
        out.push(item);
    }
    let unscored = out.len() - scored;
    let mean = (scored > 0).then(|| total as f64 / scored as f64);
    QaReport { items: out, scored, unscored, mean }
}
