//! Decision module: picks the next navigation goal among observed
//! candidates, or asks the NPC a question.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::external::{LlmClient, TransportError};
use crate::taskgen::speak;
use crate::wkm::{InfoCondition, WkmError};
use crate::world::World;

pub const DEFAULT_QUESTION: &str = "Could you please tell me more information about the goal object?";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateView {
    pub index: usize,
    pub description: String,
    /// Oracle grounding id; never sent over the wire.
    #[serde(skip)]
    pub instance_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub goal: String,
    pub candidates: Vec<CandidateView>,
    pub goal_info: Vec<InfoCondition>,
    pub history: String,
    /// Whether an ask directive is still allowed this episode.
    pub can_ask: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionResponse {
    /// Candidate index, `"ask"` or `"stop"`.
    pub choice: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Choose(usize),
    Ask(String),
    Stop,
    /// Nothing worth approaching yet.
    Explore,
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("backend answered `{0}`, which is not a valid decision")]
    Malformed(String),
    #[error(transparent)]
    Knowledge(#[from] WkmError),
}

impl DecisionResponse {
    pub fn into_decision(self, n_candidates: usize) -> Result<Decision, BackendError> {
        match &self.choice {
            serde_json::Value::Number(k) => match k.as_u64() {
                Some(k) if (k as usize) < n_candidates => Ok(Decision::Choose(k as usize)),
                _ => Err(BackendError::Malformed(self.choice.to_string())),
            },
            serde_json::Value::String(s) if s == "ask" => {
                Ok(Decision::Ask(self.question.unwrap_or_else(|| DEFAULT_QUESTION.to_string())))
            }
            serde_json::Value::String(s) if s == "stop" => Ok(Decision::Stop),
            other => Err(BackendError::Malformed(other.to_string())),
        }
    }
}

pub trait DecisionBackend: Send {
    fn name(&self) -> &str;
    fn decide(&mut self, req: &DecisionRequest) -> Result<Decision, BackendError>;
    fn speak(&mut self, req: &DecisionRequest) -> Result<String, BackendError>;
}

fn describe_candidates(req: &DecisionRequest) -> String {
    req.candidates.iter().map(|c| format!("{}: {}", c.index, c.description)).collect::<Vec<_>>().join("\n")
}

fn describe_goal_info(req: &DecisionRequest) -> String {
    if req.goal_info.is_empty() {
        "None".to_string()
    } else {
        speak(&req.goal, &req.goal_info)
    }
}

pub fn reasoning_prompt(goal: &str, description: &str, goal_info: &str) -> String {
    format!(
        "USER:\n\
Here are the descriptions of the current candidates for the goal object {goal}:\n\
\n\
{description}\n\
\n\
Here are the known information about the goal object {goal}:\n\
\n\
{goal_info}\n\
\n\
1. Each line of candidate description corresponds to a candidate. \n\
2. The number in the description is the candidate's index, and the text after ':' is the candidate's description.\n\
3. Now, based on the provided information about the goal object, please select the candidate most likely to be the goal object.\n\
4. You only need to output the candidate's index. Please do not output anything other than the candidate's index.\n\
ASSISTANT:"
    )
}

pub fn speaking_prompt(goal: &str, description: &str, goal_info: &str) -> String {
    format!(
        "USER:\n\
Here are the descriptions of the current candidates for the goal object {goal}:\n\
\n\
{description}\n\
\n\
Here are the known information about the goal object {goal}:\n\
\n\
{goal_info}\n\
\n\
1. Now you can ask a question about the goal object.\n\
2. Based on the information described above,  what question do you think will help to minimize the scope of the possible candidates?\n\
3. Just output the question, don't include the reason or explanation.\n\
ASSISTANT:"
    )
}

/// Rule-table backend over the oracle scene knowledge.
///
/// - while asking is allowed, ask (gathers every condition the NPC has);
/// - otherwise keep same-category candidates passing every known condition;
/// - none left: explore; else choose the first (candidates arrive nearest first).
pub struct ScriptedBackend {
    world: Arc<World>,
}

impl ScriptedBackend {
    pub fn new(world: Arc<World>) -> Self {
        Self { world }
    }

    pub fn matching(&self, req: &DecisionRequest) -> Result<Vec<usize>, BackendError> {
        let wk = &self.world.knowledge;
        let ids: BTreeSet<String> = req
            .candidates
            .iter()
            .filter(|c| wk.graph().category(&c.instance_id) == Some(req.goal.as_str()))
            .map(|c| c.instance_id.clone())
            .collect();
        let kept = wk.fold_filter(&ids, &req.goal_info)?;
        Ok(req.candidates.iter().filter(|c| kept.contains(&c.instance_id)).map(|c| c.index).collect())
    }
}

impl DecisionBackend for ScriptedBackend {
    fn name(&self) -> &str {
        "scripted"
    }

    fn decide(&mut self, req: &DecisionRequest) -> Result<Decision, BackendError> {
        if req.can_ask {
            return Ok(Decision::Ask(self.speak(req)?));
        }
        Ok(match self.matching(req)?.first() {
            Some(&k) => Decision::Choose(k),
            None => Decision::Explore,
        })
    }

    fn speak(&mut self, _req: &DecisionRequest) -> Result<String, BackendError> {
        Ok(DEFAULT_QUESTION.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlmMode {
    /// Free-text completion of the reasoning / speaking prompts.
    Prompted,
    /// Structured request / response exchange.
    Wire,
}

/// External LLM decision backend.
pub struct LlmBackend {
    client: LlmClient,
    mode: LlmMode,
}

impl LlmBackend {
    pub fn new(client: LlmClient, mode: LlmMode) -> Self {
        Self { client, mode }
    }
}

/// First unsigned integer in `text`.
fn leading_index(text: &str) -> Option<usize> {
    let digits: String = text.chars().skip_while(|c| !c.is_ascii_digit()).take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

impl DecisionBackend for LlmBackend {
    fn name(&self) -> &str {
        "llm"
    }

    fn decide(&mut self, req: &DecisionRequest) -> Result<Decision, BackendError> {
        match self.mode {
            LlmMode::Wire => {
                let resp: DecisionResponse = self.client.exchange(req)?;
                let d = resp.into_decision(req.candidates.len())?;
                if matches!(d, Decision::Ask(_)) && !req.can_ask {
                    return Err(BackendError::Malformed("ask after the question cap".into()));
                }
                Ok(d)
            }
            LlmMode::Prompted => {
                if req.candidates.is_empty() {
                    return Ok(Decision::Explore);
                }
                if req.can_ask && req.candidates.len() > 1 {
                    return Ok(Decision::Ask(self.speak(req)?));
                }
                let text = self.client.complete(&reasoning_prompt(
                    &req.goal,
                    &describe_candidates(req),
                    &describe_goal_info(req),
                ))?;
                match leading_index(&text) {
                    Some(k) if k < req.candidates.len() => Ok(Decision::Choose(k)),
                    _ => Err(BackendError::Malformed(text)),
                }
            }
        }
    }

    fn speak(&mut self, req: &DecisionRequest) -> Result<String, BackendError> {
        let text =
            self.client.complete(&speaking_prompt(&req.goal, &describe_candidates(req), &describe_goal_info(req)))?;
        let q = text.trim();
        Ok(if q.is_empty() { DEFAULT_QUESTION.to_string() } else { q.to_string() })
    }
}
