//! Baseline policies: uniform random, a model-based oracle, and a modular
//! grounding / memory / decision / action agent with pluggable decision
//! backends.

mod backend;
mod memory;
mod modular;
mod oracle;
mod random;
mod rrt;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use backend::{
    reasoning_prompt, speaking_prompt, BackendError, Decision, DecisionBackend, DecisionRequest, DecisionResponse,
    LlmBackend, LlmMode, ScriptedBackend, CandidateView, DEFAULT_QUESTION,
};
pub use memory::{BevMemory, Candidate};
pub use modular::ModularAgent;
pub use oracle::{OracleAgent, OracleConfig};
pub use random::RandomAgent;
pub use rrt::{plan_path, segment_free, FreeSpace, RrtConfig};

use crate::metrics::EpisodeResult;
use crate::sim::{Action, Observation, SimError, Simulator, Status, StepOutcome};
use crate::taskgen::Episode;
use crate::wkm::InfoCondition;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub seed: u64,
    pub rrt: RrtConfig,
    pub oracle: OracleConfig,
    /// Questions the modular agent may ask per episode.
    pub max_asks: usize,
    /// Tracker landing points must stay this close to the planned path.
    pub track_tolerance: f64,
    /// In-place turns spent looking around before exploring.
    pub scan_turns: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            rrt: RrtConfig::default(),
            oracle: OracleConfig::default(),
            max_asks: 3,
            track_tolerance: 1.0,
            scan_turns: 3,
        }
    }
}

/// What an agent sees each tick.
#[derive(Debug, Clone, Copy)]
pub struct Turn<'a> {
    pub obs: &'a Observation,
    pub last: Option<&'a StepOutcome>,
    /// The condition behind the NPC's last reply, if it disclosed one.
    pub disclosed: Option<&'a InfoCondition>,
}

pub trait Agent {
    fn name(&self) -> &str;
    fn reset(&mut self, episode: &Episode, obs: &Observation);
    fn act(&mut self, turn: Turn<'_>) -> Action;
}

/// Safety cap on decisions; every action but stop costs steps, so the
/// budget ends episodes long before this.
const MAX_DECISIONS: usize = 100_000;

/// Runs one episode to termination and returns its metrics record.
pub fn run_episode(sim: &mut Simulator, agent: &mut dyn Agent, episode: &Episode) -> Result<EpisodeResult, SimError> {
    let obs = sim.reset(episode)?;
    agent.reset(episode, &obs);
    let mut obs = obs;
    let mut last: Option<StepOutcome> = None;
    let mut seen_rounds = 0;
    for _ in 0..MAX_DECISIONS {
        if sim.status() != Status::Running {
            break;
        }
        let disclosed = sim.dialogue().and_then(|d| {
            (d.rounds.len() > seen_rounds).then(|| d.rounds.last().and_then(|r| r.condition.clone())).flatten()
        });
        if let Some(d) = sim.dialogue() {
            seen_rounds = d.rounds.len();
        }
        let action = agent.act(Turn { obs: &obs, last: last.as_ref(), disclosed: disclosed.as_ref() });
        let (o, out) = sim.step(&action)?;
        obs = o;
        last = Some(out);
    }
    Ok(sim.result(agent.name()).expect("episode was reset"))
}

/// Object categories present in the instruction, earliest mention first.
pub fn goal_category(instruction: &str, categories: &BTreeSet<String>) -> Option<String> {
    let toks = crate::scene::tokenize(instruction);
    // Skip "pick up" / "find" and take the first known category noun.
    toks.iter().find(|t| categories.contains(*t)).cloned()
}

/// Legal actions of `task` without payloads (ask carries the default question).
pub fn base_actions(task: crate::taskgen::Task) -> Vec<Action> {
    let mut v = Action::navigation_set();
    if task == crate::taskgen::Task::SocialLoconav {
        v.push(Action::Ask { question: DEFAULT_QUESTION.to_string() });
    }
    v
}

/// Mixes an agent seed with an episode id.
pub(crate) fn episode_seed(seed: u64, episode_id: &str) -> u64 {
    episode_id.bytes().fold(seed ^ 0xcbf29ce484222325, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}
