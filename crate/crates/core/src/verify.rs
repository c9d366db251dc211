//! Cross-verification rounds and NPC dialogue sessions behind the HTTP
//! service, persisted as an append-only event log so a restart replays to
//! the same state.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dialogue::{DialogueError, DialogueSession, Transcript};
use crate::geometry::Rect;
use crate::taskgen::{gen_instruction_objnav, Episode, OccupancySummary, Speaker, TemplateSpeaker};
use crate::wkm::KnowledgeSession;
use crate::world::World;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyMode {
    Referring,
    Grounding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationRound {
    pub round_id: String,
    pub mode: VerifyMode,
    pub scene_id: String,
    pub description: String,
    pub candidate_ids: Vec<String>,
    pub true_target: Option<String>,
    pub selection: Option<String>,
    /// `None` while pending (or when a grounding round had no expected answer).
    pub correct: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    RoundStarted { round: VerificationRound },
    Selected { round_id: String, instance_id: String },
    DialogueMessage { episode_id: String, text: String },
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("event log: {0}")]
    Io(#[from] std::io::Error),
    #[error("event log line {line}: {msg}")]
    Corrupt { line: usize, msg: String },
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: u64,
    pub total: u64,
}

impl Accuracy {
    pub fn value(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }

    fn add(&mut self, ok: bool) {
        self.total += 1;
        self.correct += ok as u64;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSummary {
    pub scene_id: String,
    pub objects: usize,
    pub regions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BevObject {
    pub instance_id: String,
    pub category: String,
    pub room: String,
    pub footprint: Rect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BevRegion {
    pub region_id: String,
    pub label: String,
    pub polygon: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BevPayload {
    pub scene_id: String,
    pub objects: Vec<BevObject>,
    pub regions: Vec<BevRegion>,
    pub occupancy: OccupancySummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferringStart {
    pub round_id: String,
    pub description: String,
    pub candidate_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub correct: bool,
    pub true_target: String,
    pub running_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grounded {
    pub round_id: String,
    pub selected_instance: Option<String>,
    pub correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueReply {
    pub reply: String,
    pub remaining_rounds: usize,
    pub candidates_remaining: usize,
}

pub struct SessionStore {
    worlds: BTreeMap<String, Arc<World>>,
    episodes: BTreeMap<String, Episode>,
    rounds: BTreeMap<String, VerificationRound>,
    dialogues: BTreeMap<String, DialogueSession>,
    referring: Accuracy,
    grounding: Accuracy,
    seed: u64,
    next_round: u64,
    log: Option<File>,
    speaker: Arc<dyn Speaker>,
}

const DESCRIBE_ATTEMPTS: usize = 32;

impl SessionStore {
    pub fn new(worlds: Vec<Arc<World>>, episodes: Vec<Episode>, seed: u64) -> Self {
        Self {
            worlds: worlds.into_iter().map(|w| (w.scene_id().to_string(), w)).collect(),
            episodes: episodes.into_iter().map(|e| (e.episode_id.clone(), e)).collect(),
            rounds: BTreeMap::new(),
            dialogues: BTreeMap::new(),
            referring: Accuracy::default(),
            grounding: Accuracy::default(),
            seed,
            next_round: 0,
            log: None,
            speaker: Arc::new(TemplateSpeaker),
        }
    }

    pub fn with_speaker(mut self, speaker: Arc<dyn Speaker>) -> Self {
        self.speaker = speaker;
        self
    }

    /// Replays `path` if it exists, then appends new events to it.
    pub fn with_log(mut self, path: &Path) -> Result<Self, StoreError> {
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let ev: Event =
                    serde_json::from_str(&line).map_err(|e| StoreError::Corrupt { line: n + 1, msg: e.to_string() })?;
                self.apply(ev).map_err(|e| StoreError::Corrupt { line: n + 1, msg: e.to_string() })?;
            }
        }
        self.log = Some(OpenOptions::new().create(true).append(true).open(path)?);
        Ok(self)
    }

    fn append(&mut self, ev: &Event) -> Result<(), StoreError> {
        if let Some(f) = &mut self.log {
            let line = serde_json::to_string(ev).expect("events serialize");
            writeln!(f, "{line}")?;
            f.flush()?;
        }
        Ok(())
    }

    /// Applies one event to the in-memory state without logging it.
    fn apply(&mut self, ev: Event) -> Result<(), StoreError> {
        match ev {
            Event::RoundStarted { round } => {
                if let Some(n) = round.round_id.strip_prefix('r').and_then(|s| s.parse::<u64>().ok()) {
                    self.next_round = self.next_round.max(n + 1);
                }
                if round.mode == VerifyMode::Grounding {
                    if let Some(ok) = round.correct {
                        self.grounding.add(ok);
                    }
                }
                self.rounds.insert(round.round_id.clone(), round);
            }
            Event::Selected { round_id, instance_id } => {
                self.select_inner(&round_id, &instance_id)?;
            }
            Event::DialogueMessage { episode_id, text } => {
                self.message_inner(&episode_id, &text)?;
            }
        }
        Ok(())
    }

    pub fn world(&self, scene_id: &str) -> Result<&Arc<World>, StoreError> {
        self.worlds.get(scene_id).ok_or_else(|| StoreError::NotFound(format!("scene {scene_id}")))
    }

    pub fn scenes(&self) -> Vec<SceneSummary> {
        self.worlds
            .values()
            .map(|w| SceneSummary { scene_id: w.scene_id().to_string(), objects: w.scene.objects.len(), regions: w.scene.regions.len() })
            .collect()
    }

    pub fn bev(&self, scene_id: &str) -> Result<BevPayload, StoreError> {
        let w = self.world(scene_id)?;
        Ok(BevPayload {
            scene_id: scene_id.to_string(),
            objects: w
                .scene
                .objects
                .values()
                .map(|o| BevObject {
                    instance_id: o.instance_id.clone(),
                    category: o.category.clone(),
                    room: o.room.clone(),
                    footprint: o.aabb().footprint(),
                })
                .collect(),
            regions: w
                .scene
                .regions
                .iter()
                .map(|r| BevRegion { region_id: r.region_id.clone(), label: r.label.clone(), polygon: r.polygon.clone() })
                .collect(),
            occupancy: w.map.summary(),
        })
    }

    fn round_id(&mut self) -> String {
        let id = format!("r{:06}", self.next_round);
        self.next_round += 1;
        id
    }

    /// The NPC picks an object at random and describes it uniquely among
    /// its category.
    pub fn start_referring(&mut self, scene_id: &str) -> Result<ReferringStart, StoreError> {
        let world = self.world(scene_id)?.clone();
        let round_id = self.round_id();
        let stream = self.seed ^ self.next_round.wrapping_mul(0x9e3779b97f4a7c15);
        let mut rng = ChaCha8Rng::seed_from_u64(stream);
        let wk = &world.knowledge;
        let ids: Vec<&String> = world.scene.objects.keys().collect();
        if ids.is_empty() {
            return Err(StoreError::BadRequest(format!("scene {scene_id} has no objects")));
        }
        for _ in 0..DESCRIBE_ATTEMPTS {
            let target = ids[rng.gen_range(0..ids.len())];
            let category = &world.scene.objects[target].category;
            let mut session = KnowledgeSession::new(rng.gen());
            let Ok(nav) = gen_instruction_objnav(wk, &mut session, &wk.category_candidates(category), target) else {
                continue;
            };
            let round = VerificationRound {
                round_id: round_id.clone(),
                mode: VerifyMode::Referring,
                scene_id: scene_id.to_string(),
                description: nav.description.clone(),
                candidate_ids: ids.iter().map(|s| s.to_string()).collect(),
                true_target: Some(target.clone()),
                selection: None,
                correct: None,
            };
            let ev = Event::RoundStarted { round: round.clone() };
            self.append(&ev)?;
            self.rounds.insert(round_id.clone(), round);
            return Ok(ReferringStart { round_id, description: nav.description, candidate_ids: ids.iter().map(|s| s.to_string()).collect() });
        }
        Err(StoreError::BadRequest(format!("no describable object in scene {scene_id}")))
    }

    fn select_inner(&mut self, round_id: &str, instance_id: &str) -> Result<Selection, StoreError> {
        let round = self.rounds.get_mut(round_id).ok_or_else(|| StoreError::NotFound(format!("round {round_id}")))?;
        if round.mode != VerifyMode::Referring || round.selection.is_some() {
            return Err(StoreError::Conflict(format!("round {round_id} is closed")));
        }
        if !round.candidate_ids.iter().any(|c| c == instance_id) {
            return Err(StoreError::BadRequest(format!("{instance_id} is not a candidate of round {round_id}")));
        }
        let truth = round.true_target.clone().expect("referring rounds carry a target");
        let correct = truth == instance_id;
        round.selection = Some(instance_id.to_string());
        round.correct = Some(correct);
        self.referring.add(correct);
        Ok(Selection { correct, true_target: truth, running_accuracy: self.referring.value().unwrap_or(0.0) })
    }

    pub fn select(&mut self, round_id: &str, instance_id: &str) -> Result<Selection, StoreError> {
        let out = self.select_inner(round_id, instance_id)?;
        self.append(&Event::Selected { round_id: round_id.to_string(), instance_id: instance_id.to_string() })?;
        Ok(out)
    }

    /// The NPC grounds a client description; `expected` (the object the
    /// client had in mind) makes the round scoreable.
    pub fn ground(&mut self, scene_id: &str, description: &str, expected: Option<&str>) -> Result<Grounded, StoreError> {
        let world = self.world(scene_id)?.clone();
        if let Some(e) = expected {
            if world.scene.object(e).is_none() {
                return Err(StoreError::NotFound(format!("object {e} in scene {scene_id}")));
            }
        }
        let (selected, reason) = match world.knowledge.ground_utterance(description) {
            Ok(id) => (Some(id), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let correct = expected.map(|e| selected.as_deref() == Some(e));
        let round_id = self.round_id();
        let round = VerificationRound {
            round_id: round_id.clone(),
            mode: VerifyMode::Grounding,
            scene_id: scene_id.to_string(),
            description: description.to_string(),
            candidate_ids: world.scene.objects.keys().cloned().collect(),
            true_target: expected.map(str::to_string),
            selection: selected.clone(),
            correct,
        };
        self.append(&Event::RoundStarted { round: round.clone() })?;
        if let Some(ok) = correct {
            self.grounding.add(ok);
        }
        self.rounds.insert(round_id.clone(), round);
        Ok(Grounded { round_id, selected_instance: selected, correct, reason })
    }

    /// Round as a client may see it: the target stays hidden until selection.
    pub fn round_view(&self, round_id: &str) -> Result<VerificationRound, StoreError> {
        let mut r = self.rounds.get(round_id).cloned().ok_or_else(|| StoreError::NotFound(format!("round {round_id}")))?;
        if r.mode == VerifyMode::Referring && r.selection.is_none() {
            r.true_target = None;
        }
        Ok(r)
    }

    pub fn referring_accuracy(&self) -> Accuracy {
        self.referring
    }

    pub fn grounding_accuracy(&self) -> Accuracy {
        self.grounding
    }

    fn message_inner(&mut self, episode_id: &str, text: &str) -> Result<DialogueReply, StoreError> {
        let ep = self.episodes.get(episode_id).ok_or_else(|| StoreError::NotFound(format!("episode {episode_id}")))?;
        let world = self.worlds.get(&ep.scene_id).ok_or_else(|| StoreError::NotFound(format!("scene {}", ep.scene_id)))?.clone();
        if !self.dialogues.contains_key(episode_id) {
            let s = DialogueSession::open(ep, &world.knowledge, ep.seed).map_err(|e| match e {
                DialogueError::Contract(m) => StoreError::BadRequest(m),
                other => other.into(),
            })?;
            self.dialogues.insert(episode_id.to_string(), s);
        }
        let s = self.dialogues.get_mut(episode_id).expect("opened above");
        if s.remaining_rounds == 0 {
            return Err(StoreError::Conflict(format!("dialogue {episode_id} has no rounds left")));
        }
        let step = s.memory.len() as u64;
        let reply = s.handle_message(&world.knowledge, text, step, self.speaker.as_ref())?;
        Ok(DialogueReply { reply, remaining_rounds: s.remaining_rounds, candidates_remaining: s.candidates().len() })
    }

    pub fn message(&mut self, episode_id: &str, text: &str) -> Result<DialogueReply, StoreError> {
        let out = self.message_inner(episode_id, text)?;
        self.append(&Event::DialogueMessage { episode_id: episode_id.to_string(), text: text.to_string() })?;
        Ok(out)
    }

    pub fn transcript(&self, episode_id: &str) -> Result<Transcript, StoreError> {
        if !self.episodes.contains_key(episode_id) {
            return Err(StoreError::NotFound(format!("episode {episode_id}")));
        }
        Ok(match self.dialogues.get(episode_id) {
            Some(s) => s.transcript(),
            None => Transcript { episode_id: episode_id.to_string(), messages: vec![], rounds: vec![], candidate_counts: vec![] },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::fixtures;

    fn store() -> SessionStore {
        let cfg = Config::default();
        let w = Arc::new(World::build(fixtures::scene("five_objects"), &cfg).unwrap());
        SessionStore::new(vec![w], vec![], 11)
    }

    #[test]
    fn referring_round_and_conflict() {
        let mut s = store();
        let start = s.start_referring("five_objects").unwrap();
        assert!(s.round_view(&start.round_id).unwrap().true_target.is_none());
        let truth = s.rounds[&start.round_id].true_target.clone().unwrap();
        let sel = s.select(&start.round_id, &truth).unwrap();
        assert!(sel.correct);
        assert_eq!(sel.running_accuracy, 1.0);
        assert!(matches!(s.select(&start.round_id, &truth), Err(StoreError::Conflict(_))));
        assert!(matches!(s.select("r999999", &truth), Err(StoreError::NotFound(_))));
    }

    #[test]
    fn grounding_round() {
        let mut s = store();
        let g = s.ground("five_objects", "the chair near the table", Some("chair/1")).unwrap();
        assert_eq!(g.selected_instance.as_deref(), Some("chair/1"));
        assert_eq!(g.correct, Some(true));
        assert!(matches!(s.ground("nowhere", "x", None), Err(StoreError::NotFound(_))));
    }

    #[test]
    fn log_replays_to_same_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let mut s = store().with_log(&path).unwrap();
        let a = s.start_referring("five_objects").unwrap();
        s.select(&a.round_id, &a.candidate_ids[0]).unwrap();
        let b = s.start_referring("five_objects").unwrap();
        let acc = s.referring_accuracy();
        drop(s);
        let s2 = store().with_log(&path).unwrap();
        assert_eq!(s2.referring_accuracy(), acc);
        assert_eq!(s2.round_view(&b.round_id).unwrap().selection, None);
        assert!(s2.round_view(&a.round_id).unwrap().selection.is_some());
    }
}
