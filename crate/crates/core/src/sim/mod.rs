//! Deterministic 2D episode simulator with the discrete action spaces,
//! physical-step budget, collision resets and success checks.

mod motion;
mod sensor;
mod visibility;

use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use motion::{disc_clear, disc_margin, sweep, Pose, Sweep};
pub use sensor::{detect, local_patch, CoarseGrid, Detection, LocalPatch};
pub use visibility::{bearing_range, fov_visible, line_of_sight, occluders, sight_point, FovConfig, Occluder};

use crate::dialogue::{DialogueError, DialogueSession, Transcript};
use crate::geometry::{Aabb, Point2};
use crate::metrics::{check_conditions, EpisodeResult, PlacementRules};
use crate::taskgen::{Episode, PlaceRelation, Speaker, Task, TemplateSpeaker};
use crate::world::World;

pub const MOVE_MAGNITUDES: [f64; 3] = [2.0, 4.0, 6.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub robot_radius: f64,
    /// Meters per second used to convert moves into physical steps.
    pub nominal_speed: f64,
    /// Seconds per 90 degree turn.
    pub turn_time: f64,
    pub ask_time: f64,
    /// Seconds per pick or place.
    pub manip_time: f64,
    pub physics_hz: f64,
    /// Physical-step life horizon.
    pub budget: u64,
    pub fov: FovConfig,
    /// Stop succeeds when the visible target is closer than this.
    pub success_range: f64,
    /// Reach from the robot's body surface to an object's footprint.
    pub reach: f64,
    /// Radius of the occupancy patch handed to agents.
    pub sensor_range: f64,
    /// Cell size of the coarse occupancy used for patches.
    pub patch_cell: f64,
    pub placement: PlacementRules,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            robot_radius: 0.34,
            nominal_speed: 0.5,
            turn_time: 2.0,
            ask_time: 1.0,
            manip_time: 2.0,
            physics_hz: 240.0,
            budget: 14_400,
            fov: FovConfig::default(),
            success_range: 3.0,
            reach: 0.8,
            sensor_range: 4.0,
            patch_cell: 0.1,
            placement: PlacementRules::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    MoveForward { magnitude: f64 },
    /// Rotate 45 degrees left, then move.
    AdvanceLeft { magnitude: f64 },
    AdvanceRight { magnitude: f64 },
    #[serde(rename = "turn_left_90")]
    TurnLeft90,
    #[serde(rename = "turn_right_90")]
    TurnRight90,
    Stop,
    Ask { question: String },
    Pick { object: String },
    Place { relation: PlaceRelation, receptacle: String },
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::MoveForward { .. } => "move_forward",
            Action::AdvanceLeft { .. } => "advance_left",
            Action::AdvanceRight { .. } => "advance_right",
            Action::TurnLeft90 => "turn_left_90",
            Action::TurnRight90 => "turn_right_90",
            Action::Stop => "stop",
            Action::Ask { .. } => "ask",
            Action::Pick { .. } => "pick",
            Action::Place { .. } => "place",
        }
    }

    /// Heading change (applied before moving) and distance of a movement.
    pub fn motion(&self) -> Option<(f64, f64)> {
        use std::f64::consts::FRAC_PI_4;
        match *self {
            Action::MoveForward { magnitude } => Some((0.0, magnitude)),
            Action::AdvanceLeft { magnitude } => Some((FRAC_PI_4, magnitude)),
            Action::AdvanceRight { magnitude } => Some((-FRAC_PI_4, magnitude)),
            _ => None,
        }
    }

    pub fn turn(&self) -> Option<f64> {
        match self {
            Action::TurnLeft90 => Some(std::f64::consts::FRAC_PI_2),
            Action::TurnRight90 => Some(-std::f64::consts::FRAC_PI_2),
            _ => None,
        }
    }

    /// The 12 navigation actions: three movement kinds at three magnitudes,
    /// two turns and stop.
    pub fn navigation_set() -> Vec<Action> {
        let mut v = Vec::new();
        for m in MOVE_MAGNITUDES {
            v.push(Action::MoveForward { magnitude: m });
            v.push(Action::AdvanceLeft { magnitude: m });
            v.push(Action::AdvanceRight { magnitude: m });
        }
        v.extend([Action::TurnLeft90, Action::TurnRight90, Action::Stop]);
        v
    }

    /// Whether this action kind is available in `task`.
    pub fn allowed_in(&self, task: Task) -> bool {
        match self {
            Action::Ask { .. } => task == Task::SocialLoconav,
            Action::Pick { .. } | Action::Place { .. } => task == Task::LocoManip,
            _ => true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("episode invalid: {0}")]
    EpisodeInvalid(String),
    #[error("episode already terminated")]
    Terminated,
    #[error("no episode loaded")]
    NotReset,
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
    #[error("trajectory log: {0}")]
    Log(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub pose: Pose,
    pub physical_steps_used: u64,
    pub reset_count: u32,
    pub held_object: Option<String>,
    pub path_length_accum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Stopped,
    Placed,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub pose: Pose,
    pub physical_steps_used: u64,
    pub steps_remaining: u64,
    pub reset_count: u32,
    pub held_object: Option<String>,
    pub visible_objects: Vec<Detection>,
    pub patch: LocalPatch,
    pub last_npc_reply: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub charged: u64,
    pub collided: bool,
    pub terminated: bool,
    pub budget_exhausted: bool,
    /// Set once the episode is over.
    pub success: Option<bool>,
    /// Why a pick/place/ask had no effect.
    pub failed: Option<String>,
    pub npc_reply: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub index: usize,
    pub action: Action,
    pub before: Pose,
    pub after: Pose,
    pub charged: u64,
    pub steps_used: u64,
    pub reset_count: u32,
    pub collided: bool,
    pub failed: Option<String>,
    pub npc_reply: Option<String>,
    pub terminated: bool,
}

/// Per-action trajectory log; replaying its actions reproduces it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub episode_id: String,
    pub records: Vec<LogRecord>,
}

impl TrajectoryLog {
    pub fn actions(&self) -> Vec<Action> {
        self.records.iter().map(|r| r.action.clone()).collect()
    }

    /// Header line with the episode id, then one record per line.
    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{}", serde_json::json!({ "episode_id": self.episode_id }))?;
        for r in &self.records {
            writeln!(w, "{}", serde_json::to_string(r).expect("log record serializes"))?;
        }
        Ok(())
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Self, SimError> {
        let mut lines = r.lines();
        let head = lines.next().ok_or_else(|| SimError::Log("empty log".into()))?.map_err(|e| SimError::Log(e.to_string()))?;
        let head: serde_json::Value = serde_json::from_str(&head).map_err(|e| SimError::Log(e.to_string()))?;
        let episode_id = head["episode_id"].as_str().ok_or_else(|| SimError::Log("missing episode_id".into()))?.to_string();
        let mut records = Vec::new();
        for line in lines {
            let line = line.map_err(|e| SimError::Log(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|e| SimError::Log(e.to_string()))?);
        }
        Ok(Self { episode_id, records })
    }
}

/// Physical steps charged for `action`.
pub fn charge(action: &Action, cfg: &SimConfig) -> u64 {
    let secs = match action {
        Action::MoveForward { magnitude } | Action::AdvanceLeft { magnitude } | Action::AdvanceRight { magnitude } => {
            magnitude / cfg.nominal_speed
        }
        Action::TurnLeft90 | Action::TurnRight90 => cfg.turn_time,
        Action::Stop => 0.0,
        Action::Ask { .. } => cfg.ask_time,
        Action::Pick { .. } | Action::Place { .. } => cfg.manip_time,
    };
    (cfg.physics_hz * secs).ceil() as u64
}

/// Applies a movement or turn to `pose` on `world`. Returns the new pose,
/// the distance travelled and whether the disc hit an obstacle.
pub fn apply_motion(world: &World, pose: Pose, action: &Action, radius: f64) -> (Pose, f64, bool) {
    if let Some(d) = action.turn() {
        return (pose.turned(d), 0.0, false);
    }
    let Some((dh, dist)) = action.motion() else { return (pose, 0.0, false) };
    let p = pose.turned(dh);
    let s = sweep(world, p.position, Point2::from_heading(p.heading), dist, radius);
    (Pose { position: s.end, heading: p.heading }, s.travel, s.collided)
}

/// Distance from the robot's body surface to the object's footprint.
pub fn reach_distance(world: &World, position: Point2, id: &str, radius: f64) -> Option<f64> {
    let o = world.scene.object(id)?;
    Some((o.aabb().footprint().distance_to_point(position) - radius).max(0.0))
}

/// Where a held object ends up for a place action.
pub fn placed_box(world: &World, pose: Pose, held: &str, relation: PlaceRelation, receptacle: &str, radius: f64) -> Option<Aabb> {
    let src = world.scene.object(held)?.aabb();
    let s = src.center();
    match relation {
        PlaceRelation::On => {
            let r = world.scene.object(receptacle)?.aabb();
            let c = r.center();
            Some(src.translated([c[0] - s[0], c[1] - s[1], r.max[2] + 0.001 - src.min[2]]))
        }
        PlaceRelation::Nearby => {
            let half_diag = 0.5 * (src.extent(0).hypot(src.extent(1)));
            let at = pose.position.add(Point2::from_heading(pose.heading).scale(radius + 0.05 + half_diag));
            Some(src.translated([at.x - s[0], at.y - s[1], -src.min[2]]))
        }
    }
}

pub struct Simulator {
    world: Arc<World>,
    cfg: SimConfig,
    speaker: Arc<dyn Speaker>,
    episode: Option<Episode>,
    state: RobotState,
    status: Status,
    success: Option<bool>,
    dialogue: Option<DialogueSession>,
    placed: Option<Aabb>,
    condition_flags: Vec<bool>,
    last_reply: Option<String>,
    log: Vec<LogRecord>,
}

impl Simulator {
    pub fn new(world: Arc<World>, cfg: SimConfig) -> Self {
        Self {
            world,
            cfg,
            speaker: Arc::new(TemplateSpeaker),
            episode: None,
            state: RobotState {
                pose: Pose::new(0.0, 0.0, 0.0),
                physical_steps_used: 0,
                reset_count: 0,
                held_object: None,
                path_length_accum: 0.0,
            },
            status: Status::Running,
            success: None,
            dialogue: None,
            placed: None,
            condition_flags: Vec::new(),
            last_reply: None,
            log: Vec::new(),
        }
    }

    pub fn with_speaker(mut self, speaker: Arc<dyn Speaker>) -> Self {
        self.speaker = speaker;
        self
    }

    pub fn world(&self) -> &Arc<World> {
        &self.world
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn episode(&self) -> Option<&Episode> {
        self.episode.as_ref()
    }

    pub fn dialogue(&self) -> Option<&DialogueSession> {
        self.dialogue.as_ref()
    }

    pub fn placed(&self) -> Option<&Aabb> {
        self.placed.as_ref()
    }

    pub fn log(&self) -> TrajectoryLog {
        TrajectoryLog {
            episode_id: self.episode.as_ref().map(|e| e.episode_id.clone()).unwrap_or_default(),
            records: self.log.clone(),
        }
    }

    pub fn reset(&mut self, episode: &Episode) -> Result<Observation, SimError> {
        if episode.scene_id != self.world.scene_id() {
            return Err(SimError::EpisodeInvalid(format!(
                "episode {} is for scene {}, simulator holds {}",
                episode.episode_id,
                episode.scene_id,
                self.world.scene_id()
            )));
        }
        let p = episode.start_pose.position;
        if !disc_clear(&self.world.map, p, self.cfg.robot_radius) {
            return Err(SimError::EpisodeInvalid(format!("start pose of {} is not collision-free", episode.episode_id)));
        }
        if self.world.scene.object(&episode.target).is_none() {
            return Err(SimError::EpisodeInvalid(format!("unknown target {}", episode.target)));
        }
        self.dialogue = match episode.task {
            Task::SocialLoconav => Some(DialogueSession::open(episode, &self.world.knowledge, episode.seed)?),
            _ => None,
        };
        self.state = RobotState {
            pose: episode.start_pose,
            physical_steps_used: 0,
            reset_count: 0,
            held_object: None,
            path_length_accum: 0.0,
        };
        self.status = Status::Running;
        self.success = None;
        self.placed = None;
        self.condition_flags = vec![false; episode.conditions.len()];
        self.last_reply = None;
        self.log.clear();
        self.episode = Some(episode.clone());
        Ok(self.observe())
    }

    pub fn observe(&self) -> Observation {
        let pose = self.state.pose;
        let held = self.state.held_object.as_deref();
        Observation {
            pose,
            physical_steps_used: self.state.physical_steps_used,
            steps_remaining: self.cfg.budget - self.state.physical_steps_used,
            reset_count: self.state.reset_count,
            held_object: self.state.held_object.clone(),
            visible_objects: detect(&self.world, pose.position, pose.heading, held, &self.cfg.fov),
            patch: local_patch(&self.world.coarse, pose.position, self.cfg.sensor_range),
            last_npc_reply: self.last_reply.clone(),
        }
    }

    /// Navigation success: the target is in view and closer than the
    /// success range.
    pub fn target_found(&self) -> bool {
        let Some(ep) = &self.episode else { return false };
        let pose = self.state.pose;
        let held = self.state.held_object.as_deref();
        fov_visible(&self.world, pose.position, pose.heading, &ep.target, held, &self.cfg.fov)
            && bearing_range(&self.world, pose.position, pose.heading, &ep.target).is_some_and(|(_, r)| r < self.cfg.success_range)
    }

    fn finish(&mut self, status: Status, success: bool) {
        self.status = status;
        self.success = Some(success);
    }

    pub fn step(&mut self, action: &Action) -> Result<(Observation, StepOutcome), SimError> {
        let ep = self.episode.clone().ok_or(SimError::NotReset)?;
        if self.status != Status::Running {
            return Err(SimError::Terminated);
        }
        if !action.allowed_in(ep.task) {
            return Err(SimError::InvalidAction(format!("{} is not available in {:?}", action.name(), ep.task)));
        }
        if let Some((_, m)) = action.motion() {
            if !MOVE_MAGNITUDES.contains(&m) {
                return Err(SimError::InvalidAction(format!("movement magnitude must be 2, 4 or 6 m, got {m}")));
            }
        }
        let before = self.state.pose;
        let cost = charge(action, &self.cfg);
        let mut out = StepOutcome {
            charged: 0,
            collided: false,
            terminated: false,
            budget_exhausted: false,
            success: None,
            failed: None,
            npc_reply: None,
        };
        if self.state.physical_steps_used + cost > self.cfg.budget {
            tracing::debug!(episode = %ep.episode_id, action = action.name(), "budget exhausted");
            self.finish(Status::BudgetExhausted, false);
            out.terminated = true;
            out.budget_exhausted = true;
            out.success = Some(false);
            self.record(action, before, &out);
            return Ok((self.observe(), out));
        }
        self.state.physical_steps_used += cost;
        out.charged = cost;
        self.last_reply = None;
        let r = self.cfg.robot_radius;
        match action {
            Action::MoveForward { .. } | Action::AdvanceLeft { .. } | Action::AdvanceRight { .. } | Action::TurnLeft90 | Action::TurnRight90 => {
                let (pose, travel, collided) = apply_motion(&self.world, before, action, r);
                self.state.pose = pose;
                self.state.path_length_accum += travel;
                if collided {
                    self.state.reset_count += 1;
                    out.collided = true;
                }
            }
            Action::Stop => {
                let success = match ep.task {
                    Task::LocoManip => false,
                    _ => self.target_found(),
                };
                self.finish(Status::Stopped, success);
            }
            Action::Ask { question } => {
                let dialogue = self.dialogue.as_mut().expect("social episodes open a dialogue");
                let reply = dialogue.handle_message(&self.world.knowledge, question, self.log.len() as u64, self.speaker.as_ref())?;
                self.last_reply = Some(reply.clone());
                out.npc_reply = Some(reply);
            }
            Action::Pick { object } => {
                out.failed = self.try_pick(object);
            }
            Action::Place { relation, receptacle } => match self.try_place(*relation, receptacle) {
                Ok(flags) => {
                    let success = flags.iter().all(|&f| f);
                    self.condition_flags = flags;
                    self.finish(Status::Placed, success);
                }
                Err(why) => out.failed = Some(why),
            },
        }
        if self.status != Status::Running {
            out.terminated = true;
            out.success = self.success;
        }
        self.record(action, before, &out);
        Ok((self.observe(), out))
    }

    fn try_pick(&mut self, object: &str) -> Option<String> {
        if let Some(h) = &self.state.held_object {
            return Some(format!("already holding {h}"));
        }
        let Some(o) = self.world.scene.object(object) else { return Some(format!("unknown object {object}")) };
        if !o.interactive {
            return Some(format!("{object} cannot be picked up"));
        }
        let d = reach_distance(&self.world, self.state.pose.position, object, self.cfg.robot_radius).unwrap_or(f64::INFINITY);
        if d > self.cfg.reach {
            return Some(format!("{object} is {d:.2} m out of reach"));
        }
        self.state.held_object = Some(object.to_string());
        None
    }

    fn try_place(&mut self, relation: PlaceRelation, receptacle: &str) -> Result<Vec<bool>, String> {
        let held = self.state.held_object.clone().ok_or("not holding anything")?;
        if self.world.scene.object(receptacle).is_none() {
            return Err(format!("unknown receptacle {receptacle}"));
        }
        let d = reach_distance(&self.world, self.state.pose.position, receptacle, self.cfg.robot_radius).unwrap_or(f64::INFINITY);
        if d > self.cfg.reach {
            return Err(format!("{receptacle} is {d:.2} m out of reach"));
        }
        let bx = placed_box(&self.world, self.state.pose, &held, relation, receptacle, self.cfg.robot_radius)
            .ok_or("placement undefined")?;
        let ep = self.episode.as_ref().expect("reset before step");
        let flags = check_conditions(Some(&bx), &ep.conditions, &self.world.knowledge, &self.world.relations, &self.cfg.placement);
        self.state.held_object = None;
        self.placed = Some(bx);
        Ok(flags)
    }

    fn record(&mut self, action: &Action, before: Pose, out: &StepOutcome) {
        self.log.push(LogRecord {
            index: self.log.len(),
            action: action.clone(),
            before,
            after: self.state.pose,
            charged: out.charged,
            steps_used: self.state.physical_steps_used,
            reset_count: self.state.reset_count,
            collided: out.collided,
            failed: out.failed.clone(),
            npc_reply: out.npc_reply.clone(),
            terminated: out.terminated,
        });
    }

    pub fn transcript(&self) -> Option<Transcript> {
        self.dialogue.as_ref().map(DialogueSession::transcript)
    }

    /// Metrics record for the episode so far (unsuccessful unless finished
    /// successfully).
    pub fn result(&self, agent: &str) -> Option<EpisodeResult> {
        let ep = self.episode.as_ref()?;
        let candidate_history = match &self.dialogue {
            Some(d) => d.candidate_history.iter().map(|s| s.len()).collect(),
            None => Vec::new(),
        };
        Some(EpisodeResult {
            episode_id: ep.episode_id.clone(),
            task: ep.task,
            split: ep.split,
            agent: agent.to_string(),
            success: self.success.unwrap_or(false),
            taken_path_length: self.state.path_length_accum,
            shortest_path_length: ep.gt_path.length,
            reset_count: self.state.reset_count,
            steps_used: self.state.physical_steps_used,
            candidate_history,
            condition_flags: self.condition_flags.clone(),
            dialogue_rounds: self.dialogue.as_ref().map_or(0, |d| d.rounds.len()),
        })
    }
}

/// Replays `actions` from a fresh reset.
pub fn replay(world: Arc<World>, cfg: SimConfig, episode: &Episode, actions: &[Action]) -> Result<TrajectoryLog, SimError> {
    let mut sim = Simulator::new(world, cfg);
    sim.reset(episode)?;
    for a in actions {
        if sim.status() != Status::Running {
            break;
        }
        sim.step(a)?;
    }
    Ok(sim.log())
}
