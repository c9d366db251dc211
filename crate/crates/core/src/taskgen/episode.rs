use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path as FsPath;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    approach_cell, compose_locomanip, gen_instruction_objnav, gen_instruction_socialnav, sample_conditions, speak,
    GoalPaths, Path, Pattern, PlacementCondition, TaskGenError,
};
use crate::config::Config;
use crate::metrics::PlacementRules;
use crate::sim::{bearing_range, line_of_sight, Pose};
use crate::wkm::{InfoCondition, KnowledgeSession};
use crate::world::World;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    ObjectLoconav,
    SocialLoconav,
    LocoManip,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::ObjectLoconav, Task::SocialLoconav, Task::LocoManip];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::ObjectLoconav => "object_loconav",
            Task::SocialLoconav => "social_loconav",
            Task::LocoManip => "loco_manip",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| format!("unknown task `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Validation,
    Test,
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub episode_id: String,
    pub task: Task,
    pub scene_id: String,
    pub split: Split,
    /// Seeds the NPC's appearance sampling during the episode.
    pub seed: u64,
    pub start_pose: Pose,
    pub target: String,
    pub instruction: String,
    pub gt_path: Path,
    /// Conditions that single out the target among its category.
    pub constraint_trace: Vec<InfoCondition>,
    /// Conditions actually spoken in a coarse (social) instruction.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub instruction_trace: Vec<InfoCondition>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conditions: Vec<PlacementCondition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<Pattern>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    /// Categories that can carry an "on" placement.
    pub receptacles: Vec<String>,
    /// Categories never used as targets or witnesses.
    pub exclude_categories: Vec<String>,
    /// Social instructions run `1..social_round_cap` disclosure rounds.
    pub social_round_cap: usize,
    /// Chance of dropping each room or relation info from a receptacle
    /// description.
    pub drop_probability: f64,
    /// Largest gap between the two witnesses of a paired pattern, meters.
    pub witness_gap: f64,
    /// Validation and test shares of a batch.
    pub split_weights: [usize; 2],
    /// Target draws per episode, and pattern draws per condition set.
    pub max_attempts: usize,
    pub placement: PlacementRules,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            receptacles: ["table", "teatable", "cabinet", "stool", "couch"].map(String::from).to_vec(),
            exclude_categories: vec!["wall".into()],
            social_round_cap: 4,
            drop_probability: 0.5,
            witness_gap: 1.5,
            split_weights: [100, 200],
            max_attempts: 100,
            placement: PlacementRules::default(),
        }
    }
}

/// Split of the `k`-th of `count` episodes: the first share is validation.
pub fn split_for(k: usize, count: usize, weights: [usize; 2]) -> Split {
    let total = (weights[0] + weights[1]).max(1);
    if k < count * weights[0] / total {
        Split::Validation
    } else {
        Split::Test
    }
}

/// Episode factory over a set of scenes. Distance fields are cached per
/// (scene, target) across episodes.
pub struct EpisodeGenerator {
    worlds: Vec<Arc<World>>,
    cfg: Config,
    goals: HashMap<(usize, String), Option<Arc<GoalPaths>>>,
}

impl EpisodeGenerator {
    pub fn new(worlds: Vec<Arc<World>>, cfg: Config) -> Self {
        Self { worlds, cfg, goals: HashMap::new() }
    }

    pub fn worlds(&self) -> &[Arc<World>] {
        &self.worlds
    }

    fn goal_paths(&mut self, w: usize, target: &str) -> Option<Arc<GoalPaths>> {
        if let Some(g) = self.goals.get(&(w, target.to_string())) {
            return g.clone();
        }
        let world = &self.worlds[w];
        let fp = world.scene.objects[target].aabb().footprint();
        let range = self.cfg.sim.success_range;
        // The goal must be a place from which the target can be seen.
        let goal = approach_cell(&world.traversable, &fp, self.cfg.paths.approach_radius, |p| {
            line_of_sight(world, p, target, None) && bearing_range(world, p, 0.0, target).is_some_and(|(_, r)| r < range)
        });
        let g = goal.map(|cell| Arc::new(GoalPaths::new(&world.traversable, cell, &self.cfg.paths))).filter(|g| g.has_candidates());
        if g.is_none() {
            tracing::debug!(scene = world.scene_id(), target, "target excluded: no approach");
        }
        self.goals.insert((w, target.to_string()), g.clone());
        g
    }

    fn target_pool(&self, w: usize, task: Task) -> Vec<String> {
        let world = &self.worlds[w];
        world
            .scene
            .objects
            .values()
            .filter(|o| !self.cfg.generation.exclude_categories.contains(&o.category))
            .filter(|o| task != Task::LocoManip || o.interactive)
            .map(|o| o.instance_id.clone())
            .collect()
    }

    /// One episode on scene `w`. Targets that cannot be reached, described or
    /// given placement conditions are redrawn.
    pub fn generate(&mut self, w: usize, task: Task, episode_id: String, split: Split, seed: u64) -> Result<Episode, TaskGenError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = self.target_pool(w, task);
        if pool.is_empty() {
            return Err(TaskGenError::Generation(format!("scene {} has no {task} targets", self.worlds[w].scene_id())));
        }
        let mut last = String::new();
        for _ in 0..self.cfg.generation.max_attempts {
            let target = pool[rng.gen_range(0..pool.len())].clone();
            let Some(goal) = self.goal_paths(w, &target) else {
                last = format!("{target} has no reachable approach");
                continue;
            };
            let world = self.worlds[w].clone();
            let path = match goal.sample(&world.traversable, &self.cfg.paths, &mut rng) {
                Ok(p) => p,
                Err(e) => {
                    last = e.to_string();
                    continue;
                }
            };
            let heading = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            let npc_seed = rng.gen::<u64>();
            match self.describe(&world, task, &target, &mut rng) {
                Ok(d) => {
                    let start = path.start();
                    return Ok(Episode {
                        episode_id,
                        task,
                        scene_id: world.scene_id().to_string(),
                        split,
                        seed: npc_seed,
                        start_pose: Pose { position: start, heading },
                        target,
                        instruction: d.instruction,
                        gt_path: path,
                        constraint_trace: d.constraint_trace,
                        instruction_trace: d.instruction_trace,
                        conditions: d.conditions,
                        pattern: d.pattern,
                    });
                }
                Err(e) => {
                    tracing::debug!(target, error = %e, "redrawing target");
                    last = e.to_string();
                }
            }
        }
        Err(TaskGenError::Generation(format!(
            "no valid {task} episode on {} after {} draws (last: {last})",
            self.worlds[w].scene_id(),
            self.cfg.generation.max_attempts
        )))
    }

    fn describe(&self, world: &World, task: Task, target: &str, rng: &mut ChaCha8Rng) -> Result<Described, TaskGenError> {
        let wk = &world.knowledge;
        let category = wk.graph().category(target).unwrap_or_default().to_string();
        let cands = wk.category_candidates(&category);
        let mut session = KnowledgeSession::new(rng.gen());
        let nav = gen_instruction_objnav(wk, &mut session, &cands, target)?;
        let mut d = Described {
            instruction: nav.instruction.clone(),
            constraint_trace: nav.trace.clone(),
            instruction_trace: Vec::new(),
            conditions: Vec::new(),
            pattern: None,
        };
        match task {
            Task::ObjectLoconav => {}
            Task::SocialLoconav => {
                let mut s = KnowledgeSession::new(rng.gen());
                let social = gen_instruction_socialnav(wk, &mut s, &cands, target, self.cfg.generation.social_round_cap, rng)?;
                d.instruction = social.instruction;
                d.instruction_trace = social.searched.last().cloned().into_iter().collect();
            }
            Task::LocoManip => {
                let mut s = KnowledgeSession::new(rng.gen());
                let (pattern, conditions) = sample_conditions(world, target, &self.cfg.generation, &mut s, rng)?;
                let placements: Vec<(&str, String)> = conditions
                    .iter()
                    .map(|c| {
                        let cat = c.receptacle_spec.category.clone().unwrap_or_default();
                        (c.relation.as_str(), speak(&cat, std::slice::from_ref(&c.receptacle_spec)))
                    })
                    .collect();
                d.instruction = compose_locomanip(&nav.description, &placements);
                d.conditions = conditions;
                d.pattern = Some(pattern);
            }
        }
        Ok(d)
    }

    /// `count` episodes, scenes round-robin, validation first.
    pub fn generate_batch(&mut self, task: Task, count: usize, seed: u64) -> Result<Vec<Episode>, TaskGenError> {
        if self.worlds.is_empty() {
            return Err(TaskGenError::Generation("no scenes loaded".into()));
        }
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        for k in 0..count {
            let w = k % self.worlds.len();
            let split = split_for(k, count, self.cfg.generation.split_weights);
            let id = format!("{task}-{k:04}");
            out.push(self.generate(w, task, id, split, master.gen())?);
        }
        Ok(out)
    }
}

struct Described {
    instruction: String,
    constraint_trace: Vec<InfoCondition>,
    instruction_trace: Vec<InfoCondition>,
    conditions: Vec<PlacementCondition>,
    pattern: Option<Pattern>,
}

/// Single-episode convenience wrapper.
pub fn generate_episode(world: Arc<World>, cfg: &Config, task: Task, seed: u64) -> Result<Episode, TaskGenError> {
    let mut g = EpisodeGenerator::new(vec![world], cfg.clone());
    g.generate(0, task, format!("{task}-0000"), Split::Validation, seed)
}

pub fn generate_episodes(worlds: Vec<Arc<World>>, cfg: &Config, task: Task, count: usize, seed: u64) -> Result<Vec<Episode>, TaskGenError> {
    EpisodeGenerator::new(worlds, cfg.clone()).generate_batch(task, count, seed)
}

pub fn write_episodes(path: impl AsRef<FsPath>, episodes: &[Episode]) -> Result<(), TaskGenError> {
    let path = path.as_ref();
    let io = |source| TaskGenError::Io { path: path.display().to_string(), source };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for e in episodes {
        writeln!(f, "{}", serde_json::to_string(e).expect("episode serializes")).map_err(io)?;
    }
    f.flush().map_err(io)
}

pub fn read_episodes(path: impl AsRef<FsPath>) -> Result<Vec<Episode>, TaskGenError> {
    let path = path.as_ref();
    let io = |source| TaskGenError::Io { path: path.display().to_string(), source };
    let f = BufReader::new(std::fs::File::open(path).map_err(io)?);
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for (n, line) in f.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let e: Episode = serde_json::from_str(&line).map_err(|e| TaskGenError::Format {
            path: path.display().to_string(),
            line: n + 1,
            msg: e.to_string(),
        })?;
        if !ids.insert(e.episode_id.clone()) {
            return Err(TaskGenError::Format { path: path.display().to_string(), line: n + 1, msg: format!("duplicate episode id {}", e.episode_id) });
        }
        out.push(e);
    }
    Ok(out)
}
