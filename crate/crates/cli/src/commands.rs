//! Subcommand bodies. Each returns a JSON value printed on success.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use serde_json::{json, Value};

use npcbench::agents::{run_episode, Agent, LlmBackend, LlmMode, ModularAgent, OracleAgent, RandomAgent, ScriptedBackend};
use npcbench::config::{Config, ConfigError};
use npcbench::dialogue::{answer_qa, score_qa, QaItem};
use npcbench::external::{EmbeddingClient, LlmClient, TransportError};
use npcbench::fixtures;
use npcbench::metrics::{aggregate, render_table, EpisodeResult, MetricError, Report};
use npcbench::scene::{derive_relations, load_scene, Scene, SceneError};
use npcbench::sim::{SimError, Simulator};
use npcbench::taskgen::{build_occupancy, read_episodes, write_episodes, Episode, EpisodeGenerator, Split, Task, TaskGenError};
use npcbench::wkm::{EmbeddingSimilarity, SimilarityProvider, TokenCosine};
use npcbench::world::World;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    TaskGen(#[from] TaskGenError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path} line {line}: {msg}")]
    Format { path: String, line: usize, msg: String },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Scene(_) => "scene",
            CliError::TaskGen(_) => "generation",
            CliError::Sim(_) => "simulation",
            CliError::Metric(MetricError::Undefined(_)) => "undefined_metric",
            CliError::Metric(_) => "metric",
            CliError::Transport(_) => "transport",
            CliError::Io { .. } => "io",
            CliError::Format { .. } => "format",
            CliError::Usage(_) => "usage",
        }
    }

    pub fn to_json(&self) -> Value {
        json!({"error": {"kind": self.kind(), "message": self.to_string()}})
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

pub fn load_config(path: Option<&Path>) -> Result<Config, CliError> {
    Ok(match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    })
}

/// Scene files from paths (files, or directories of `.json` files); the
/// bundled benchmark scenes when none are given.
pub fn load_scenes(paths: &[PathBuf]) -> Result<Vec<Scene>, CliError> {
    if paths.is_empty() {
        return Ok(fixtures::benchmark_scenes());
    }
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(io_err(p))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    files.iter().map(|f| load_scene(f).map_err(CliError::from)).collect()
}

/// Embedding similarity when an endpoint is configured, token cosine otherwise.
pub fn similarity_provider() -> Arc<dyn SimilarityProvider> {
    match EmbeddingClient::from_env() {
        Ok(c) => Arc::new(EmbeddingSimilarity::new(c)),
        Err(_) => Arc::new(TokenCosine),
    }
}

pub fn build_worlds(scenes: Vec<Scene>, cfg: &Config) -> Result<Vec<Arc<World>>, CliError> {
    let provider = similarity_provider();
    scenes.into_iter().map(|s| Ok(Arc::new(World::with_provider(s, cfg, provider.clone())?))).collect()
}

pub fn validate_scene(path: &Path, cfg: &Config) -> Result<Value, CliError> {
    let scene = load_scene(path)?;
    let graph = derive_relations(&scene, &cfg.relations);
    let edges: usize = graph.adjacency.values().map(Vec::len).sum();
    Ok(json!({
        "scene_id": scene.scene_id,
        "objects": scene.objects.len(),
        "regions": scene.regions.len(),
        "edges": edges,
    }))
}

pub fn occupancy(path: &Path, out: &Path, cfg: &Config) -> Result<Value, CliError> {
    let scene = load_scene(path)?;
    let map = build_occupancy(&scene, &cfg.occupancy)?;
    fs::write(out, map.to_pgm()).map_err(io_err(out))?;
    Ok(json!({"scene_id": scene.scene_id, "output": out.display().to_string(), "summary": map.summary()}))
}

pub fn gen_episodes(worlds: Vec<Arc<World>>, cfg: &Config, task: Task, count: usize, seed: u64, out: &Path) -> Result<Value, CliError> {
    let episodes = EpisodeGenerator::new(worlds, cfg.clone()).generate_batch(task, count, seed)?;
    write_episodes(out, &episodes)?;
    let validation = episodes.iter().filter(|e| e.split == Split::Validation).count();
    Ok(json!({
        "task": task,
        "written": episodes.len(),
        "validation": validation,
        "test": episodes.len() - validation,
        "output": out.display().to_string(),
    }))
}

pub fn make_agent(name: &str, backend: &str, world: &Arc<World>, cfg: &Config) -> Result<Box<dyn Agent>, CliError> {
    Ok(match name {
        "random" => Box::new(RandomAgent::new(cfg.agent.seed)),
        "oracle" => Box::new(OracleAgent::new(world.clone(), cfg.sim.clone(), cfg.agent.oracle.clone())),
        "modular" => {
            let backend: Box<dyn npcbench::agents::DecisionBackend> = match backend {
                "scripted" => Box::new(ScriptedBackend::new(world.clone())),
                "llm" => Box::new(LlmBackend::new(LlmClient::from_env()?, LlmMode::Prompted)),
                "llm-wire" => Box::new(LlmBackend::new(LlmClient::from_env()?, LlmMode::Wire)),
                other => return Err(CliError::Usage(format!("unknown backend `{other}` (scripted, llm, llm-wire)"))),
            };
            Box::new(ModularAgent::new(world.clone(), cfg.sim.clone(), cfg.agent.clone(), backend))
        }
        other => return Err(CliError::Usage(format!("unknown agent `{other}` (random, oracle, modular)"))),
    })
}

pub struct BenchRun {
    pub results: Vec<EpisodeResult>,
    pub reports: Vec<Report>,
}

/// Runs `agent` over the episodes of `split` (all when `None`).
pub fn run_bench(
    worlds: &[Arc<World>],
    cfg: &Config,
    episodes: &[Episode],
    agent: &str,
    backend: &str,
    split: Option<Split>,
) -> Result<BenchRun, CliError> {
    let by_scene: BTreeMap<&str, &Arc<World>> = worlds.iter().map(|w| (w.scene_id(), w)).collect();
    let mut results = Vec::new();
    for ep in episodes.iter().filter(|e| split.is_none_or(|s| e.split == s)) {
        let world = by_scene
            .get(ep.scene_id.as_str())
            .ok_or_else(|| CliError::Usage(format!("episode {} needs scene {}, which is not loaded", ep.episode_id, ep.scene_id)))?;
        let mut sim = Simulator::new((*world).clone(), cfg.sim.clone());
        let mut a = make_agent(agent, backend, world, cfg)?;
        let r = run_episode(&mut sim, a.as_mut(), ep)?;
        tracing::info!(episode = %r.episode_id, success = r.success, steps = r.steps_used, "episode finished");
        results.push(r);
    }
    let reports = group_reports(&results)?;
    Ok(BenchRun { results, reports })
}

fn group_reports(results: &[EpisodeResult]) -> Result<Vec<Report>, CliError> {
    if results.is_empty() {
        return Err(MetricError::Undefined("report").into());
    }
    let mut groups: BTreeMap<(Task, Split), Vec<EpisodeResult>> = BTreeMap::new();
    for r in results {
        groups.entry((r.task, r.split)).or_default().push(r.clone());
    }
    groups.into_iter().map(|((_, s), rs)| aggregate(&rs, Some(s)).map_err(CliError::from)).collect()
}

pub fn write_results(path: &Path, results: &[EpisodeResult]) -> Result<(), CliError> {
    let mut f = BufWriter::new(fs::File::create(path).map_err(io_err(path))?);
    for r in results {
        writeln!(f, "{}", serde_json::to_string(r).expect("results serialize")).map_err(io_err(path))?;
    }
    f.flush().map_err(io_err(path))
}

pub fn read_results(path: &Path) -> Result<Vec<EpisodeResult>, CliError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CliError::Format {
            path: path.display().to_string(),
            line: n + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn report_json(agent: &str, reports: &[Report]) -> Value {
    let rows: Vec<(String, Report)> = reports
        .iter()
        .map(|r| {
            let split = r.split.map_or("all", |s| if s == Split::Validation { "validation" } else { "test" });
            (format!("{} {split} ({agent})", r.task.as_str()), r.clone())
        })
        .collect();
    json!({"agent": agent, "reports": reports, "table": render_table(&rows)})
}

pub fn eval(path: &Path) -> Result<Value, CliError> {
    let results = read_results(path)?;
    let reports = group_reports(&results)?;
    let mut agents: Vec<&str> = results.iter().map(|r| r.agent.as_str()).collect();
    agents.dedup();
    Ok(report_json(&agents.join("+"), &reports))
}

#[derive(Debug, Deserialize)]
struct QaInput {
    question: String,
    gold_answer: String,
    #[serde(default)]
    npc_answer: Option<String>,
    #[serde(default)]
    scene_id: Option<String>,
    #[serde(default)]
    target: Option<String>,
}

/// Scores NPC answers against gold answers. Records without an answer are
/// answered by the NPC from the target's record.
pub fn qa_eval(path: &Path, worlds: &[Arc<World>]) -> Result<Value, CliError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    let mut items = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| CliError::Format { path: path.display().to_string(), line: n + 1, msg };
        let rec: QaInput = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let answer = match rec.npc_answer {
            Some(a) => a,
            None => {
                let (Some(scene), Some(target)) = (&rec.scene_id, &rec.target) else {
                    return Err(bad("record needs npc_answer or scene_id and target".into()));
                };
                let w = worlds.iter().find(|w| w.scene_id() == scene).ok_or_else(|| bad(format!("scene {scene} not loaded")))?;
                answer_qa(&rec.question, target, &w.knowledge)
            }
        };
        items.push(QaItem::new(&rec.question, &rec.gold_answer, &answer));
    }
    let provider = similarity_provider();
    let report = score_qa(&items, provider.as_ref());
    if report.mean.is_none() {
        return Err(MetricError::Undefined("QA score").into());
    }
    Ok(serde_json::to_value(report).expect("report serializes"))
}

pub fn read_episode_file(path: &Path) -> Result<Vec<Episode>, CliError> {
    Ok(read_episodes(path)?)
}
