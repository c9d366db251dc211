use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;
use tracing_subscriber::EnvFilter;

use npcbench::taskgen::{Split, Task};
use npcbench::verify::SessionStore;
use npcbench_cli::commands::{self as cmd, CliError};
use npcbench_cli::server;

#[derive(Debug, Parser)]
#[command(name = "npcbench", version, about = "Scene knowledge, episode generation, simulation and evaluation")]
struct Cli {
    /// TOML run configuration; defaults apply to anything omitted.
    #[arg(long, global = true, env = "NPCBENCH_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a scene file and derive its relations.
    ValidateScene { scene: PathBuf },
    /// Rasterize a scene's occupancy map to a PGM image.
    BuildOccupancy {
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate benchmark episodes.
    GenEpisodes {
        #[arg(long)]
        task: Task,
        #[arg(long, default_value_t = 300)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scene files or directories (bundled scenes when omitted).
        #[arg(long = "scenes", env = "NPCBENCH_SCENES", value_delimiter = ',')]
        scenes: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an agent over generated episodes.
    RunBench {
        #[arg(long)]
        episodes: PathBuf,
        #[arg(long, default_value = "modular")]
        agent: String,
        #[arg(long, default_value = "scripted")]
        backend: String,
        #[arg(long)]
        split: Option<Split>,
        #[arg(long = "scenes", env = "NPCBENCH_SCENES", value_delimiter = ',')]
        scenes: Vec<PathBuf>,
        /// Per-episode result records.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate per-episode results into a report.
    Eval { results: PathBuf },
    /// Score NPC answers against gold answers.
    QaEval {
        qa: PathBuf,
        #[arg(long = "scenes", env = "NPCBENCH_SCENES", value_delimiter = ',')]
        scenes: Vec<PathBuf>,
    },
    /// Serve scenes, verification rounds and NPC dialogue over HTTP.
    Serve {
        #[arg(long, env = "NPCBENCH_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long = "scenes", env = "NPCBENCH_SCENES", value_delimiter = ',')]
        scenes: Vec<PathBuf>,
        /// Episodes available to the dialogue endpoint.
        #[arg(long)]
        episodes: Option<PathBuf>,
        /// Append-only event log; replayed on start.
        #[arg(long, env = "NPCBENCH_EVENT_LOG")]
        log: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<Value, CliError> {
    let cfg = cmd::load_config(cli.config.as_deref())?;
    match cli.command {
        Command::ValidateScene { scene } => cmd::validate_scene(&scene, &cfg),
        Command::BuildOccupancy { scene, out } => cmd::occupancy(&scene, &out, &cfg),
        Command::GenEpisodes { task, count, seed, scenes, out } => {
            let worlds = cmd::build_worlds(cmd::load_scenes(&scenes)?, &cfg)?;
            cmd::gen_episodes(worlds, &cfg, task, count, seed, &out)
        }
        Command::RunBench { episodes, agent, backend, split, scenes, out } => {
            let worlds = cmd::build_worlds(cmd::load_scenes(&scenes)?, &cfg)?;
            let eps = cmd::read_episode_file(&episodes)?;
            let run = cmd::run_bench(&worlds, &cfg, &eps, &agent, &backend, split)?;
            if let Some(out) = out {
                cmd::write_results(&out, &run.results)?;
            }
            Ok(cmd::report_json(&agent, &run.reports))
        }
        Command::Eval { results } => cmd::eval(&results),
        Command::QaEval { qa, scenes } => {
            let worlds = cmd::build_worlds(cmd::load_scenes(&scenes)?, &cfg)?;
            cmd::qa_eval(&qa, &worlds)
        }
        Command::Serve { port, scenes, episodes, log, seed } => {
            let worlds = cmd::build_worlds(cmd::load_scenes(&scenes)?, &cfg)?;
            let eps = match episodes {
                Some(p) => cmd::read_episode_file(&p)?,
                None => Vec::new(),
            };
            let mut store = SessionStore::new(worlds, eps, seed);
            if let Some(log) = log {
                store = store.with_log(&log).map_err(|e| CliError::Usage(format!("event log: {e}")))?;
            }
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Io { path: "runtime".into(), source: e })?;
            rt.block_on(async move {
                let addr = std::net::SocketAddr::from(([0, 0, 0, 0], port));
                let listener = tokio::net::TcpListener::bind(addr)
                    .await
                    .map_err(|e| CliError::Io { path: addr.to_string(), source: e })?;
                tracing::info!(%addr, "serving");
                axum::serve(listener, server::router(store))
                    .await
                    .map_err(|e| CliError::Io { path: addr.to_string(), source: e })
            })?;
            Ok(Value::Null)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(Value::Null) => ExitCode::SUCCESS,
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("output serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
