mod common;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;
use npcbench::agents::{
    base_actions, plan_path, run_episode, segment_free, Agent, AgentConfig, BackendError, CandidateView, Decision,
    DecisionBackend, DecisionRequest, FreeSpace, ModularAgent, OracleAgent, RandomAgent, RrtConfig, ScriptedBackend,
    Turn,
};
use npcbench::config::Config;
use npcbench::external::TransportError;
use npcbench::geometry::{Point2, Rect};
use npcbench::scene::Relation;
use npcbench::sim::{Action, Pose, SimConfig, Simulator, Status};
use npcbench::taskgen::{build_occupancy, generate_episodes, Cell, Task};
use npcbench::wkm::{InfoCondition, TokenCosine};
use npcbench::world::World;

fn corridor_episode() -> npcbench::taskgen::Episode {
    episode("corridor", Task::ObjectLoconav, Pose::new(1.5, 1.5, 0.0), "chair/1", p(12.0, 1.5))
}

#[test]
fn random_action_sets() {
    assert_eq!(base_actions(Task::ObjectLoconav).len(), 12);
    let social = base_actions(Task::SocialLoconav);
    assert_eq!(social.len(), 13);
    assert!(matches!(social.last(), Some(Action::Ask { .. })));
}

#[test]
fn random_agent_is_reproducible() {
    let w = world(corridor());
    let ep = corridor_episode();
    let draw = |seed| {
        let mut sim = Simulator::new(w.clone(), SimConfig::default());
        let obs = sim.reset(&ep).unwrap();
        let mut a = RandomAgent::new(seed);
        a.reset(&ep, &obs);
        (0..40).map(|_| a.act(Turn { obs: &obs, last: None, disclosed: None })).collect::<Vec<_>>()
    };
    assert_eq!(draw(3), draw(3));
    assert_ne!(draw(3), draw(4));
    let actions = draw(5);
    assert!(actions.iter().all(|a| a.allowed_in(Task::ObjectLoconav)));
}

#[test]
fn oracle_reaches_corridor_goal() {
    let w = world(corridor());
    let cfg = Config::default();
    let ep = corridor_episode();
    let mut sim = Simulator::new(w.clone(), cfg.sim.clone());
    let mut agent = OracleAgent::new(w, cfg.sim.clone(), cfg.agent.oracle.clone());
    let r = run_episode(&mut sim, &mut agent, &ep).unwrap();
    assert!(r.success);
    assert_eq!(r.reset_count, 0);
    assert!(r.taken_path_length < 14.0, "{}", r.taken_path_length);
}

#[test]
fn oracle_stops_at_once_when_target_already_in_view() {
    let w = world(corridor());
    let cfg = Config::default();
    let ep = episode("corridor", Task::ObjectLoconav, Pose::new(12.0, 1.5, 0.0), "chair/1", p(12.0, 1.5));
    let mut sim = Simulator::new(w.clone(), cfg.sim.clone());
    let mut agent = OracleAgent::new(w, cfg.sim.clone(), cfg.agent.oracle.clone());
    let r = run_episode(&mut sim, &mut agent, &ep).unwrap();
    assert!(r.success);
    let log = sim.log();
    assert_eq!(log.records.len(), 1);
    assert_eq!(log.records[0].action, Action::Stop);
}

#[test]
fn oracle_stalls_on_an_unmodelled_obstacle() {
    let cfg = Config::default();
    let scene = corridor();
    let model = world(scene.clone());
    // The simulator's map gains a wall across the corridor that the
    // oracle's model does not have.
    let mut map = build_occupancy(&scene, &cfg.occupancy).unwrap();
    let (i0, _) = map.cell_of(p(7.0, 0.0)).unwrap();
    let (i1, _) = map.cell_of(p(7.3, 0.0)).unwrap();
    for j in 0..map.height {
        for i in i0..=i1 {
            if map.get(i, j) == Cell::Free {
                map.set(i, j, Cell::Obstacle);
            }
        }
    }
    let blocked = Arc::new(World::from_map(scene, map, &cfg, Arc::new(TokenCosine)));
    let ep = corridor_episode();
    let mut sim = Simulator::new(blocked, cfg.sim.clone());
    let mut agent = OracleAgent::new(model, cfg.sim.clone(), cfg.agent.oracle.clone());
    let r = run_episode(&mut sim, &mut agent, &ep).unwrap();
    assert!(!r.success);
    assert!(r.reset_count > 0);
    assert!(sim.state().pose.position.x < 7.0);
}

struct Open(Rect);

impl FreeSpace for Open {
    fn is_free(&self, p: Point2) -> bool {
        self.0.contains(p)
    }
    fn bounds(&self) -> Rect {
        self.0
    }
    fn free_area(&self) -> f64 {
        (self.0.max_x - self.0.min_x) * (self.0.max_y - self.0.min_y)
    }
}

struct Pillar {
    room: Rect,
    center: Point2,
    radius: f64,
}

impl FreeSpace for Pillar {
    fn is_free(&self, p: Point2) -> bool {
        self.room.contains(p) && p.dist(self.center) > self.radius
    }
    fn bounds(&self) -> Rect {
        self.room
    }
    fn free_area(&self) -> f64 {
        100.0 - std::f64::consts::PI * self.radius * self.radius
    }
}

#[test]
fn rrt_on_an_open_map_is_near_straight() {
    let space = Open(Rect::new(0.0, 0.0, 12.0, 12.0));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (a, b) = (p(1.0, 1.0), p(11.0, 9.0));
    let path = plan_path(&space, a, b, &RrtConfig::default(), &mut rng).unwrap();
    assert!(path.length <= a.dist(b) * 1.05);
    assert_eq!(path.start(), a);
    assert_eq!(path.end(), b);
}

#[test]
fn rrt_start_equals_goal() {
    let space = Open(Rect::new(0.0, 0.0, 5.0, 5.0));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let path = plan_path(&space, p(2.0, 2.0), p(2.0, 2.0), &RrtConfig::default(), &mut rng).unwrap();
    assert_eq!(path.waypoints, vec![p(2.0, 2.0)]);
    assert_eq!(path.length, 0.0);
}

#[test]
fn rrt_detours_round_a_pillar_close_to_optimal() {
    let space = Pillar { room: Rect::new(0.0, 0.0, 10.0, 10.0), center: p(5.0, 5.0), radius: 1.0 };
    let (a, b) = (p(0.0, 5.0), p(10.0, 5.0));
    // Tangent, arc, tangent around the pillar.
    let (d, r) = (5.0_f64, 1.0_f64);
    let optimal = 2.0 * (d * d - r * r).sqrt() + r * (std::f64::consts::PI - 2.0 * (r / d).acos());
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let path = plan_path(&space, a, b, &RrtConfig::default(), &mut rng).unwrap();
        assert!(path.length >= optimal - 1e-6, "seed {seed}: {} beats the optimum", path.length);
        assert!(path.length <= optimal * 1.05, "seed {seed}: {} vs {optimal}", path.length);
        for w in path.waypoints.windows(2) {
            assert!(segment_free(&space, w[0], w[1], 0.01));
        }
    }
}

#[test]
fn rrt_reports_unreachable_goals() {
    let space = Pillar { room: Rect::new(0.0, 0.0, 10.0, 10.0), center: p(5.0, 5.0), radius: 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(plan_path(&space, p(1.0, 1.0), p(5.0, 5.0), &RrtConfig::default(), &mut rng).is_none());
}

fn five_objects_world() -> Arc<World> {
    world(npcbench::fixtures::scene("five_objects"))
}

fn request(goal_info: Vec<InfoCondition>, can_ask: bool) -> DecisionRequest {
    // Nearest first: chair/2, then chair/1, then a table.
    let cands = ["chair/2", "chair/1", "table/1"];
    DecisionRequest {
        goal: "chair".into(),
        candidates: cands
            .iter()
            .enumerate()
            .map(|(k, id)| CandidateView { index: k, description: format!("the {id}"), instance_id: id.to_string() })
            .collect(),
        goal_info,
        history: String::new(),
        can_ask,
    }
}

#[test]
fn scripted_backend_selects_the_candidate_matching_goal_info() {
    let mut b = ScriptedBackend::new(five_objects_world());
    let near_table = vec![InfoCondition::relation(true, Relation::Near, "table")];
    assert_eq!(b.decide(&request(near_table, false)).unwrap(), Decision::Choose(1));
    // No conditions: nearest same-category candidate.
    assert_eq!(b.decide(&request(vec![], false)).unwrap(), Decision::Choose(0));
    // Nothing matches: keep exploring.
    let kitchen = vec![InfoCondition::room("2/kitchen")];
    assert_eq!(b.decide(&request(kitchen, false)).unwrap(), Decision::Explore);
    assert!(matches!(b.decide(&request(vec![], true)).unwrap(), Decision::Ask(_)));
}

/// A backend whose endpoint is always down.
struct Down;

impl DecisionBackend for Down {
    fn name(&self) -> &str {
        "down"
    }
    fn decide(&mut self, _req: &DecisionRequest) -> Result<Decision, BackendError> {
        Err(TransportError::Failed { url: "http://127.0.0.1:9".into(), attempts: 1, msg: "refused".into() }.into())
    }
    fn speak(&mut self, req: &DecisionRequest) -> Result<String, BackendError> {
        self.decide(req).map(|_| String::new())
    }
}

#[test]
fn unreachable_backend_holds_position() {
    let w = world(corridor());
    let cfg = Config::default();
    // The chair is in view from the start, so the agent must consult the backend.
    let ep = episode("corridor", Task::ObjectLoconav, Pose::new(6.0, 1.5, 0.0), "chair/1", p(12.0, 1.5));
    let mut sim = Simulator::new(w.clone(), cfg.sim.clone());
    let mut agent = ModularAgent::new(w, cfg.sim.clone(), cfg.agent.clone(), Box::new(Down));
    let mut obs = sim.reset(&ep).unwrap();
    agent.reset(&ep, &obs);
    for _ in 0..8 {
        let a = agent.act(Turn { obs: &obs, last: None, disclosed: None });
        assert!(a.motion().is_none(), "moved with no backend: {a:?}");
        assert_ne!(a, Action::Stop);
        obs = sim.step(&a).unwrap().0;
    }
    assert!(agent.backend_failures > 0);
    assert_eq!(sim.state().pose.position, ep.start_pose.position);
}

/// A room whose far half is cut off by a knee-high bench except for a gap
/// along one wall. The bench starts outside sensor range.
fn bench_room() -> npcbench::scene::Scene {
    room_scene(
        "bench",
        14.0,
        8.0,
        vec![
            obj("fridge/1", "1/hall", [10.5, 3.6, 0.0], [11.3, 4.4, 1.8], &["The object is a steel fridge."]),
            obj("bench/1", "1/hall", [7.0, 2.2, 0.0], [7.3, 8.0, 0.5], &["The object is a wooden bench."]),
        ],
    )
}

#[test]
fn modular_agent_replans_when_a_revealed_obstacle_cuts_its_path() {
    let w = world(bench_room());
    let cfg = Config::default();
    let ep = episode("bench", Task::ObjectLoconav, Pose::new(2.0, 4.0, 0.0), "fridge/1", p(9.5, 4.0));
    let mut sim = Simulator::new(w.clone(), cfg.sim.clone());
    let mut agent = ModularAgent::new(w.clone(), cfg.sim.clone(), cfg.agent.clone(), Box::new(ScriptedBackend::new(w)));
    let r = run_episode(&mut sim, &mut agent, &ep).unwrap();
    assert!(agent.replans >= 1, "no replan after the bench was seen");
    assert!(r.success, "{:?}", sim.log().actions());
    assert_eq!(r.reset_count, 0);
}

#[test]
fn modular_agent_explores_when_nothing_is_in_view() {
    // The chair hides behind a tall wall; after the initial look-around the
    // agent must move rather than stop.
    let scene = room_scene(
        "hidden",
        14.0,
        8.0,
        vec![
            obj("chair/1", "1/hall", [11.0, 3.7, 0.0], [11.5, 4.3, 0.9], &["The object is a chair."]),
            obj("wall/1", "1/hall", [8.0, 0.0, 0.0], [8.2, 6.5, 2.5], &[]),
        ],
    );
    let w = world(scene);
    let cfg = Config::default();
    let ep = episode("hidden", Task::ObjectLoconav, Pose::new(2.0, 4.0, 0.0), "chair/1", p(10.0, 7.0));
    let mut sim = Simulator::new(w.clone(), cfg.sim.clone());
    let mut agent = ModularAgent::new(w.clone(), cfg.sim.clone(), cfg.agent.clone(), Box::new(ScriptedBackend::new(w)));
    let mut obs = sim.reset(&ep).unwrap();
    agent.reset(&ep, &obs);
    let mut moved = false;
    for _ in 0..cfg.agent.scan_turns + 3 {
        let a = agent.act(Turn { obs: &obs, last: None, disclosed: None });
        assert_ne!(a, Action::Stop);
        moved |= a.motion().is_some();
        obs = sim.step(&a).unwrap().0;
    }
    assert!(moved);
    assert!(agent.memory.candidates.values().all(|c| c.category != "chair"));
}

#[test]
fn modular_agent_asks_at_most_three_times() {
    let cfg = Config::default();
    let w = world(npcbench::fixtures::scene("apartment_a"));
    let episodes = generate_episodes(vec![w.clone()], &cfg, Task::SocialLoconav, 6, 3).unwrap();
    let agent_cfg = AgentConfig { max_asks: 5, ..cfg.agent.clone() };
    for ep in &episodes {
        let mut sim = Simulator::new(w.clone(), cfg.sim.clone());
        let mut agent = ModularAgent::new(w.clone(), cfg.sim.clone(), agent_cfg.clone(), Box::new(ScriptedBackend::new(w.clone())));
        let r = run_episode(&mut sim, &mut agent, ep).unwrap();
        let asks = sim.log().records.iter().filter(|r| matches!(r.action, Action::Ask { .. })).count();
        assert!(asks <= 3, "{}: {asks} asks", ep.episode_id);
        assert!(r.dialogue_rounds <= 3);
        assert_ne!(sim.status(), Status::Running);
    }
}

#[test]
fn memory_never_forgets_and_candidates_only_grow() {
    let cfg = Config::default();
    let w = world(npcbench::fixtures::scene("apartment_b"));
    let ep = generate_episodes(vec![w.clone()], &cfg, Task::ObjectLoconav, 1, 9).unwrap().remove(0);
    let mut sim = Simulator::new(w.clone(), cfg.sim.clone());
    let mut agent = ModularAgent::new(w.clone(), cfg.sim.clone(), cfg.agent.clone(), Box::new(ScriptedBackend::new(w)));
    let mut obs = sim.reset(&ep).unwrap();
    agent.reset(&ep, &obs);
    let mut known = agent.memory.cells.clone();
    let mut cands = agent.memory.candidates.len();
    while sim.status() == Status::Running {
        let a = agent.act(Turn { obs: &obs, last: None, disclosed: None });
        obs = sim.step(&a).unwrap().0;
        agent.memory.observe(&obs);
        for (before, now) in known.iter().zip(&agent.memory.cells) {
            if let Some(b) = before {
                assert_eq!(now.as_ref(), Some(b), "a known cell changed");
            }
        }
        assert!(agent.memory.candidates.len() >= cands);
        known = agent.memory.cells.clone();
        cands = agent.memory.candidates.len();
    }
}
