//! Upper-bound reference agent. It knows the episode and the scene model it
//! was generated on, searches the simulator's own discrete transitions on
//! that model for a cheapest action sequence, and replays it, re-searching
//! whenever the real outcome departs from the model.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Agent, Turn};
use crate::geometry::{wrap_angle, Point2};
use crate::metrics::check_conditions;
use crate::sim::{apply_motion, bearing_range, charge, fov_visible, placed_box, reach_distance, Action, CoarseGrid, Observation, Pose, SimConfig};
use crate::taskgen::{Cell, Episode, Task};
use crate::world::World;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    /// Poses closer than this (with equal heading) are merged during search.
    pub lattice_cell: f64,
    pub max_expansions: usize,
    /// Weight on the distance heuristic (1 = A*).
    pub heuristic_weight: f64,
    /// Extra cost per colliding transition when collisions are allowed.
    pub collision_penalty: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { lattice_cell: 0.2, max_expansions: 60_000, heuristic_weight: 1.5, collision_penalty: 4_800 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Find,
    Fetch,
    Deliver,
    Done,
}

pub struct OracleAgent {
    model: Arc<World>,
    sim: SimConfig,
    cfg: OracleConfig,
    episode: Option<Episode>,
    phase: Phase,
    plan: VecDeque<(Action, Pose)>,
    expected: Option<Pose>,
    held: Option<String>,
    pub searches: usize,
}

/// Coarse geodesic distance (meters) to a goal region, for the heuristic.
struct Field {
    grid_w: usize,
    grid_h: usize,
    cell: f64,
    origin: Point2,
    dist: Vec<f64>,
}

impl Field {
    fn new(grid: &CoarseGrid, goal: impl Fn(Point2) -> bool) -> Self {
        let (w, h) = (grid.width, grid.height);
        let mut dist = vec![f64::INFINITY; w * h];
        let mut heap = BinaryHeap::new();
        for j in 0..h {
            for i in 0..w {
                if grid.get(i, j) == Cell::Free && goal(grid.center(i, j)) {
                    dist[j * w + i] = 0.0;
                    heap.push((Reverse(0u64), j * w + i));
                }
            }
        }
        let c = grid.cell_size;
        while let Some((Reverse(dk), k)) = heap.pop() {
            let d = dk as f64 * 1e-6;
            if d > dist[k] + 1e-9 {
                continue;
            }
            let (i, j) = ((k % w) as i64, (k / w) as i64);
            for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)] {
                let (ni, nj) = (i + di, j + dj);
                if ni < 0 || nj < 0 || ni as usize >= w || nj as usize >= h {
                    continue;
                }
                let nk = nj as usize * w + ni as usize;
                if grid.cells[nk] != Cell::Free {
                    continue;
                }
                let nd = d + if di != 0 && dj != 0 { c * std::f64::consts::SQRT_2 } else { c };
                if nd + 1e-9 < dist[nk] {
                    dist[nk] = nd;
                    heap.push((Reverse((nd * 1e6) as u64), nk));
                }
            }
        }
        Self { grid_w: w, grid_h: h, cell: c, origin: grid.origin, dist }
    }

    fn at(&self, p: Point2) -> Option<f64> {
        let i = ((p.x - self.origin.x) / self.cell).floor();
        let j = ((p.y - self.origin.y) / self.cell).floor();
        if i < 0.0 || j < 0.0 || i as usize >= self.grid_w || j as usize >= self.grid_h {
            return None;
        }
        let d = self.dist[j as usize * self.grid_w + i as usize];
        d.is_finite().then_some(d)
    }
}

struct Node {
    pose: Pose,
    g: u64,
    parent: usize,
    action: Option<Action>,
}

impl OracleAgent {
    pub fn new(model: Arc<World>, sim: SimConfig, cfg: OracleConfig) -> Self {
        Self {
            model,
            sim,
            cfg,
            episode: None,
            phase: Phase::Find,
            plan: VecDeque::new(),
            expected: None,
            held: None,
            searches: 0,
        }
    }

    fn episode(&self) -> &Episode {
        self.episode.as_ref().expect("reset before act")
    }

    fn sees_target(&self, pose: Pose) -> bool {
        let ep = self.episode();
        fov_visible(&self.model, pose.position, pose.heading, &ep.target, self.held.as_deref(), &self.sim.fov)
            && bearing_range(&self.model, pose.position, pose.heading, &ep.target).is_some_and(|(_, r)| r < self.sim.success_range)
    }

    fn in_reach(&self, pose: Pose, id: &str) -> bool {
        reach_distance(&self.model, pose.position, id, self.sim.robot_radius).is_some_and(|d| d <= self.sim.reach)
    }

    /// A place action from `pose` that satisfies every condition.
    fn placement_at(&self, pose: Pose) -> Option<Action> {
        let ep = self.episode();
        let held = self.held.as_deref()?;
        for c in &ep.conditions {
            let w = &c.receptacle_witness;
            if !self.in_reach(pose, w) {
                continue;
            }
            let Some(bx) = placed_box(&self.model, pose, held, c.relation, w, self.sim.robot_radius) else { continue };
            let flags = check_conditions(Some(&bx), &ep.conditions, &self.model.knowledge, &self.model.relations, &self.sim.placement);
            if flags.iter().all(|&f| f) {
                return Some(Action::Place { relation: c.relation, receptacle: w.clone() });
            }
        }
        None
    }

    /// The terminal action available at `pose` in the current phase.
    fn finisher(&self, pose: Pose) -> Option<Action> {
        match self.phase {
            Phase::Find => self.sees_target(pose).then_some(Action::Stop),
            Phase::Fetch => {
                let t = &self.episode().target;
                self.in_reach(pose, t).then(|| Action::Pick { object: t.clone() })
            }
            Phase::Deliver => self.placement_at(pose),
            Phase::Done => Some(Action::Stop),
        }
    }

    fn goal_field(&self) -> Field {
        let ep = self.episode();
        let r = self.sim.robot_radius;
        let regions: Vec<(crate::geometry::Rect, f64)> = match self.phase {
            Phase::Find | Phase::Done => vec![(self.model.scene.objects[&ep.target].aabb().footprint(), self.sim.success_range)],
            Phase::Fetch => vec![(self.model.scene.objects[&ep.target].aabb().footprint(), r + self.sim.reach)],
            Phase::Deliver => ep
                .conditions
                .iter()
                .filter_map(|c| self.model.scene.object(&c.receptacle_witness))
                .map(|o| (o.aabb().footprint(), r + self.sim.reach))
                .collect(),
        };
        Field::new(&self.model.coarse, |p| regions.iter().any(|(fp, d)| fp.distance_to_point(p) < *d))
    }

    fn key(&self, pose: Pose, h0: f64) -> (i64, i64, u8) {
        let c = self.cfg.lattice_cell;
        let k = (wrap_angle(pose.heading - h0) / std::f64::consts::FRAC_PI_4).round().rem_euclid(8.0) as u8;
        ((pose.position.x / c).floor() as i64, (pose.position.y / c).floor() as i64, k)
    }

    /// Best-first search over movement and turn transitions on the model.
    fn search(&mut self, start: Pose, budget_left: u64, allow_collisions: bool) -> Option<Vec<(Action, Pose)>> {
        self.searches += 1;
        let field = self.goal_field();
        let per_meter = self.sim.physics_hz / self.sim.nominal_speed;
        let reserve = charge(&Action::Pick { object: String::new() }, &self.sim);
        let h = |p: Point2| -> u64 { field.at(p).map_or(0.0, |d| d * per_meter * self.cfg.heuristic_weight) as u64 };
        let mut actions = Action::navigation_set();
        actions.retain(|a| *a != Action::Stop);
        let mut nodes = vec![Node { pose: start, g: 0, parent: usize::MAX, action: None }];
        let mut open = BinaryHeap::new();
        let mut closed = HashSet::new();
        open.push((Reverse(h(start.position)), Reverse(0usize)));
        let h0 = start.heading;
        let mut expansions = 0;
        while let Some((_, Reverse(idx))) = open.pop() {
            let pose = nodes[idx].pose;
            if !closed.insert(self.key(pose, h0)) {
                continue;
            }
            if let Some(fin) = self.finisher(pose) {
                let mut out = vec![(fin, pose)];
                let mut k = idx;
                while let Some(a) = nodes[k].action.clone() {
                    out.push((a, nodes[k].pose));
                    k = nodes[k].parent;
                }
                out.reverse();
                return Some(out);
            }
            expansions += 1;
            if expansions > self.cfg.max_expansions {
                break;
            }
            for a in &actions {
                let cost = charge(a, &self.sim);
                let g = nodes[idx].g + cost;
                if g + reserve > budget_left {
                    continue;
                }
                let (next, _, collided) = apply_motion(&self.model, pose, a, self.sim.robot_radius);
                if collided && !allow_collisions {
                    continue;
                }
                if closed.contains(&self.key(next, h0)) {
                    continue;
                }
                let g = g + if collided { self.cfg.collision_penalty } else { 0 };
                nodes.push(Node { pose: next, g, parent: idx, action: Some(a.clone()) });
                open.push((Reverse(g + h(next.position)), Reverse(nodes.len() - 1)));
            }
        }
        None
    }

    fn replan(&mut self, obs: &Observation) {
        self.plan.clear();
        let start = obs.pose;
        let left = obs.steps_remaining;
        let plan = self.search(start, left, false).or_else(|| self.search(start, left, true));
        match plan {
            Some(p) => self.plan = p.into(),
            None => tracing::debug!(episode = %self.episode().episode_id, "oracle found no plan on its model"),
        }
    }
}

impl Agent for OracleAgent {
    fn name(&self) -> &str {
        "oracle"
    }

    fn reset(&mut self, episode: &Episode, _obs: &Observation) {
        self.episode = Some(episode.clone());
        self.phase = if episode.task == Task::LocoManip { Phase::Fetch } else { Phase::Find };
        self.plan.clear();
        self.expected = None;
        self.held = None;
    }

    fn act(&mut self, turn: Turn<'_>) -> Action {
        let obs = turn.obs;
        // Track pick outcomes reported by the simulator.
        if self.phase == Phase::Fetch && obs.held_object.is_some() {
            self.held = obs.held_object.clone();
            self.phase = Phase::Deliver;
            self.plan.clear();
        }
        let off_model = self
            .expected
            .is_some_and(|e| e.position.dist(obs.pose.position) > 1e-6 || wrap_angle(e.heading - obs.pose.heading).abs() > 1e-9);
        if off_model {
            self.plan.clear();
        }
        if let Some(fin) = self.finisher(obs.pose) {
            self.expected = Some(obs.pose);
            return fin;
        }
        if self.plan.is_empty() {
            self.replan(obs);
        }
        match self.plan.pop_front() {
            Some((a, pose)) => {
                self.expected = Some(pose);
                a
            }
            None => {
                // No plan at all on the model: give up.
                self.phase = Phase::Done;
                Action::Stop
            }
        }
    }
}
