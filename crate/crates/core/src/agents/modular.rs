//! Grounding / memory / decision / action agent.
//!
//! Grounding is the simulator's labelled detections. Memory is a BEV
//! occupancy grid plus every candidate seen. The decision backend picks a
//! candidate (or asks); the action module plans to it with RRT* on the
//! known map and tracks the plan with the discrete move set, replanning
//! whenever newly observed obstacles cut the path.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::f64::consts::{FRAC_PI_4, PI};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::backend::{CandidateView, Decision, DecisionBackend, DecisionRequest};
use super::memory::{BevMemory, Candidate};
use super::rrt::{plan_path, segment_free, FreeSpace};
use super::{episode_seed, goal_category, Agent, AgentConfig, Turn};
use crate::geometry::{wrap_angle, Point2, Rect};
use crate::sim::{Action, Observation, Pose, SimConfig, MOVE_MAGNITUDES};
use crate::taskgen::{Cell, Episode, Path, PlaceRelation, PlacementCondition, Task};
use crate::wkm::InfoCondition;
use crate::world::World;

/// Cells this close to the robot may be entered even if inflated, so a
/// robot resting against an obstacle can still plan away from it.
const START_SLACK: f64 = 0.5;
/// Explored frontier targets suppress new ones within this radius.
const BLACKLIST_RADIUS: f64 = 1.5;
const MIN_PROGRESS: f64 = 1.0;
/// Shortest useful move when it is expected to end in contact.
const CONTACT_MIN_TRAVEL: f64 = 0.3;
const LATTICE_DEPTH: usize = 3;
/// Weight of action time (as metres at nominal speed) against remaining distance.
const LATTICE_COST_WEIGHT: f64 = 0.25;
/// A move that collided after less than this is not retried from the same pose.
const BUMP_TRAVEL: f64 = 0.1;
const MAX_STALLS: usize = 3;
const MAX_FACE_TURNS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
enum GoalKind {
    Object(String),
    Frontier,
}

#[derive(Debug, Clone, PartialEq)]
struct Goal {
    kind: GoalKind,
    point: Point2,
}

struct MemorySpace<'a> {
    mem: &'a BevMemory,
    inflated: &'a [bool],
    start: Point2,
}

impl MemorySpace<'_> {
    fn free_cell(&self, i: usize, j: usize) -> bool {
        let k = j * self.mem.width + i;
        self.inflated[k]
            || (self.mem.center(i, j).dist(self.start) <= START_SLACK
                && !matches!(self.mem.get(i, j), Some(Cell::Obstacle | Cell::Undefined)))
    }
}

impl FreeSpace for MemorySpace<'_> {
    fn is_free(&self, p: Point2) -> bool {
        self.mem.cell_of(p).is_some_and(|(i, j)| self.free_cell(i, j))
    }

    fn bounds(&self) -> Rect {
        let m = self.mem;
        Rect::new(
            m.origin.x,
            m.origin.y,
            m.origin.x + m.width as f64 * m.cell_size,
            m.origin.y + m.height as f64 * m.cell_size,
        )
    }

    fn free_area(&self) -> f64 {
        self.inflated.iter().filter(|&&f| f).count() as f64 * self.mem.cell_size.powi(2)
    }
}

/// Arc length of the closest point on `path` to `p`, and the distance.
fn project(path: &Path, p: Point2) -> (f64, f64) {
    if path.waypoints.len() == 1 {
        return (0.0, p.dist(path.waypoints[0]));
    }
    let mut acc = 0.0;
    let mut best = (0.0, f64::INFINITY);
    for w in path.waypoints.windows(2) {
        let seg = w[1].sub(w[0]);
        let len = seg.norm();
        let t = if len > 0.0 { (p.sub(w[0]).dot(seg) / (len * len)).clamp(0.0, 1.0) } else { 0.0 };
        let d = p.dist(w[0].lerp(w[1], t));
        if d < best.1 {
            best = (acc + t * len, d);
        }
        acc += len;
    }
    best
}

fn point_at(path: &Path, s: f64) -> Point2 {
    let mut acc = 0.0;
    for w in path.waypoints.windows(2) {
        let len = w[0].dist(w[1]);
        if acc + len >= s && len > 0.0 {
            return w[0].lerp(w[1], ((s - acc) / len).clamp(0.0, 1.0));
        }
        acc += len;
    }
    path.end()
}

fn turn_toward(pose: Pose, p: Point2) -> Action {
    let d = p.sub(pose.position);
    let b = wrap_angle(d.y.atan2(d.x) - pose.heading);
    if b >= 0.0 {
        Action::TurnLeft90
    } else {
        Action::TurnRight90
    }
}

fn moves() -> impl Iterator<Item = (f64, Action)> {
    MOVE_MAGNITUDES.into_iter().flat_map(|m| {
        [
            (0.0, Action::MoveForward { magnitude: m }),
            (FRAC_PI_4, Action::AdvanceLeft { magnitude: m }),
            (-FRAC_PI_4, Action::AdvanceRight { magnitude: m }),
        ]
    })
}

pub struct ModularAgent {
    world: Arc<World>,
    sim: SimConfig,
    cfg: AgentConfig,
    backend: Box<dyn DecisionBackend>,
    pub memory: BevMemory,
    /// Plans discarded because newly observed obstacles cut them.
    pub replans: usize,
    pub plans: usize,
    pub backend_failures: usize,
    task: Task,
    goal_category: String,
    conditions: Vec<PlacementCondition>,
    rng: ChaCha8Rng,
    scan_left: usize,
    asks: usize,
    npc_exhausted: bool,
    asked_last: bool,
    holding: bool,
    blacklist: Vec<Point2>,
    goal: Option<Goal>,
    plan: Option<Path>,
    plan_revision: u64,
    stalls: usize,
    face_turns: usize,
    inflated: Vec<bool>,
    inflated_revision: u64,
    last_action: Option<Action>,
    last_pose: Option<Pose>,
    /// Moves that went nowhere, keyed by the pose they were tried from.
    bumps: Vec<(Pose, Action)>,
}

impl ModularAgent {
    /// `world` supplies only the map frame and the category vocabulary;
    /// occupancy is learned from observations.
    pub fn new(world: Arc<World>, sim: SimConfig, cfg: AgentConfig, backend: Box<dyn DecisionBackend>) -> Self {
        let g = &world.coarse;
        let memory = BevMemory::new(g.width, g.height, g.cell_size, g.origin);
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Self {
            world,
            sim,
            cfg,
            backend,
            memory,
            replans: 0,
            plans: 0,
            backend_failures: 0,
            task: Task::ObjectLoconav,
            goal_category: String::new(),
            conditions: Vec::new(),
            rng,
            scan_left: 0,
            asks: 0,
            npc_exhausted: false,
            asked_last: false,
            holding: false,
            blacklist: Vec::new(),
            goal: None,
            plan: None,
            plan_revision: 0,
            stalls: 0,
            face_turns: 0,
            inflated: Vec::new(),
            inflated_revision: u64::MAX,
            last_action: None,
            last_pose: None,
            bumps: Vec::new(),
        }
    }

    fn space(&self, start: Point2) -> MemorySpace<'_> {
        MemorySpace { mem: &self.memory, inflated: &self.inflated, start }
    }

    fn refresh_inflated(&mut self) {
        if self.inflated_revision != self.memory.revision || self.inflated.is_empty() {
            self.inflated = self.memory.inflated(self.sim.robot_radius);
            self.inflated_revision = self.memory.revision;
        }
    }

    fn bumped(&self, pose: Pose, a: &Action) -> bool {
        // Longer moves in a direction that went nowhere go nowhere too.
        let (Some((dh, mag)), true) = (a.motion(), true) else { return false };
        self.bumps.iter().any(|(p, b)| {
            b.motion().is_some_and(|(bdh, bmag)| bdh == dh && bmag <= mag)
                && p.position.dist(pose.position) < BUMP_TRAVEL
                && wrap_angle(p.heading - pose.heading).abs() < 1e-3
        })
    }

    fn blacklisted(&self, p: Point2) -> bool {
        self.blacklist.iter().any(|b| b.dist(p) < BLACKLIST_RADIUS)
    }

    /// Geodesic distance over passable memory cells from `start`.
    fn field(&self, start: Point2) -> Vec<f64> {
        self.field_from(start, start)
    }

    /// Geodesic distance from `start`, with the start slack around `robot`.
    fn field_from(&self, start: Point2, robot: Point2) -> Vec<f64> {
        let m = &self.memory;
        let (w, h) = (m.width, m.height);
        let space = self.space(robot);
        let mut dist = vec![f64::INFINITY; w * h];
        let Some((si, sj)) = m.cell_of(start) else { return dist };
        let mut heap = BinaryHeap::new();
        dist[sj * w + si] = 0.0;
        heap.push((Reverse(0u64), sj * w + si));
        let c = m.cell_size;
        while let Some((Reverse(dk), k)) = heap.pop() {
            let d = dk as f64 * 1e-6;
            if d > dist[k] + 1e-9 {
                continue;
            }
            let (i, j) = ((k % w) as i64, (k / w) as i64);
            for (di, dj) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)] {
                let (ni, nj) = (i + di, j + dj);
                if ni < 0 || nj < 0 || ni as usize >= w || nj as usize >= h {
                    continue;
                }
                if !space.free_cell(ni as usize, nj as usize) {
                    continue;
                }
                let nk = nj as usize * w + ni as usize;
                let nd = d + if di != 0 && dj != 0 { c * std::f64::consts::SQRT_2 } else { c };
                if nd + 1e-9 < dist[nk] {
                    dist[nk] = nd;
                    heap.push((Reverse((nd * 1e6) as u64), nk));
                }
            }
        }
        dist
    }

    fn nearest_cell(&self, field: &[f64], accept: impl Fn(Point2) -> bool) -> Option<Point2> {
        let m = &self.memory;
        let mut best: Option<(f64, Point2)> = None;
        for (k, &d) in field.iter().enumerate() {
            if !d.is_finite() || best.is_some_and(|(b, _)| d >= b) {
                continue;
            }
            let p = m.center(k % m.width, k / m.width);
            if accept(p) && !self.blacklisted(p) {
                best = Some((d, p));
            }
        }
        best.map(|(_, p)| p)
    }

    /// Distance band (from the object footprint) of cells to approach from.
    fn approach_band(&self) -> (f64, f64) {
        match self.task {
            Task::LocoManip => (0.45, 1.4),
            _ => (0.5, self.sim.success_range - 0.8),
        }
    }

    fn set_goal(&mut self, pos: Point2, object: Option<&Candidate>) -> bool {
        let field = self.field(pos);
        if let Some(c) = object {
            let fp = c.aabb.footprint();
            let (lo, hi) = self.approach_band();
            if let Some(p) = self.nearest_cell(&field, |p| (lo..=hi).contains(&fp.distance_to_point(p))) {
                self.goal = Some(Goal { kind: GoalKind::Object(c.instance_id.clone()), point: p });
                self.plan = None;
                return true;
            }
        }
        let frontier: BTreeSet<(usize, usize)> = self.memory.frontier().into_iter().collect();
        let m = &self.memory;
        let p = self.nearest_cell(&field, |p| {
            p.dist(pos) >= MOVE_MAGNITUDES[0] && m.cell_of(p).is_some_and(|c| frontier.contains(&c))
        });
        match p {
            Some(p) => {
                self.goal = Some(Goal { kind: GoalKind::Frontier, point: p });
                self.plan = None;
                true
            }
            None => {
                self.goal = None;
                false
            }
        }
    }

    fn drop_goal(&mut self, at: Point2) {
        self.blacklist.push(at);
        self.goal = None;
        self.plan = None;
        self.stalls = 0;
        self.face_turns = 0;
    }

    fn make_plan(&mut self, pos: Point2, goal: Point2) -> Option<Path> {
        self.plans += 1;
        let cfg = self.cfg.rrt.clone();
        let mut rng = std::mem::replace(&mut self.rng, ChaCha8Rng::seed_from_u64(0));
        let p = plan_path(&self.space(pos), pos, goal, &cfg, &mut rng);
        self.rng = rng;
        p
    }

    fn plan_valid(&self, pos: Point2, path: &Path) -> bool {
        let space = self.space(pos);
        let (s, _) = project(path, pos);
        let mut pts = vec![pos];
        let mut acc = 0.0;
        for w in path.waypoints.windows(2) {
            acc += w[0].dist(w[1]);
            if acc > s {
                pts.push(w[1]);
            }
        }
        pts.windows(2).all(|w| segment_free(&space, w[0], w[1], self.cfg.rrt.check_step))
    }

    fn track(&mut self, pose: Pose, path: &Path) -> Action {
        let pos = pose.position;
        let space = self.space(pos);
        let (s_now, _) = project(path, pos);
        let mut best: Option<((bool, f64), Action)> = None;
        for (dh, a) in moves() {
            let mag = a.motion().map_or(0.0, |m| m.1);
            let landing = pos.add(Point2::from_heading(pose.heading + dh).scale(mag));
            if self.bumped(pose, &a) || !segment_free(&space, pos, landing, self.cfg.rrt.check_step) {
                continue;
            }
            let (s, d) = project(path, landing);
            let progress = s - s_now;
            if progress < MIN_PROGRESS {
                continue;
            }
            // Sharp path corners can leave every move just outside the band;
            // the shortest move gets a looser fit rather than a turn dither.
            let strict = d <= self.cfg.track_tolerance;
            let loose = mag <= MOVE_MAGNITUDES[0] && d <= 2.0 * self.cfg.track_tolerance;
            let rank = (strict, progress);
            if (strict || loose) && best.as_ref().is_none_or(|b| rank.0 > b.0 .0 || (rank.0 == b.0 .0 && rank.1 > b.0 .1 + 1e-9)) {
                best = Some((rank, a));
            }
        }
        if let Some((_, a)) = best {
            self.stalls = 0;
            return a;
        }
        if let Some(a) = self.contact_fit(pose, path, s_now).or_else(|| self.lattice_escape(pose, path.end())) {
            return a;
        }
        let ahead = point_at(path, s_now + MOVE_MAGNITUDES[0]);
        let d = ahead.sub(pos);
        let b = wrap_angle(d.y.atan2(d.x) - pose.heading);
        if b.abs() <= 3.0 * PI / 8.0 {
            // Facing the path but nothing fits it: try another plan.
            self.stalls += 1;
            self.plan = None;
            if self.stalls >= MAX_STALLS {
                tracing::debug!(x = pos.x, y = pos.y, "tracker stalled, abandoning goal");
                if let Some(g) = self.goal.clone() {
                    self.drop_goal(g.point);
                }
            }
        }
        turn_toward(pose, ahead)
    }

    /// Best move whose predicted stop against a known obstacle still
    /// advances along `path`.
    fn contact_fit(&self, pose: Pose, path: &Path, s_now: f64) -> Option<Action> {
        let pos = pose.position;
        let step = 0.02;
        // Remembered obstacles are padded by up to a cell; the simulator
        // stops the move at the real contact.
        let radius = self.sim.robot_radius - self.memory.cell_size;
        let mut best: Option<(f64, Action)> = None;
        for (dh, a) in moves() {
            if self.bumped(pose, &a) {
                continue;
            }
            let mag = a.motion().map_or(0.0, |m| m.1);
            let dir = Point2::from_heading(pose.heading + dh);
            let mut t = 0.0;
            while t + step <= mag && self.memory.disc_free(pos.add(dir.scale(t + step)), radius) {
                t += step;
            }
            if t < CONTACT_MIN_TRAVEL {
                continue;
            }
            let (s, d) = project(path, pos.add(dir.scale(t)));
            let progress = s - s_now;
            if progress >= CONTACT_MIN_TRAVEL
                && d <= self.cfg.track_tolerance
                && best.as_ref().is_none_or(|b| progress > b.0 + 1e-9)
            {
                best = Some((progress, a));
            }
        }
        best.map(|b| b.1)
    }

    /// Lowest field value within a couple of cells of `p`; a robot resting
    /// against an obstacle sits in cells the field does not cover.
    fn field_value(&self, field: &[f64], p: Point2) -> f64 {
        let m = &self.memory;
        let Some((i, j)) = m.cell_of(p) else { return f64::INFINITY };
        let mut best = f64::INFINITY;
        for nj in j.saturating_sub(2)..(j + 3).min(m.height) {
            for ni in i.saturating_sub(2)..(i + 3).min(m.width) {
                let v = field[nj * m.width + ni];
                if v.is_finite() {
                    best = best.min(v + m.center(ni, nj).dist(p));
                }
            }
        }
        best
    }

    /// Where a move is expected to stop on the known map.
    fn predict_move(&self, pose: Pose, a: &Action) -> Option<Pose> {
        let (dh, mag) = a.motion()?;
        let heading = pose.heading + dh;
        let dir = Point2::from_heading(heading);
        let radius = self.sim.robot_radius - self.memory.cell_size;
        let step = 0.05;
        let mut t = 0.0;
        while t + step <= mag + 1e-9 && self.memory.disc_free(pose.position.add(dir.scale(t + step)), radius) {
            t += step;
        }
        (t >= step).then(|| Pose { position: pose.position.add(dir.scale(t)), heading })
    }

    fn lattice_search(&self, field: &[f64], pose: Pose, depth: usize, cost: f64, first: Option<&Action>, best: &mut Option<(f64, f64, Action)>) {
        if let Some(a) = first {
            let v = self.field_value(field, pose.position);
            let score = v + LATTICE_COST_WEIGHT * cost;
            if v.is_finite() && best.as_ref().is_none_or(|b| score < b.0 - 1e-9) {
                *best = Some((score, v, a.clone()));
            }
        }
        if depth == LATTICE_DEPTH {
            return;
        }
        for a in [Action::TurnLeft90, Action::TurnRight90].into_iter().chain(moves().map(|m| m.1)) {
            let (next, secs) = match a.turn() {
                Some(d) => (pose.turned(d), self.sim.turn_time),
                None => {
                    if first.is_none() && self.bumped(pose, &a) {
                        continue;
                    }
                    let Some(next) = self.predict_move(pose, &a) else { continue };
                    (next, a.motion().map_or(0.0, |m| m.1) / self.sim.nominal_speed)
                }
            };
            let f = first.cloned().unwrap_or_else(|| a.clone());
            self.lattice_search(field, next, depth + 1, cost + secs * self.sim.nominal_speed, Some(&f), best);
        }
    }

    /// A few steps of turns and moves, predicted to stop at contact, that
    /// bring the robot geodesically closer to `goal`. Used when no single
    /// move follows the plan.
    fn lattice_escape(&self, pose: Pose, goal: Point2) -> Option<Action> {
        let field = self.field_from(goal, pose.position);
        let now = self.field_value(&field, pose.position);
        if !now.is_finite() {
            return None;
        }
        let mut best = None;
        self.lattice_search(&field, pose, 0, 0.0, None, &mut best);
        best.filter(|b| b.1 <= now - CONTACT_MIN_TRAVEL).map(|b| b.2)
    }

    fn navigate(&mut self, pose: Pose) -> Option<Action> {
        let pos = pose.position;
        for _ in 0..4 {
            let goal = self.goal.clone()?;
            if goal.kind == GoalKind::Frontier && pos.dist(goal.point) < MOVE_MAGNITUDES[0] {
                self.drop_goal(goal.point);
                return None;
            }
            if let Some(p) = &self.plan {
                if self.plan_revision != self.memory.revision {
                    if !self.plan_valid(pos, p) {
                        self.replans += 1;
                        tracing::debug!(replans = self.replans, "path cut by newly observed obstacles, replanning");
                        self.plan = None;
                    } else {
                        self.plan_revision = self.memory.revision;
                    }
                }
            }
            if self.plan.is_none() {
                match self.make_plan(pos, goal.point) {
                    Some(p) => {
                        self.plan = Some(p);
                        self.plan_revision = self.memory.revision;
                    }
                    None => {
                        self.drop_goal(goal.point);
                        return None;
                    }
                }
            }
            let path = self.plan.clone().expect("planned above");
            let a = self.track(pose, &path);
            if self.goal.is_some() {
                return Some(a);
            }
        }
        None
    }

    /// Stop when the chosen candidate is in view and range; turn toward it
    /// when it is close but out of view.
    fn finish_nav(&mut self, obs: &Observation, c: &Candidate) -> Option<Action> {
        let pos = obs.pose.position;
        let in_view = obs
            .visible_objects
            .iter()
            .any(|d| d.instance_id == c.instance_id && d.range < self.sim.success_range - 1e-6);
        if in_view {
            return Some(Action::Stop);
        }
        let fp = c.aabb.footprint();
        if fp.distance_to_point(pos) < self.sim.success_range - 0.3 {
            if self.face_turns < MAX_FACE_TURNS {
                self.face_turns += 1;
                return Some(turn_toward(obs.pose, fp.nearest_point(pos)));
            }
            // Occluded from here; look from elsewhere.
            self.drop_goal(pos);
        }
        None
    }

    /// A move whose predicted stop on the known map leaves `fp` in reach.
    fn contact_move(&self, pose: Pose, fp: &Rect) -> Option<Action> {
        let pos = pose.position;
        let space = self.space(pos);
        let step = 0.02;
        let mut best: Option<(f64, f64, Action)> = None;
        for (dh, a) in moves() {
            let mag = a.motion().map_or(0.0, |m| m.1);
            let dir = Point2::from_heading(pose.heading + dh);
            let mut t = 0.0;
            while t + step <= mag && space.is_free(pos.add(dir.scale(t + step))) {
                t += step;
            }
            if t < 0.05 {
                continue;
            }
            let landing = pos.add(dir.scale(t));
            let reach = (fp.distance_to_point(landing) - self.sim.robot_radius).max(0.0);
            if reach <= self.sim.reach - 0.05 && best.as_ref().is_none_or(|b| (mag, dh.abs()) < (b.0, b.1)) {
                best = Some((mag, dh.abs(), a));
            }
        }
        best.map(|b| b.2)
    }

    fn manipulate(&mut self, obs: &Observation, c: &Candidate) -> Option<Action> {
        let pos = obs.pose.position;
        let fp = c.aabb.footprint();
        let reach = (fp.distance_to_point(pos) - self.sim.robot_radius).max(0.0);
        if reach <= self.sim.reach {
            return Some(if self.holding {
                let relation = self.conditions.first().map_or(PlaceRelation::On, |k| k.relation);
                Action::Place { relation, receptacle: c.instance_id.clone() }
            } else {
                Action::Pick { object: c.instance_id.clone() }
            });
        }
        if fp.distance_to_point(pos) < 2.5 {
            if let Some(a) = self.contact_move(obs.pose, &fp) {
                self.face_turns = 0;
                return Some(a);
            }
            if self.face_turns < MAX_FACE_TURNS {
                self.face_turns += 1;
                return Some(turn_toward(obs.pose, fp.nearest_point(pos)));
            }
            self.drop_goal(pos);
        }
        None
    }

    fn goal_spec(&self) -> (String, Vec<InfoCondition>) {
        if self.task == Task::LocoManip && self.holding {
            let spec = self.conditions.first().map(|c| c.receptacle_spec.clone()).unwrap_or_default();
            (spec.category.clone().unwrap_or_default(), vec![spec])
        } else {
            (self.goal_category.clone(), self.memory.goal_info.clone())
        }
    }

    fn request(&self, obs: &Observation) -> DecisionRequest {
        let pos = obs.pose.position;
        let (goal, goal_info) = self.goal_spec();
        let mut cands: Vec<&Candidate> = self
            .memory
            .candidates
            .values()
            .filter(|c| c.category == goal && obs.held_object.as_deref() != Some(c.instance_id.as_str()))
            .collect();
        cands.sort_by(|a, b| {
            a.aabb.footprint().distance_to_point(pos).total_cmp(&b.aabb.footprint().distance_to_point(pos)).then(a.instance_id.cmp(&b.instance_id))
        });
        let candidates = cands
            .iter()
            .enumerate()
            .map(|(k, c)| CandidateView { index: k, description: c.description.clone(), instance_id: c.instance_id.clone() })
            .collect();
        let history = self.memory.history.iter().rev().take(5).rev().map(|(a, o)| format!("{a}: {o}")).collect::<Vec<_>>().join("; ");
        DecisionRequest {
            goal,
            candidates,
            goal_info: goal_info.into_iter().filter(|c| !c.is_empty()).collect(),
            history,
            can_ask: self.task == Task::SocialLoconav && self.asks < self.cfg.max_asks && !self.npc_exhausted,
        }
    }

    fn decide_action(&mut self, obs: &Observation) -> Action {
        if self.scan_left > 0 {
            self.scan_left -= 1;
            return Action::TurnLeft90;
        }
        self.refresh_inflated();
        let pos = obs.pose.position;
        let req = self.request(obs);
        let decision = match self.backend.decide(&req) {
            Ok(d) => d,
            Err(e) => {
                self.backend_failures += 1;
                tracing::warn!(error = %e, backend = self.backend.name(), "decision backend failed, holding");
                return Action::TurnLeft90;
            }
        };
        let chosen = match decision {
            Decision::Ask(q) if req.can_ask => {
                self.asks += 1;
                self.asked_last = true;
                return Action::Ask { question: q };
            }
            Decision::Stop => return Action::Stop,
            Decision::Choose(k) => self.memory.candidates.get(&req.candidates[k].instance_id).cloned(),
            Decision::Ask(_) | Decision::Explore => None,
        };
        for _ in 0..4 {
            if let Some(c) = &chosen {
                let finishing = match self.task {
                    Task::LocoManip => self.manipulate(obs, c),
                    _ => self.finish_nav(obs, c),
                };
                if let Some(a) = finishing {
                    return a;
                }
            }
            let wanted = chosen.as_ref().map(|c| GoalKind::Object(c.instance_id.clone()));
            let current = self.goal.as_ref().map(|g| g.kind.clone());
            let keep = match (&wanted, &current) {
                (Some(w), Some(c)) => w == c,
                (None, Some(GoalKind::Frontier)) => true,
                _ => false,
            };
            if !keep && !self.set_goal(pos, chosen.as_ref()) {
                // Nothing left to explore on the known map.
                return Action::Stop;
            }
            if let Some(a) = self.navigate(obs.pose) {
                if a.motion().is_some() {
                    self.face_turns = 0;
                }
                return a;
            }
        }
        Action::TurnLeft90
    }
}

impl Agent for ModularAgent {
    fn name(&self) -> &str {
        "modular"
    }

    fn reset(&mut self, episode: &Episode, _obs: &Observation) {
        let g = &self.world.coarse;
        self.memory = BevMemory::new(g.width, g.height, g.cell_size, g.origin);
        self.task = episode.task;
        self.rng = ChaCha8Rng::seed_from_u64(episode_seed(self.cfg.seed, &episode.episode_id));
        let categories: BTreeSet<String> = self.world.scene.objects.values().map(|o| o.category.clone()).collect();
        // The instruction names the goal category; fall back to the target's
        // for categories the tokenizer splits.
        self.goal_category = goal_category(&episode.instruction, &categories)
            .or_else(|| self.world.graph.category(&episode.target).map(str::to_string))
            .unwrap_or_default();
        self.memory.goal_info = match episode.task {
            Task::SocialLoconav => episode.instruction_trace.clone(),
            _ => episode.constraint_trace.clone(),
        };
        self.conditions = episode.conditions.clone();
        self.replans = 0;
        self.plans = 0;
        self.backend_failures = 0;
        self.scan_left = self.cfg.scan_turns;
        self.asks = 0;
        self.npc_exhausted = false;
        self.asked_last = false;
        self.holding = false;
        self.blacklist.clear();
        self.goal = None;
        self.plan = None;
        self.stalls = 0;
        self.face_turns = 0;
        self.inflated_revision = u64::MAX;
        self.last_action = None;
        self.last_pose = None;
        self.bumps.clear();
    }

    fn act(&mut self, turn: Turn<'_>) -> Action {
        let obs = turn.obs;
        self.memory.observe(obs);
        if let Some(a) = self.last_action.take() {
            self.memory.record(&a, obs);
            if let (Some(prev), Some(out)) = (self.last_pose, turn.last) {
                if out.collided && prev.position.dist(obs.pose.position) < BUMP_TRAVEL {
                    self.bumps.push((prev, a));
                }
            }
        }
        if self.asked_last {
            self.asked_last = false;
            if turn.disclosed.is_none() {
                self.npc_exhausted = true;
            }
        }
        if let Some(d) = turn.disclosed {
            self.memory.goal_info.push(d.clone());
        }
        let holding = obs.held_object.is_some();
        if holding != self.holding {
            self.holding = holding;
            self.goal = None;
            self.plan = None;
            self.blacklist.clear();
        }
        if turn.last.is_some_and(|o| o.collided) {
            tracing::trace!("contact reported by the simulator");
        }
        let a = self.decide_action(obs);
        self.last_action = Some(a.clone());
        self.last_pose = Some(obs.pose);
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_along_polyline() {
        let p = Path::new(vec![Point2::new(0.0, 0.0), Point2::new(4.0, 0.0), Point2::new(4.0, 4.0)]);
        let (s, d) = project(&p, Point2::new(2.0, 1.0));
        assert!((s - 2.0).abs() < 1e-12 && (d - 1.0).abs() < 1e-12);
        let (s, d) = project(&p, Point2::new(5.0, 3.0));
        assert!((s - 7.0).abs() < 1e-12 && (d - 1.0).abs() < 1e-12);
        assert_eq!(point_at(&p, 6.0), Point2::new(4.0, 2.0));
        assert_eq!(point_at(&p, 100.0), Point2::new(4.0, 4.0));
    }

    #[test]
    fn turn_direction_follows_bearing() {
        let pose = Pose::new(0.0, 0.0, 0.0);
        assert_eq!(turn_toward(pose, Point2::new(0.0, 1.0)), Action::TurnLeft90);
        assert_eq!(turn_toward(pose, Point2::new(0.0, -1.0)), Action::TurnRight90);
    }
}
