//! RRT* over a 2D free-space predicate, with greedy shortcutting.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{Point2, Rect};
use crate::taskgen::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RrtConfig {
    pub samples: usize,
    pub goal_bias: f64,
    /// Maximum edge length, meters.
    pub step: f64,
    /// Resolution of edge collision checks, meters.
    pub check_step: f64,
}

impl Default for RrtConfig {
    fn default() -> Self {
        Self { samples: 2000, goal_bias: 0.1, step: 1.0, check_step: 0.05 }
    }
}

pub trait FreeSpace {
    fn is_free(&self, p: Point2) -> bool;
    fn bounds(&self) -> Rect;
    /// Area of the free region, m^2 (sets the rewiring radius).
    fn free_area(&self) -> f64;
}

pub fn segment_free(space: &dyn FreeSpace, a: Point2, b: Point2, step: f64) -> bool {
    let n = (a.dist(b) / step).ceil().max(1.0) as usize;
    (0..=n).all(|k| space.is_free(a.lerp(b, k as f64 / n as f64)))
}

struct Node {
    p: Point2,
    parent: usize,
    cost: f64,
    children: Vec<usize>,
}

fn shortcut(space: &dyn FreeSpace, pts: Vec<Point2>, step: f64) -> Vec<Point2> {
    if pts.len() <= 2 {
        return pts;
    }
    let mut out = vec![pts[0]];
    let mut i = 0;
    while i < pts.len() - 1 {
        let mut j = pts.len() - 1;
        while j > i + 1 && !segment_free(space, pts[i], pts[j], step) {
            j -= 1;
        }
        out.push(pts[j]);
        i = j;
    }
    out
}

/// Plans from `start` to `goal`. `start == goal` gives a single-waypoint
/// path; `None` when the sample budget finds no connection.
pub fn plan_path<R: Rng>(space: &dyn FreeSpace, start: Point2, goal: Point2, cfg: &RrtConfig, rng: &mut R) -> Option<Path> {
    if start.dist(goal) < 1e-9 {
        return Some(Path { waypoints: vec![start], length: 0.0 });
    }
    if !space.is_free(goal) {
        return None;
    }
    if segment_free(space, start, goal, cfg.check_step) {
        return Some(Path::new(vec![start, goal]));
    }
    let b = space.bounds();
    let gamma = 2.0 * (1.5 * space.free_area() / std::f64::consts::PI).sqrt();
    let mut nodes = vec![Node { p: start, parent: usize::MAX, cost: 0.0, children: Vec::new() }];
    let mut best_goal: Option<(usize, f64)> = None;
    for _ in 0..cfg.samples {
        let target = if rng.gen::<f64>() < cfg.goal_bias {
            goal
        } else {
            Point2::new(rng.gen_range(b.min_x..b.max_x), rng.gen_range(b.min_y..b.max_y))
        };
        let (near_i, near_d) = nodes
            .iter()
            .enumerate()
            .map(|(k, n)| (k, n.p.dist(target)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("tree has a root");
        if near_d < 1e-9 {
            continue;
        }
        let x = if near_d > cfg.step { nodes[near_i].p.lerp(target, cfg.step / near_d) } else { target };
        if !space.is_free(x) || !segment_free(space, nodes[near_i].p, x, cfg.check_step) {
            continue;
        }
        let n = nodes.len() as f64 + 1.0;
        let radius = (gamma * (n.ln() / n).sqrt()).min(cfg.step);
        let near: Vec<usize> = (0..nodes.len()).filter(|&k| nodes[k].p.dist(x) <= radius).collect();
        let mut parent = near_i;
        let mut cost = nodes[near_i].cost + nodes[near_i].p.dist(x);
        for &k in &near {
            let c = nodes[k].cost + nodes[k].p.dist(x);
            if c < cost && segment_free(space, nodes[k].p, x, cfg.check_step) {
                parent = k;
                cost = c;
            }
        }
        let id = nodes.len();
        nodes.push(Node { p: x, parent, cost, children: Vec::new() });
        nodes[parent].children.push(id);
        // Rewire neighbours through the new node.
        for &k in &near {
            if k == parent {
                continue;
            }
            let c = cost + x.dist(nodes[k].p);
            if c + 1e-12 < nodes[k].cost && segment_free(space, x, nodes[k].p, cfg.check_step) {
                let old = nodes[k].parent;
                nodes[old].children.retain(|&ch| ch != k);
                nodes[k].parent = id;
                nodes[id].children.push(k);
                let delta = nodes[k].cost - c;
                let mut stack = vec![k];
                while let Some(s) = stack.pop() {
                    nodes[s].cost -= delta;
                    stack.extend(nodes[s].children.iter().copied());
                }
            }
        }
        let dg = x.dist(goal);
        if dg <= cfg.step && segment_free(space, x, goal, cfg.check_step) {
            let total = cost + dg;
            if best_goal.is_none_or(|(_, c)| total < c) {
                best_goal = Some((id, total));
            }
        }
    }
    // Costs may have improved through rewiring since the goal was linked.
    let (mut k, _) = nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| n.p.dist(goal) <= cfg.step && best_goal.is_some())
        .filter(|(_, n)| segment_free(space, n.p, goal, cfg.check_step))
        .map(|(k, n)| (k, n.cost + n.p.dist(goal)))
        .min_by(|a, b| a.1.total_cmp(&b.1))?;
    let mut pts = vec![goal];
    while k != usize::MAX {
        pts.push(nodes[k].p);
        k = nodes[k].parent;
    }
    pts.reverse();
    Some(Path::new(shortcut(space, pts, cfg.check_step)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Walled {
        bounds: Rect,
        wall: Rect,
    }

    impl FreeSpace for Walled {
        fn is_free(&self, p: Point2) -> bool {
            self.bounds.contains(p) && !self.wall.contains(p)
        }
        fn bounds(&self) -> Rect {
            self.bounds
        }
        fn free_area(&self) -> f64 {
            100.0
        }
    }

    #[test]
    fn detours_around_a_wall() {
        let s = Walled { bounds: Rect::new(0.0, 0.0, 10.0, 10.0), wall: Rect::new(4.0, 0.0, 6.0, 8.0) };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = plan_path(&s, Point2::new(1.0, 1.0), Point2::new(9.0, 1.0), &RrtConfig::default(), &mut rng).unwrap();
        assert!(p.waypoints.windows(2).all(|w| segment_free(&s, w[0], w[1], 0.01)));
        // Shortest route clears the wall end at y = 8.
        let lower = 2.0 * (3.0f64.hypot(7.0)) + 2.0;
        assert!(p.length >= lower - 1e-9 && p.length < lower * 1.15, "{}", p.length);
    }

    #[test]
    fn start_equals_goal() {
        let s = Walled { bounds: Rect::new(0.0, 0.0, 10.0, 10.0), wall: Rect::new(4.0, 0.0, 6.0, 8.0) };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = plan_path(&s, Point2::new(1.0, 1.0), Point2::new(1.0, 1.0), &RrtConfig::default(), &mut rng).unwrap();
        assert_eq!(p.waypoints.len(), 1);
        assert_eq!(p.length, 0.0);
    }
}
