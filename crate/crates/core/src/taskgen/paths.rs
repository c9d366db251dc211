use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::occupancy::Traversability;
use super::TaskGenError;
use crate::geometry::{Point2, Rect};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub waypoints: Vec<Point2>,
    pub length: f64,
}

impl Path {
    pub fn new(waypoints: Vec<Point2>) -> Self {
        let length = polyline_length(&waypoints);
        Self { waypoints, length }
    }

    pub fn start(&self) -> Point2 {
        self.waypoints[0]
    }

    pub fn end(&self) -> Point2 {
        *self.waypoints.last().unwrap()
    }
}

pub fn polyline_length(pts: &[Point2]) -> f64 {
    pts.windows(2).map(|w| w[0].dist(w[1])).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathConfig {
    pub robot_radius: f64,
    pub min_length: f64,
    pub max_length: f64,
    /// Approach cells lie within this distance of the goal's footprint.
    pub approach_radius: f64,
    pub max_attempts: usize,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self { robot_radius: 0.34, min_length: 7.0, max_length: 20.0, approach_radius: 2.5, max_attempts: 200 }
    }
}

#[derive(PartialEq)]
struct Item(f64, u32);

impl Eq for Item {}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// 8-connected geodesic distance (meters) over traversable cells from a set
/// of source cells, cut off at `limit`.
#[derive(Debug, Clone)]
pub struct DistanceField {
    pub width: usize,
    pub height: usize,
    dist: Vec<f32>,
    pub limit: f64,
}

const NEIGHBOURS: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

impl DistanceField {
    pub fn compute(t: &Traversability, sources: &[(usize, usize)], limit: f64) -> Self {
        let (w, h) = (t.width, t.height);
        let mut dist = vec![f32::INFINITY; w * h];
        let mut exact = vec![f64::INFINITY; w * h];
        let mut heap = BinaryHeap::new();
        for &(i, j) in sources {
            if t.ok(i, j) {
                let k = j * w + i;
                exact[k] = 0.0;
                heap.push(Item(0.0, k as u32));
            }
        }
        let c = t.cell_size;
        let diag = c * std::f64::consts::SQRT_2;
        while let Some(Item(d, k)) = heap.pop() {
            let k = k as usize;
            if d > exact[k] || dist[k].is_finite() {
                continue;
            }
            dist[k] = d as f32;
            let (i, j) = ((k % w) as i64, (k / w) as i64);
            for (di, dj) in NEIGHBOURS {
                let (ni, nj) = (i + di, j + dj);
                if !t.ok_signed(ni, nj) {
                    continue;
                }
                // No corner cutting between two blocked cells.
                if di != 0 && dj != 0 && !(t.ok_signed(i + di, j) && t.ok_signed(i, j + dj)) {
                    continue;
                }
                let nk = nj as usize * w + ni as usize;
                let nd = d + if di != 0 && dj != 0 { diag } else { c };
                if nd < exact[nk] && nd <= limit {
                    exact[nk] = nd;
                    heap.push(Item(nd, nk as u32));
                }
            }
        }
        Self { width: w, height: h, dist, limit }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.dist[j * self.width + i] as f64
    }

    pub fn reachable(&self, i: usize, j: usize) -> bool {
        self.dist[j * self.width + i].is_finite()
    }

    /// Steepest-descent cell chain from `(i, j)` to a source.
    pub fn descend(&self, t: &Traversability, start: (usize, usize)) -> Option<Vec<(usize, usize)>> {
        if !self.reachable(start.0, start.1) {
            return None;
        }
        let mut out = vec![start];
        let (mut i, mut j) = (start.0 as i64, start.1 as i64);
        loop {
            let here = self.at(i as usize, j as usize);
            if here == 0.0 {
                return Some(out);
            }
            let mut best = (here, i, j);
            for (di, dj) in NEIGHBOURS {
                let (ni, nj) = (i + di, j + dj);
                if !t.ok_signed(ni, nj) {
                    continue;
                }
                if di != 0 && dj != 0 && !(t.ok_signed(i + di, j) && t.ok_signed(i, j + dj)) {
                    continue;
                }
                let v = self.at(ni as usize, nj as usize);
                if v < best.0 {
                    best = (v, ni, nj);
                }
            }
            if best.1 == i && best.2 == j {
                return None;
            }
            i = best.1;
            j = best.2;
            out.push((i as usize, j as usize));
        }
    }
}

/// Greedy line-of-sight shortcutting of a cell chain.
pub fn smooth(t: &Traversability, chain: &[(usize, usize)]) -> Vec<Point2> {
    let pts: Vec<Point2> = chain.iter().map(|&(i, j)| t.center(i, j)).collect();
    if pts.len() <= 2 {
        return if pts.len() == 1 { vec![pts[0], pts[0]] } else { pts };
    }
    let mut out = vec![pts[0]];
    let mut anchor = 0;
    let mut j = 1;
    while j < pts.len() {
        if j + 1 < pts.len() && t.segment_ok(pts[anchor], pts[j + 1]) {
            j += 1;
            continue;
        }
        out.push(pts[j]);
        anchor = j;
        j += 1;
    }
    out
}

/// Nearest traversable cell to `footprint` within `radius` (ties by index),
/// optionally restricted by `accept`.
pub fn approach_cell(
    t: &Traversability,
    footprint: &Rect,
    radius: f64,
    mut accept: impl FnMut(Point2) -> bool,
) -> Option<(usize, usize)> {
    let r = Rect::new(footprint.min_x - radius, footprint.min_y - radius, footprint.max_x + radius, footprint.max_y + radius);
    let lo = t.cell_of(Point2::new(r.min_x, r.min_y)).map(|c| (c.0, c.1));
    let (i0, j0) = lo.unwrap_or((0, 0));
    let i0 = if r.min_x < t.origin.x { 0 } else { i0 };
    let j0 = if r.min_y < t.origin.y { 0 } else { j0 };
    let i1 = (((r.max_x - t.origin.x) / t.cell_size).ceil().max(0.0) as usize).min(t.width);
    let j1 = (((r.max_y - t.origin.y) / t.cell_size).ceil().max(0.0) as usize).min(t.height);
    let mut cands = Vec::new();
    for j in j0..j1 {
        for i in i0..i1 {
            if !t.ok(i, j) {
                continue;
            }
            let d = footprint.distance_to_point(t.center(i, j));
            if d <= radius {
                cands.push((d, j * t.width + i));
            }
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cands.into_iter().map(|(_, k)| (k % t.width, k / t.width)).find(|&(i, j)| accept(t.center(i, j)))
}

/// Paths to one goal cell; the distance field is computed once and reused
/// across start resamples.
#[derive(Debug, Clone)]
pub struct GoalPaths {
    pub goal: (usize, usize),
    pub field: DistanceField,
    starts: Vec<u32>,
}

impl GoalPaths {
    pub fn new(t: &Traversability, goal: (usize, usize), cfg: &PathConfig) -> Self {
        // 8-connected grid paths exceed any-angle lengths by < 8.3%.
        let limit = cfg.max_length * 1.0824 + 4.0 * t.cell_size;
        let field = DistanceField::compute(t, &[goal], limit);
        let mut starts = Vec::new();
        for j in 0..t.height {
            for i in 0..t.width {
                let d = field.at(i, j);
                if d.is_finite() && d >= cfg.min_length {
                    starts.push((j * t.width + i) as u32);
                }
            }
        }
        Self { goal, field, starts }
    }

    pub fn has_candidates(&self) -> bool {
        !self.starts.is_empty()
    }

    /// Path from `start` to the goal, if reachable.
    pub fn path_from(&self, t: &Traversability, start: (usize, usize)) -> Option<Path> {
        let chain = self.field.descend(t, start)?;
        Some(Path::new(smooth(t, &chain)))
    }

    /// Rejection-samples a start until the smoothed path length is in range.
    pub fn sample<R: Rng>(&self, t: &Traversability, cfg: &PathConfig, rng: &mut R) -> Result<Path, TaskGenError> {
        if self.starts.is_empty() {
            return Err(TaskGenError::TargetExcluded("no start cell within the length bounds".into()));
        }
        for _ in 0..cfg.max_attempts {
            let k = self.starts[rng.gen_range(0..self.starts.len())] as usize;
            let start = (k % t.width, k / t.width);
            if let Some(p) = self.path_from(t, start) {
                if p.length >= cfg.min_length && p.length <= cfg.max_length {
                    return Ok(p);
                }
            }
        }
        Err(TaskGenError::TargetExcluded(format!("no path in [{}, {}] m after {} attempts", cfg.min_length, cfg.max_length, cfg.max_attempts)))
    }
}
