//! Disc-robot motion against the occupancy grid: sphere tracing on the
//! clearance field, refined by exact ray tests against rounded cell squares.

use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Point2};
use crate::taskgen::{Cell, OccupancyMap};
use crate::world::World;

const CONTACT_EPS: f64 = 1e-9;
/// Below this margin sphere tracing hands over to the exact test.
const EXACT_MARGIN: f64 = 0.02;
const WINDOW: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Point2,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { position: Point2::new(x, y), heading }
    }

    pub fn turned(self, delta: f64) -> Self {
        Self { position: self.position, heading: wrap_angle(self.heading + delta) }
    }
}

/// Result of sweeping the disc along a straight segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sweep {
    pub end: Point2,
    pub travel: f64,
    pub collided: bool,
}

fn blocked(map: &OccupancyMap, i: i64, j: i64) -> bool {
    !map.in_bounds(i, j) || map.get(i as usize, j as usize) != Cell::Free
}

/// Entry parameter of the ray `p + t d` (|d| = 1) into the square
/// `[x0, x1] x [y0, y1]` grown by `r`, ignoring contacts the ray is leaving.
fn rounded_rect_entry(p: Point2, d: Point2, x0: f64, y0: f64, x1: f64, y1: f64, r: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut take = |t_in: f64, t_out: f64| {
        if t_out > CONTACT_EPS && t_in <= t_out {
            let t = t_in.max(0.0);
            best = Some(best.map_or(t, |b: f64| b.min(t)));
        }
    };
    let slab = |lx: f64, ly: f64, hx: f64, hy: f64| -> Option<(f64, f64)> {
        let (lx, ly, hx, hy) = (lx + CONTACT_EPS, ly + CONTACT_EPS, hx - CONTACT_EPS, hy - CONTACT_EPS);
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for (o, v, lo, hi) in [(p.x, d.x, lx, hx), (p.y, d.y, ly, hy)] {
            if v.abs() < 1e-15 {
                if o <= lo || o >= hi {
                    return None;
                }
            } else {
                let (a, b) = ((lo - o) / v, (hi - o) / v);
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
        }
        (t0 < t1).then_some((t0, t1))
    };
    if let Some((a, b)) = slab(x0 - r, y0, x1 + r, y1) {
        take(a, b);
    }
    if let Some((a, b)) = slab(x0, y0 - r, x1, y1 + r) {
        take(a, b);
    }
    let rr = (r - CONTACT_EPS).max(0.0);
    for (cx, cy) in [(x0, y0), (x1, y0), (x0, y1), (x1, y1)] {
        let f = Point2::new(p.x - cx, p.y - cy);
        let b = f.dot(d);
        let c = f.dot(f) - rr * rr;
        let disc = b * b - c;
        if disc > 0.0 {
            let s = disc.sqrt();
            take(-b - s, -b + s);
        }
    }
    best
}

/// Earliest contact in `[0, t1]` along the ray, exact over every blocked
/// cell that could be reached.
fn exact_contact(map: &OccupancyMap, p: Point2, d: Point2, t0: f64, t1: f64, r: f64) -> Option<f64> {
    let a = p.add(d.scale(t0));
    let b = p.add(d.scale(t1));
    let c = map.cell_size;
    let lo_i = ((a.x.min(b.x) - r - map.origin.x) / c).floor() as i64 - 1;
    let hi_i = ((a.x.max(b.x) + r - map.origin.x) / c).floor() as i64 + 1;
    let lo_j = ((a.y.min(b.y) - r - map.origin.y) / c).floor() as i64 - 1;
    let hi_j = ((a.y.max(b.y) + r - map.origin.y) / c).floor() as i64 + 1;
    let mut best: Option<f64> = None;
    for j in lo_j..=hi_j {
        for i in lo_i..=hi_i {
            if !blocked(map, i, j) {
                continue;
            }
            let x0 = map.origin.x + i as f64 * c;
            let y0 = map.origin.y + j as f64 * c;
            if let Some(t) = rounded_rect_entry(p, d, x0, y0, x0 + c, y0 + c, r) {
                if t <= t1 && best.is_none_or(|b| t < b) {
                    best = Some(t);
                }
            }
        }
    }
    best
}

/// Sweeps a disc of radius `r` from `from` along unit direction `dir` for
/// `dist` meters, stopping just short of the first contact.
pub fn sweep(world: &World, from: Point2, dir: Point2, dist: f64, r: f64) -> Sweep {
    let mut t = 0.0;
    while t < dist {
        let p = from.add(dir.scale(t));
        let margin = world.clearance.lower_bound(p) - r;
        if margin >= EXACT_MARGIN {
            t = (t + margin).min(dist);
            continue;
        }
        let t1 = (t + WINDOW).min(dist);
        if let Some(hit) = exact_contact(&world.map, from, dir, t, t1, r) {
            let travel = (hit - CONTACT_EPS).max(0.0);
            return Sweep { end: from.add(dir.scale(travel)), travel, collided: true };
        }
        t = t1;
    }
    Sweep { end: from.add(dir.scale(dist)), travel: dist, collided: false }
}

/// Whether a disc of radius `r` at `p` touches no blocked cell.
pub fn disc_clear(map: &OccupancyMap, p: Point2, r: f64) -> bool {
    let c = map.cell_size;
    let lo_i = ((p.x - r - map.origin.x) / c).floor() as i64;
    let hi_i = ((p.x + r - map.origin.x) / c).floor() as i64;
    let lo_j = ((p.y - r - map.origin.y) / c).floor() as i64;
    let hi_j = ((p.y + r - map.origin.y) / c).floor() as i64;
    for j in lo_j..=hi_j {
        for i in lo_i..=hi_i {
            if !blocked(map, i, j) {
                continue;
            }
            let x0 = map.origin.x + i as f64 * c;
            let y0 = map.origin.y + j as f64 * c;
            let q = Point2::new(p.x.clamp(x0, x0 + c), p.y.clamp(y0, y0 + c));
            if q.dist(p) < r - 1e-7 {
                return false;
            }
        }
    }
    true
}

/// Penetration-free clearance of the disc at `p`: distance from `p` to the
/// nearest blocked cell square minus `r` (negative when overlapping).
pub fn disc_margin(map: &OccupancyMap, p: Point2, r: f64, search: f64) -> f64 {
    let c = map.cell_size;
    let reach = r + search;
    let lo_i = ((p.x - reach - map.origin.x) / c).floor() as i64;
    let hi_i = ((p.x + reach - map.origin.x) / c).floor() as i64;
    let lo_j = ((p.y - reach - map.origin.y) / c).floor() as i64;
    let hi_j = ((p.y + reach - map.origin.y) / c).floor() as i64;
    let mut best = reach;
    for j in lo_j..=hi_j {
        for i in lo_i..=hi_i {
            if !blocked(map, i, j) {
                continue;
            }
            let x0 = map.origin.x + i as f64 * c;
            let y0 = map.origin.y + j as f64 * c;
            let q = Point2::new(p.x.clamp(x0, x0 + c), p.y.clamp(y0, y0 + c));
            best = best.min(q.dist(p));
        }
    }
    best - r
}
