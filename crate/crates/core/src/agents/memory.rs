use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{Aabb, Point2};
use crate::sim::{Action, LocalPatch, Observation};
use crate::taskgen::{squared_edt, Cell};
use crate::wkm::InfoCondition;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub instance_id: String,
    pub category: String,
    pub position: Point2,
    pub aabb: Aabb,
    pub interactive: bool,
    pub description: String,
}

/// The agent's bird's-eye-view memory: an incrementally observed occupancy
/// grid, every object seen so far, the action history and what is known
/// about the goal.
#[derive(Debug, Clone)]
pub struct BevMemory {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub origin: Point2,
    /// `None` = never observed.
    pub cells: Vec<Option<Cell>>,
    pub candidates: BTreeMap<String, Candidate>,
    pub history: Vec<(String, String)>,
    pub goal_info: Vec<InfoCondition>,
    /// Bumped whenever a cell changes state.
    pub revision: u64,
}

impl BevMemory {
    pub fn new(width: usize, height: usize, cell_size: f64, origin: Point2) -> Self {
        Self {
            width,
            height,
            cell_size,
            origin,
            cells: vec![None; width * height],
            candidates: BTreeMap::new(),
            history: Vec::new(),
            goal_info: Vec::new(),
            revision: 0,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Option<Cell> {
        self.cells[j * self.width + i]
    }

    pub fn cell_of(&self, p: Point2) -> Option<(usize, usize)> {
        let i = ((p.x - self.origin.x) / self.cell_size).floor();
        let j = ((p.y - self.origin.y) / self.cell_size).floor();
        (i >= 0.0 && j >= 0.0 && (i as usize) < self.width && (j as usize) < self.height)
            .then_some((i as usize, j as usize))
    }

    pub fn center(&self, i: usize, j: usize) -> Point2 {
        Point2::new(self.origin.x + (i as f64 + 0.5) * self.cell_size, self.origin.y + (j as f64 + 0.5) * self.cell_size)
    }

    /// Known cells never return to unknown; obstacle evidence overrides free.
    pub fn integrate_patch(&mut self, patch: &LocalPatch) {
        for &(i, j, c) in &patch.cells {
            let (i, j) = (i as usize, j as usize);
            if i >= self.width || j >= self.height {
                continue;
            }
            let k = j * self.width + i;
            let next = match (self.cells[k], c) {
                (None, c) => Some(c),
                (Some(Cell::Free), Cell::Obstacle | Cell::Undefined) => Some(c),
                (old, _) => old,
            };
            if next != self.cells[k] {
                self.cells[k] = next;
                self.revision += 1;
            }
        }
    }

    pub fn observe(&mut self, obs: &Observation) {
        self.integrate_patch(&obs.patch);
        for d in &obs.visible_objects {
            self.candidates.entry(d.instance_id.clone()).or_insert_with(|| Candidate {
                instance_id: d.instance_id.clone(),
                category: d.category.clone(),
                position: d.position,
                aabb: d.aabb,
                interactive: d.interactive,
                description: d.description.join(" "),
            });
        }
    }

    pub fn record(&mut self, action: &Action, obs: &Observation) {
        let digest = format!(
            "at ({:.2}, {:.2}) heading {:.0} deg, {} objects in view",
            obs.pose.position.x,
            obs.pose.position.y,
            obs.pose.heading.to_degrees(),
            obs.visible_objects.len()
        );
        self.history.push((action.name().to_string(), digest));
    }

    /// Cells a disc of `radius` may be centred in: known obstacles are
    /// inflated, unknown space is optimistically free.
    pub fn inflated(&self, radius: f64) -> Vec<bool> {
        let sq = squared_edt(self.width, self.height, |i, j| matches!(self.get(i, j), Some(Cell::Obstacle | Cell::Undefined)));
        let need = radius + self.cell_size * std::f64::consts::FRAC_1_SQRT_2;
        sq.iter().map(|d| d.sqrt() * self.cell_size >= need).collect()
    }

    /// Whether a disc of `radius` at `p` misses every known blocked cell.
    pub fn disc_free(&self, p: Point2, radius: f64) -> bool {
        let c = self.cell_size;
        let lo_i = ((p.x - radius - self.origin.x) / c).floor().max(0.0) as usize;
        let lo_j = ((p.y - radius - self.origin.y) / c).floor().max(0.0) as usize;
        let hi_i = (((p.x + radius - self.origin.x) / c).floor() + 1.0).clamp(0.0, self.width as f64) as usize;
        let hi_j = (((p.y + radius - self.origin.y) / c).floor() + 1.0).clamp(0.0, self.height as f64) as usize;
        for j in lo_j..hi_j {
            for i in lo_i..hi_i {
                if !matches!(self.get(i, j), Some(Cell::Obstacle | Cell::Undefined)) {
                    continue;
                }
                let x0 = self.origin.x + i as f64 * c;
                let y0 = self.origin.y + j as f64 * c;
                let dx = (x0 - p.x).max(0.0).max(p.x - x0 - c);
                let dy = (y0 - p.y).max(0.0).max(p.y - y0 - c);
                if dx.hypot(dy) < radius {
                    return false;
                }
            }
        }
        true
    }

    /// Observed free cells next to unknown ones.
    pub fn frontier(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for j in 0..self.height {
            for i in 0..self.width {
                if self.get(i, j) != Some(Cell::Free) {
                    continue;
                }
                let unknown_next = [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)].iter().any(|(di, dj)| {
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    ni >= 0 && nj >= 0 && (ni as usize) < self.width && (nj as usize) < self.height && self.get(ni as usize, nj as usize).is_none()
                });
                if unknown_next {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn known_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }
}
