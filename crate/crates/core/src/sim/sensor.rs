//! Oracle perception: coarse occupancy patches and labelled detections.

use serde::{Deserialize, Serialize};

use super::visibility::{bearing_range, fov_visible, FovConfig};
use crate::geometry::{Aabb, Point2};
use crate::taskgen::{Cell, OccupancyMap};
use crate::world::World;

/// Downsampled occupancy: a coarse cell is free only when every fine cell
/// under it is free, undefined when all are undefined, otherwise obstacle.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseGrid {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub origin: Point2,
    pub cells: Vec<Cell>,
}

impl CoarseGrid {
    pub fn from_map(map: &OccupancyMap, cell_size: f64) -> Self {
        let ext = map.extent();
        let width = ((ext.max_x - ext.min_x) / cell_size).ceil() as usize;
        let height = ((ext.max_y - ext.min_y) / cell_size).ceil() as usize;
        let mut free = vec![0u32; width * height];
        let mut undef = vec![0u32; width * height];
        let mut total = vec![0u32; width * height];
        for j in 0..map.height {
            for i in 0..map.width {
                // Fine cells straddling a coarse boundary count for both sides.
                let r = map.cell_rect(i, j);
                let ci0 = (((r.min_x - map.origin.x) / cell_size).floor() as usize).min(width - 1);
                let ci1 = ((((r.max_x - map.origin.x) / cell_size).ceil() as usize).max(1) - 1).min(width - 1);
                let cj0 = (((r.min_y - map.origin.y) / cell_size).floor() as usize).min(height - 1);
                let cj1 = ((((r.max_y - map.origin.y) / cell_size).ceil() as usize).max(1) - 1).min(height - 1);
                let c = map.get(i, j);
                for cj in cj0..=cj1 {
                    for ci in ci0..=ci1 {
                        let k = cj * width + ci;
                        total[k] += 1;
                        match c {
                            Cell::Free => free[k] += 1,
                            Cell::Undefined => undef[k] += 1,
                            Cell::Obstacle => {}
                        }
                    }
                }
            }
        }
        let cells = (0..width * height)
            .map(|k| {
                if total[k] == 0 || undef[k] == total[k] {
                    Cell::Undefined
                } else if free[k] == total[k] {
                    Cell::Free
                } else {
                    Cell::Obstacle
                }
            })
            .collect();
        Self { width, height, cell_size, origin: map.origin, cells }
    }

    pub fn get(&self, i: usize, j: usize) -> Cell {
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
}

/// Coarse cells within `radius` of the robot, as `(i, j, state)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalPatch {
    pub cell_size: f64,
    pub origin: Point2,
    pub cells: Vec<(u32, u32, Cell)>,
}

pub fn local_patch(grid: &CoarseGrid, center: Point2, radius: f64) -> LocalPatch {
    let mut cells = Vec::new();
    let c = grid.cell_size;
    let lo_i = (((center.x - radius - grid.origin.x) / c).floor().max(0.0)) as usize;
    let lo_j = (((center.y - radius - grid.origin.y) / c).floor().max(0.0)) as usize;
    let hi_i = ((((center.x + radius - grid.origin.x) / c).ceil().max(0.0)) as usize).min(grid.width);
    let hi_j = ((((center.y + radius - grid.origin.y) / c).ceil().max(0.0)) as usize).min(grid.height);
    for j in lo_j..hi_j {
        for i in lo_i..hi_i {
            if grid.center(i, j).dist(center) <= radius {
                cells.push((i as u32, j as u32, grid.get(i, j)));
            }
        }
    }
    LocalPatch { cell_size: c, origin: grid.origin, cells }
}

/// One labelled object in view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub instance_id: String,
    pub category: String,
    /// Relative to the heading, radians, positive to the left.
    pub bearing: f64,
    /// Distance to the nearest footprint point, meters.
    pub range: f64,
    /// Object centre in world coordinates.
    pub position: Point2,
    /// Normalized image-plane box [u_min, v_min, u_max, v_max] in [-1, 1].
    pub bbox: [f64; 4],
    /// 3D box from the grounding step.
    pub aabb: Aabb,
    pub interactive: bool,
    pub description: Vec<String>,
}

const CAMERA_HEIGHT: f64 = 1.2;

fn image_box(world: &World, id: &str, position: Point2, heading: f64, fov: &FovConfig) -> [f64; 4] {
    let o = &world.scene.objects[id];
    let fp = o.aabb().footprint();
    let tan_h = fov.half_angle_deg.to_radians().tan();
    let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for c in fp.corners() {
        let v = c.sub(position);
        let fwd = v.x * heading.cos() + v.y * heading.sin();
        let left = -v.x * heading.sin() + v.y * heading.cos();
        let depth = fwd.max(0.05);
        let u = (-left / depth / tan_h).clamp(-1.0, 1.0);
        u0 = u0.min(u);
        u1 = u1.max(u);
        for z in [o.min_points[2], o.max_points[2]] {
            let vv = (-(z - CAMERA_HEIGHT) / depth / tan_h).clamp(-1.0, 1.0);
            v0 = v0.min(vv);
            v1 = v1.max(vv);
        }
    }
    [u0, v0, u1, v1]
}

/// Every object passing the field-of-view test, sorted by instance id.
pub fn detect(world: &World, position: Point2, heading: f64, held: Option<&str>, fov: &FovConfig) -> Vec<Detection> {
    let mut out = Vec::new();
    for (id, o) in &world.scene.objects {
        if Some(id.as_str()) == held || !fov_visible(world, position, heading, id, held, fov) {
            continue;
        }
        let (bearing, range) = bearing_range(world, position, heading, id).unwrap_or((0.0, 0.0));
        out.push(Detection {
            instance_id: id.clone(),
            category: o.category.clone(),
            bearing,
            range,
            position: o.position2(),
            bbox: image_box(world, id, position, heading, fov),
            aabb: o.aabb(),
            interactive: o.interactive,
            description: o.description.clone(),
        });
    }
    out
}
