use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::TaskGenError;
use crate::geometry::{point_in_polygon, polygon_bounds, Point2, Rect};
use crate::scene::Scene;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OccupancyConfig {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    /// Lower-left corner of the grid. When unset, the floor's bounding box
    /// minus `margin` is used.
    pub origin: Option<[f64; 2]>,
    pub margin: f64,
    /// Objects whose vertical extent meets this band are projected.
    pub z_band: [f64; 2],
}

impl Default for OccupancyConfig {
    fn default() -> Self {
        Self { width: 1440, height: 1440, cell_size: 0.014, origin: None, margin: 0.5, z_band: [0.1, 2.1] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    Undefined,
    Free,
    Obstacle,
}

impl Cell {
    pub fn gray(self) -> u8 {
        match self {
            Cell::Undefined => 0,
            Cell::Obstacle => 128,
            Cell::Free => 255,
        }
    }
}

/// Bird's-eye-view grid. Cell (i, j) covers
/// `[origin.x + i*c, origin.x + (i+1)*c) x [origin.y + j*c, origin.y + (j+1)*c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMap {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub origin: Point2,
    pub cells: Vec<Cell>,
}

impl OccupancyMap {
    pub fn filled(width: usize, height: usize, cell_size: f64, origin: Point2, cell: Cell) -> Self {
        Self { width, height, cell_size, origin, cells: vec![cell; width * height] }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Cell {
        self.cells[self.idx(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, c: Cell) {
        let k = self.idx(i, j);
        self.cells[k] = c;
    }

    pub fn in_bounds(&self, i: i64, j: i64) -> bool {
        i >= 0 && j >= 0 && (i as usize) < self.width && (j as usize) < self.height
    }

    /// Cell containing `p`, if on the grid.
    pub fn cell_of(&self, p: Point2) -> Option<(usize, usize)> {
        let i = ((p.x - self.origin.x) / self.cell_size).floor();
        let j = ((p.y - self.origin.y) / self.cell_size).floor();
        self.in_bounds(i as i64, j as i64).then_some((i as usize, j as usize))
    }

    pub fn center(&self, i: usize, j: usize) -> Point2 {
        Point2::new(
            self.origin.x + (i as f64 + 0.5) * self.cell_size,
            self.origin.y + (j as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn cell_rect(&self, i: usize, j: usize) -> Rect {
        let x = self.origin.x + i as f64 * self.cell_size;
        let y = self.origin.y + j as f64 * self.cell_size;
        Rect::new(x, y, x + self.cell_size, y + self.cell_size)
    }

    pub fn extent(&self) -> Rect {
        Rect::new(
            self.origin.x,
            self.origin.y,
            self.origin.x + self.width as f64 * self.cell_size,
            self.origin.y + self.height as f64 * self.cell_size,
        )
    }

    /// Index range of cells whose squares overlap `[lo, hi)` with positive
    /// length along one axis, clamped to the grid.
    fn span(&self, lo: f64, hi: f64, origin: f64, n: usize) -> std::ops::Range<usize> {
        // Edges within rounding noise of a grid line do not reach across it.
        let a = ((lo - origin) / self.cell_size + 1e-9).floor().max(0.0);
        let b = ((hi - origin) / self.cell_size - 1e-9).ceil().min(n as f64);
        if b <= a {
            return 0..0;
        }
        a as usize..b as usize
    }

    /// Cells whose squares overlap `r` with positive area.
    pub fn cells_overlapping(&self, r: &Rect) -> impl Iterator<Item = (usize, usize)> {
        let xs = self.span(r.min_x, r.max_x, self.origin.x, self.width);
        let ys = self.span(r.min_y, r.max_y, self.origin.y, self.height);
        ys.flat_map(move |j| xs.clone().map(move |i| (i, j)))
    }

    pub fn count(&self, c: Cell) -> usize {
        self.cells.iter().filter(|&&x| x == c).count()
    }

    /// Binary portable graymap, row 0 at the top (max y).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        for j in (0..self.height).rev() {
            out.extend((0..self.width).map(|i| self.get(i, j).gray()));
        }
        out
    }

    /// Compact summary used by the BEV endpoint.
    pub fn summary(&self) -> OccupancySummary {
        OccupancySummary {
            width: self.width,
            height: self.height,
            cell_size: self.cell_size,
            origin: [self.origin.x, self.origin.y],
            free: self.count(Cell::Free),
            obstacle: self.count(Cell::Obstacle),
            undefined: self.count(Cell::Undefined),
        }
    }

    /// ASCII rendering at `step` cells per character, for debugging.
    pub fn ascii(&self, step: usize) -> String {
        let mut s = String::new();
        for j in (0..self.height).step_by(step).rev() {
            for i in (0..self.width).step_by(step) {
                let c = match self.get(i, j) {
                    Cell::Undefined => ' ',
                    Cell::Free => '.',
                    Cell::Obstacle => '#',
                };
                s.push(c);
            }
            let _ = writeln!(s);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancySummary {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub origin: [f64; 2],
    pub free: usize,
    pub obstacle: usize,
    pub undefined: usize,
}

/// Rasterizes the floor polygons and the projected object footprints.
pub fn build_occupancy(scene: &Scene, cfg: &OccupancyConfig) -> Result<OccupancyMap, TaskGenError> {
    if scene.regions.is_empty() {
        return Err(TaskGenError::NoFloor);
    }
    if cfg.width == 0 || cfg.height == 0 || !(cfg.cell_size > 0.0) {
        return Err(TaskGenError::Sizing("grid dimensions must be positive".into()));
    }
    let polys: Vec<Vec<Point2>> = scene.regions.iter().map(|r| r.points()).collect();
    let mut floor = polygon_bounds(&polys[0]).unwrap();
    for p in &polys[1..] {
        let b = polygon_bounds(p).unwrap();
        floor = Rect::new(floor.min_x.min(b.min_x), floor.min_y.min(b.min_y), floor.max_x.max(b.max_x), floor.max_y.max(b.max_y));
    }
    let origin = match cfg.origin {
        Some([x, y]) => Point2::new(x, y),
        None => Point2::new(floor.min_x - cfg.margin, floor.min_y - cfg.margin),
    };
    let mut map = OccupancyMap::filled(cfg.width, cfg.height, cfg.cell_size, origin, Cell::Undefined);
    let ext = map.extent();
    if floor.min_x < ext.min_x || floor.min_y < ext.min_y || floor.max_x > ext.max_x || floor.max_y > ext.max_y {
        return Err(TaskGenError::Sizing(format!(
            "floor spans [{:.3}, {:.3}] x [{:.3}, {:.3}] but the grid covers [{:.3}, {:.3}] x [{:.3}, {:.3}]",
            floor.min_x, floor.max_x, floor.min_y, floor.max_y, ext.min_x, ext.max_x, ext.min_y, ext.max_y
        )));
    }

    for poly in &polys {
        let b = polygon_bounds(poly).unwrap();
        let cells: Vec<_> = map.cells_overlapping(&b).collect();
        for (i, j) in cells {
            if map.get(i, j) == Cell::Undefined && point_in_polygon(map.center(i, j), poly) {
                map.set(i, j, Cell::Free);
            }
        }
    }

    let [lo, hi] = cfg.z_band;
    for obj in scene.objects.values() {
        let b = obj.aabb();
        if b.max[2] < lo || b.min[2] > hi {
            continue;
        }
        let cells: Vec<_> = map.cells_overlapping(&b.footprint()).collect();
        for (i, j) in cells {
            if map.get(i, j) == Cell::Free {
                map.set(i, j, Cell::Obstacle);
            }
        }
    }
    Ok(map)
}

/// Exact squared Euclidean distance transform (in cells) of a binary grid,
/// by separable lower envelopes of parabolas.
pub fn squared_edt(width: usize, height: usize, seed: impl Fn(usize, usize) -> bool) -> Vec<f64> {
    const INF: f64 = 1e20;
    let mut g = vec![INF; width * height];
    for j in 0..height {
        for i in 0..width {
            if seed(i, j) {
                g[j * width + i] = 0.0;
            }
        }
    }
    let n = width.max(height);
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    for i in 0..width {
        for j in 0..height {
            f[j] = g[j * width + i];
        }
        edt_1d(&f[..height], &mut d[..height], &mut v, &mut z);
        for j in 0..height {
            g[j * width + i] = d[j];
        }
    }
    for j in 0..height {
        f[..width].copy_from_slice(&g[j * width..(j + 1) * width]);
        edt_1d(&f[..width], &mut d[..width], &mut v, &mut z);
        g[j * width..(j + 1) * width].copy_from_slice(&d[..width]);
    }
    g
}

fn edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0 and the new parabola dominates everywhere.
                v[0] = q;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate().take(n) {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *out = dq * dq + f[p];
    }
}

/// Distance from each cell centre to the nearest blocked (non-free) cell
/// centre, meters. Cells beyond the grid count as blocked.
#[derive(Debug, Clone)]
pub struct Clearance {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub origin: Point2,
    dist: Vec<f32>,
}

impl Clearance {
    pub fn new(map: &OccupancyMap) -> Self {
        // Pad by one cell so the grid border acts as a wall.
        let (w, h) = (map.width + 2, map.height + 2);
        let sq = squared_edt(w, h, |i, j| {
            i == 0 || j == 0 || i == w - 1 || j == h - 1 || map.get(i - 1, j - 1) != Cell::Free
        });
        let mut dist = vec![0f32; map.width * map.height];
        for j in 0..map.height {
            for i in 0..map.width {
                dist[j * map.width + i] = (sq[(j + 1) * w + i + 1].sqrt() * map.cell_size) as f32;
            }
        }
        Self { width: map.width, height: map.height, cell_size: map.cell_size, origin: map.origin, dist }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.dist[j * self.width + i] as f64
    }

    /// A lower bound on the distance from `p` to any blocked cell square.
    pub fn lower_bound(&self, p: Point2) -> f64 {
        let i = ((p.x - self.origin.x) / self.cell_size).floor();
        let j = ((p.y - self.origin.y) / self.cell_size).floor();
        if i < 0.0 || j < 0.0 || i as usize >= self.width || j as usize >= self.height {
            return 0.0;
        }
        // f32 storage loses ~1e-7 relative; subtract a little more.
        (self.at(i as usize, j as usize) - self.cell_size * std::f64::consts::SQRT_2 - 1e-5).max(0.0)
    }
}

/// Cells a disc of `radius` may occupy anywhere within: a cell is traversable
/// when its centre is at least `radius + cell*sqrt(2)` from every blocked
/// cell centre, so every point of the cell clears blocked squares by `radius`.
#[derive(Debug, Clone)]
pub struct Traversability {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub origin: Point2,
    pub radius: f64,
    ok: Vec<bool>,
}

impl Traversability {
    pub fn new(map: &OccupancyMap, clearance: &Clearance, radius: f64) -> Self {
        let need = radius + map.cell_size * std::f64::consts::SQRT_2;
        let mut ok = vec![false; map.width * map.height];
        for j in 0..map.height {
            for i in 0..map.width {
                let k = j * map.width + i;
                // Compare in f32 space conservatively.
                ok[k] = map.cells[k] == Cell::Free && clearance.at(i, j) - 1e-5 >= need;
            }
        }
        Self { width: map.width, height: map.height, cell_size: map.cell_size, origin: map.origin, radius, ok }
    }

    #[inline]
    pub fn ok(&self, i: usize, j: usize) -> bool {
        self.ok[j * self.width + i]
    }

    #[inline]
    pub fn ok_signed(&self, i: i64, j: i64) -> bool {
        i >= 0 && j >= 0 && (i as usize) < self.width && (j as usize) < self.height && self.ok(i as usize, j as usize)
    }

    pub fn cell_of(&self, p: Point2) -> Option<(usize, usize)> {
        let i = ((p.x - self.origin.x) / self.cell_size).floor();
        let j = ((p.y - self.origin.y) / self.cell_size).floor();
        (i >= 0.0 && j >= 0.0 && (i as usize) < self.width && (j as usize) < self.height)
            .then_some((i as usize, j as usize))
    }

    pub fn center(&self, i: usize, j: usize) -> Point2 {
        Point2::new(
            self.origin.x + (i as f64 + 0.5) * self.cell_size,
            self.origin.y + (j as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn count(&self) -> usize {
        self.ok.iter().filter(|&&b| b).count()
    }

    /// Whether every cell the segment touches is traversable.
    pub fn segment_ok(&self, a: Point2, b: Point2) -> bool {
        let mut all = true;
        supercover(self.origin, self.cell_size, a, b, |i, j| {
            if !self.ok_signed(i, j) {
                all = false;
            }
            all
        });
        all
    }
}

/// Visits every grid cell whose closed square the segment `a`-`b` touches,
/// stopping early when `visit` returns false.
pub fn supercover(origin: Point2, cell: f64, a: Point2, b: Point2, mut visit: impl FnMut(i64, i64) -> bool) {
    let (ax, ay) = ((a.x - origin.x) / cell, (a.y - origin.y) / cell);
    let (bx, by) = ((b.x - origin.x) / cell, (b.y - origin.y) / cell);
    let (mut i, mut j) = (ax.floor() as i64, ay.floor() as i64);
    let (ti, tj) = (bx.floor() as i64, by.floor() as i64);
    let (dx, dy) = (bx - ax, by - ay);
    let si: i64 = if dx > 0.0 { 1 } else { -1 };
    let sj: i64 = if dy > 0.0 { 1 } else { -1 };
    let next = |p: f64, d: f64, s: i64, c: i64| -> f64 {
        if d == 0.0 {
            return f64::INFINITY;
        }
        let edge = if s > 0 { (c + 1) as f64 } else { c as f64 };
        (edge - p) / d
    };
    let mut tx = next(ax, dx, si, i);
    let mut ty = next(ay, dy, sj, j);
    let dtx = if dx == 0.0 { f64::INFINITY } else { 1.0 / dx.abs() };
    let dty = if dy == 0.0 { f64::INFINITY } else { 1.0 / dy.abs() };
    if !visit(i, j) {
        return;
    }
    let steps = (ti - i).abs() + (tj - j).abs();
    let mut n = 0;
    while (i != ti || j != tj) && n <= steps + 2 {
        n += 1;
        if (tx - ty).abs() < 1e-12 {
            // Passing through a corner: the two side cells are touched too.
            if !visit(i + si, j) || !visit(i, j + sj) {
                return;
            }
            i += si;
            j += sj;
            tx += dtx;
            ty += dty;
        } else if tx < ty {
            i += si;
            tx += dtx;
        } else {
            j += sj;
            ty += dty;
        }
        if !visit(i, j) {
            return;
        }
    }
    // Endpoints lying exactly on a cell boundary also touch the neighbour.
    for (p, q) in [(ax, ay), (bx, by)] {
        let (fi, fj) = (p.floor() as i64, q.floor() as i64);
        let on_x = p == p.floor();
        let on_y = q == q.floor();
        if on_x && !visit(fi - 1, fj) {
            return;
        }
        if on_y && !visit(fi, fj - 1) {
            return;
        }
        if on_x && on_y && !visit(fi - 1, fj - 1) {
            return;
        }
    }
}
