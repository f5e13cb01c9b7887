//! Occupancy grid world and its text format.
//!
//! Coordinates are centimetres with the origin at the lower-left corner,
//! `x` to the right and `y` up. Cell `(cx, cy)` covers
//! `[cx*c, (cx+1)*c) x [cy*c, (cy+1)*c)` for cell size `c`.
//!
//! Text format:
//!
//! ```text
//! <width_cm> <height_cm> <cell_size_cm>
//! <height/cell rows of width/cell characters, top row first>
//! ```
//!
//! `#` obstacle, `.` free, `G` goal-region cell, `S` spawn-region cell.
//! The goal centre is the centroid of the `G` cells and the goal radius their
//! maximal extent from it. The spawn region is the bounding box of the `S`
//! cells. Border cells are always obstacles.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        self.sub(o).norm()
    }
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]` in cm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn center(&self) -> Vec2 {
        Vec2::new(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellKind {
    Free,
    Obstacle,
    Goal,
    Spawn,
}

impl CellKind {
    fn from_char(c: char) -> Option<Self> {
        match c {
            '.' => Some(CellKind::Free),
            '#' => Some(CellKind::Obstacle),
            'G' => Some(CellKind::Goal),
            'S' => Some(CellKind::Spawn),
            _ => None,
        }
    }

    fn to_char(self) -> char {
        match self {
            CellKind::Free => '.',
            CellKind::Obstacle => '#',
            CellKind::Goal => 'G',
            CellKind::Spawn => 'S',
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridMap {
    width_cm: u32,
    height_cm: u32,
    cell_size_cm: u32,
    cols: usize,
    rows: usize,
    kinds: Vec<CellKind>,
    occupancy: Vec<bool>,
    goal_center: Vec2,
    goal_radius_cm: f64,
    spawn_region: Rect,
}

impl GridMap {
    /// Builds a map from a row-major (bottom row first) grid of cell kinds.
    /// Border cells are forced to obstacles.
    pub fn from_kinds(
        width_cm: u32,
        height_cm: u32,
        cell_size_cm: u32,
        mut kinds: Vec<CellKind>,
    ) -> Result<Self> {
        if cell_size_cm == 0 {
            return Err(Error::Map("cell size must be positive".into()));
        }
        if !width_cm.is_multiple_of(cell_size_cm) || !height_cm.is_multiple_of(cell_size_cm) {
            return Err(Error::Map(format!(
                "map size {width_cm}x{height_cm} is not a multiple of cell size {cell_size_cm}"
            )));
        }
        let cols = (width_cm / cell_size_cm) as usize;
        let rows = (height_cm / cell_size_cm) as usize;
        if cols < 3 || rows < 3 {
            return Err(Error::Map("map must be at least 3x3 cells".into()));
        }
        if kinds.len() != cols * rows {
            return Err(Error::Map(format!(
                "expected {} cells, got {}",
                cols * rows,
                kinds.len()
            )));
        }
        for cy in 0..rows {
            for cx in 0..cols {
                if cx == 0 || cy == 0 || cx == cols - 1 || cy == rows - 1 {
                    kinds[cy * cols + cx] = CellKind::Obstacle;
                }
            }
        }

        let cs = cell_size_cm as f64;
        let center_of = |i: usize| Vec2::new(((i % cols) as f64 + 0.5) * cs, ((i / cols) as f64 + 0.5) * cs);

        let goal: Vec<usize> = (0..kinds.len()).filter(|&i| kinds[i] == CellKind::Goal).collect();
        if goal.is_empty() {
            return Err(Error::Map("map has no goal ('G') cells".into()));
        }
        let (mut gx, mut gy) = (0.0, 0.0);
        for &i in &goal {
            let c = center_of(i);
            gx += c.x;
            gy += c.y;
        }
        let goal_center = Vec2::new(gx / goal.len() as f64, gy / goal.len() as f64);
        let goal_radius_cm = goal
            .iter()
            .map(|&i| center_of(i).dist(goal_center))
            .fold(0.0, f64::max)
            + 0.5 * cs;

        let spawn: Vec<usize> = (0..kinds.len()).filter(|&i| kinds[i] == CellKind::Spawn).collect();
        if spawn.is_empty() {
            return Err(Error::Map("map has no spawn ('S') cells".into()));
        }
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for &i in &spawn {
            let (cx, cy) = (i % cols, i / cols);
            x0 = x0.min(cx);
            y0 = y0.min(cy);
            x1 = x1.max(cx);
            y1 = y1.max(cy);
        }
        let spawn_region = Rect {
            x0: x0 as f64 * cs,
            y0: y0 as f64 * cs,
            x1: (x1 + 1) as f64 * cs,
            y1: (y1 + 1) as f64 * cs,
        };

        let occupancy = kinds.iter().map(|&k| k == CellKind::Obstacle).collect();
        let map = GridMap {
            width_cm,
            height_cm,
            cell_size_cm,
            cols,
            rows,
            kinds,
            occupancy,
            goal_center,
            goal_radius_cm,
            spawn_region,
        };
        if map.occupied_at(goal_center) {
            return Err(Error::Map("goal centre lies on an obstacle".into()));
        }
        Ok(map)
    }

    /// An obstacle-free map (border walls only) with a rectangular spawn
    /// region and a disc-shaped goal region.
    pub fn open(
        width_cm: u32,
        height_cm: u32,
        cell_size_cm: u32,
        spawn: Rect,
        goal_center: Vec2,
        goal_radius_cm: f64,
    ) -> Result<Self> {
        if cell_size_cm == 0 || !width_cm.is_multiple_of(cell_size_cm) || !height_cm.is_multiple_of(cell_size_cm) {
            return Err(Error::Map("invalid map dimensions".into()));
        }
        let cols = (width_cm / cell_size_cm) as usize;
        let rows = (height_cm / cell_size_cm) as usize;
        let cs = cell_size_cm as f64;
        let mut kinds = vec![CellKind::Free; cols * rows];
        for cy in 0..rows {
            for cx in 0..cols {
                let c = Vec2::new((cx as f64 + 0.5) * cs, (cy as f64 + 0.5) * cs);
                if c.dist(goal_center) <= goal_radius_cm {
                    kinds[cy * cols + cx] = CellKind::Goal;
                } else if spawn.contains(c) {
                    kinds[cy * cols + cx] = CellKind::Spawn;
                }
            }
        }
        Self::from_kinds(width_cm, height_cm, cell_size_cm, kinds)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Map("empty map file".into()))?;
        let nums: Vec<u32> = header
            .split_whitespace()
            .map(|t| t.parse::<u32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Map(format!("bad header {header:?}: {e}")))?;
        let [width_cm, height_cm, cell] = nums[..] else {
            return Err(Error::Map(format!(
                "header must be `width height cell_size`, got {header:?}"
            )));
        };
        if cell == 0 || width_cm % cell != 0 || height_cm % cell != 0 {
            return Err(Error::Map(format!(
                "map size {width_cm}x{height_cm} is not a multiple of cell size {cell}"
            )));
        }
        let cols = (width_cm / cell) as usize;
        let rows = (height_cm / cell) as usize;
        let body: Vec<&str> = lines.map(|l| l.trim_end()).collect();
        if body.len() != rows {
            return Err(Error::Map(format!("expected {rows} rows, found {}", body.len())));
        }
        let mut kinds = vec![CellKind::Free; cols * rows];
        for (r, line) in body.iter().enumerate() {
            let cy = rows - 1 - r;
            let chars: Vec<char> = line.chars().collect();
            if chars.len() != cols {
                return Err(Error::Map(format!(
                    "row {r} has {} cells, expected {cols}",
                    chars.len()
                )));
            }
            for (cx, ch) in chars.into_iter().enumerate() {
                kinds[cy * cols + cx] = CellKind::from_char(ch)
                    .ok_or_else(|| Error::Map(format!("unknown cell {ch:?} at row {r}, column {cx}")))?;
            }
        }
        Self::from_kinds(width_cm, height_cm, cell, kinds)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Map(m) => Error::Map(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Text form; also serves as the debug ASCII dump.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity((self.cols + 1) * (self.rows + 1));
        let _ = writeln!(out, "{} {} {}", self.width_cm, self.height_cm, self.cell_size_cm);
        for r in 0..self.rows {
            let cy = self.rows - 1 - r;
            for cx in 0..self.cols {
                let i = cy * self.cols + cx;
                let k = if self.occupancy[i] { CellKind::Obstacle } else { self.kinds[i] };
                out.push(k.to_char());
            }
            out.push('\n');
        }
        out
    }

    pub fn width_cm(&self) -> u32 {
        self.width_cm
    }

    pub fn height_cm(&self) -> u32 {
        self.height_cm
    }

    pub fn cell_size_cm(&self) -> u32 {
        self.cell_size_cm
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn goal_center(&self) -> Vec2 {
        self.goal_center
    }

    pub fn goal_radius_cm(&self) -> f64 {
        self.goal_radius_cm
    }

    pub fn spawn_region(&self) -> Rect {
        self.spawn_region
    }

    pub fn diagonal_cm(&self) -> f64 {
        (self.width_cm as f64).hypot(self.height_cm as f64)
    }

    pub fn kind(&self, cx: usize, cy: usize) -> CellKind {
        self.kinds[cy * self.cols + cx]
    }

    /// Occupancy of a cell; cells outside the grid count as occupied.
    #[inline]
    pub fn is_occupied(&self, cx: i64, cy: i64) -> bool {
        if cx < 0 || cy < 0 || cx >= self.cols as i64 || cy >= self.rows as i64 {
            return true;
        }
        self.occupancy[cy as usize * self.cols + cx as usize]
    }

    pub fn set_occupied(&mut self, cx: usize, cy: usize, occupied: bool) {
        let i = cy * self.cols + cx;
        // The border stays closed.
        if cx == 0 || cy == 0 || cx == self.cols - 1 || cy == self.rows - 1 {
            return;
        }
        self.occupancy[i] = occupied;
    }

    pub fn cell_of(&self, p: Vec2) -> (i64, i64) {
        let cs = self.cell_size_cm as f64;
        ((p.x / cs).floor() as i64, (p.y / cs).floor() as i64)
    }

    pub fn occupied_at(&self, p: Vec2) -> bool {
        let (cx, cy) = self.cell_of(p);
        self.is_occupied(cx, cy)
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    /// Cells whose footprint comes closer than `clearance_cm` to an obstacle.
    pub fn inflate(&self, clearance_cm: f64) -> Vec<bool> {
        let (cols, rows) = (self.cols as i64, self.rows as i64);
        let cs = self.cell_size_cm as f64;
        let reach = (clearance_cm / cs).ceil() as i64 + 1;
        let mut offsets = Vec::new();
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                // Distance between the centre of one cell and the nearest point of the other.
                let ex = ((dx.abs() as f64) - 0.5).max(0.0) * cs;
                let ey = ((dy.abs() as f64) - 0.5).max(0.0) * cs;
                if ex * ex + ey * ey < clearance_cm * clearance_cm {
                    offsets.push((dx, dy));
                }
            }
        }
        let mut blocked = self.occupancy.clone();
        for cy in 0..rows {
            for cx in 0..cols {
                if !self.occupancy[(cy * cols + cx) as usize] {
                    continue;
                }
                // Interior obstacle cells add nothing beyond their boundary neighbours.
                let boundary = [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|&(dx, dy)| {
                    let (nx, ny) = (cx + dx, cy + dy);
                    nx >= 0 && ny >= 0 && nx < cols && ny < rows && !self.occupancy[(ny * cols + nx) as usize]
                });
                if !boundary {
                    continue;
                }
                for &(dx, dy) in &offsets {
                    let (nx, ny) = (cx + dx, cy + dy);
                    if nx >= 0 && ny >= 0 && nx < cols && ny < rows {
                        blocked[(ny * cols + nx) as usize] = true;
                    }
                }
            }
        }
        blocked
    }

    /// Whether a robot of radius `clearance_cm` can travel from some spawn
    /// cell to the goal region (4-connected BFS over the inflated grid).
    pub fn is_connected(&self, clearance_cm: f64) -> bool {
        let blocked = self.inflate(clearance_cm);
        self.is_connected_with(&blocked)
    }

    pub(crate) fn is_connected_with(&self, blocked: &[bool]) -> bool {
        let cs = self.cell_size_cm as f64;
        let mut seen = vec![false; blocked.len()];
        let mut queue = VecDeque::new();
        for cy in 0..self.rows {
            for cx in 0..self.cols {
                let c = Vec2::new((cx as f64 + 0.5) * cs, (cy as f64 + 0.5) * cs);
                let i = cy * self.cols + cx;
                if self.spawn_region.contains(c) && !blocked[i] {
                    seen[i] = true;
                    queue.push_back(i);
                }
            }
        }
        while let Some(i) = queue.pop_front() {
            let (cx, cy) = (i % self.cols, i / self.cols);
            let c = Vec2::new((cx as f64 + 0.5) * cs, (cy as f64 + 0.5) * cs);
            if c.dist(self.goal_center) <= self.goal_radius_cm {
                return true;
            }
            let nbrs = [
                (cx.wrapping_sub(1), cy),
                (cx + 1, cy),
                (cx, cy.wrapping_sub(1)),
                (cx, cy + 1),
            ];
            for (nx, ny) in nbrs {
                if nx >= self.cols || ny >= self.rows {
                    continue;
                }
                let j = ny * self.cols + nx;
                if !seen[j] && !blocked[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GridMap {
        GridMap::open(
            100,
            100,
            1,
            Rect { x0: 10.0, y0: 10.0, x1: 30.0, y1: 30.0 },
            Vec2::new(75.0, 75.0),
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn text_round_trip() {
        let m = small();
        let again = GridMap::parse(&m.to_text()).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn goal_and_spawn_derived_from_cells() {
        let text = "5 5 1\n#####\n#.GG#\n#.GG#\n#S..#\n#####\n";
        let m = GridMap::parse(text).unwrap();
        assert_eq!(m.goal_center(), Vec2::new(3.0, 3.0));
        let r = m.goal_radius_cm();
        assert!((r - (0.5f64.hypot(0.5) + 0.5)).abs() < 1e-12);
        assert_eq!(m.spawn_region(), Rect { x0: 1.0, y0: 1.0, x1: 2.0, y1: 2.0 });
    }

    #[test]
    fn border_is_forced_closed() {
        let text = "4 4 1\n....\n.GS.\n....\n....\n";
        let m = GridMap::parse(text).unwrap();
        for i in 0..4 {
            assert!(m.is_occupied(i, 0));
            assert!(m.is_occupied(0, i));
            assert!(m.is_occupied(i, 3));
            assert!(m.is_occupied(3, i));
        }
        assert!(m.is_occupied(-1, 2));
        assert!(m.is_occupied(2, 99));
    }

    #[test]
    fn rejects_bad_maps() {
        assert!(GridMap::parse("").is_err());
        assert!(GridMap::parse("5 5\n").is_err());
        assert!(GridMap::parse("5 5 2\n").is_err());
        assert!(GridMap::parse("3 3 1\n...\n.S.\n...\n").is_err(), "missing goal");
        assert!(GridMap::parse("3 3 1\n...\n.G.\n...\n").is_err(), "missing spawn");
        assert!(GridMap::parse("4 3 1\n....\n.GS.\n").is_err(), "missing row");
        assert!(GridMap::parse("4 3 1\n....\n.GX.\n....\n").is_err(), "bad char");
    }

    #[test]
    fn coarse_cells_scale_geometry() {
        let text = "8 8 2\n####\n#.G#\n#S.#\n####\n";
        let m = GridMap::parse(text).unwrap();
        assert_eq!((m.cols(), m.rows()), (4, 4));
        assert_eq!(m.goal_center(), Vec2::new(5.0, 5.0));
        assert!(m.occupied_at(Vec2::new(1.0, 1.0)));
        assert!(!m.occupied_at(Vec2::new(3.0, 3.0)));
    }

    #[test]
    fn wall_across_map_disconnects() {
        let mut m = small();
        assert!(m.is_connected(9.0));
        for cx in 0..100 {
            m.set_occupied(cx, 50, true);
        }
        assert!(!m.is_connected(9.0));
        // A gap wide enough for the robot reconnects the halves.
        for cx in 40..70 {
            m.set_occupied(cx, 50, false);
        }
        assert!(m.is_connected(9.0));
        // A gap narrower than the robot does not.
        for cx in 40..70 {
            m.set_occupied(cx, 50, !(50..60).contains(&cx));
        }
        assert!(!m.is_connected(9.0));
    }
}
