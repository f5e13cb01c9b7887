//! Procedural maps: square arenas with box obstacles and wall segments, a
//! spawn region in the lower-left corner and a goal disc in the upper-right.

use std::path::{Path, PathBuf};

use rand::Rng;

use crate::error::{Error, Result};
use crate::map::{CellKind, GridMap, Rect, Vec2};
use crate::rng::derive_rng;

#[derive(Clone, Debug, PartialEq)]
pub struct MapGenConfig {
    pub size_cm: u32,
    pub cell_cm: u32,
    /// Target fraction of interior cells occupied by obstacles, in [0, 1).
    pub density: f64,
    /// Clearance used for the connectivity check.
    pub robot_radius_cm: f64,
    pub spawn_size_cm: f64,
    pub goal_radius_cm: f64,
    /// Corner inset of the spawn region and goal disc.
    pub inset_cm: f64,
    pub max_attempts: usize,
}

impl Default for MapGenConfig {
    fn default() -> Self {
        Self {
            size_cm: 400,
            cell_cm: 5,
            density: 0.1,
            robot_radius_cm: 9.0,
            spawn_size_cm: 60.0,
            goal_radius_cm: 20.0,
            inset_cm: 30.0,
            max_attempts: 500,
        }
    }
}

impl MapGenConfig {
    fn validate(&self) -> Result<()> {
        if self.cell_cm == 0 || !self.size_cm.is_multiple_of(self.cell_cm) {
            return Err(Error::Config(format!(
                "map size {} must be a positive multiple of the cell size {}",
                self.size_cm, self.cell_cm
            )));
        }
        if !(0.0..1.0).contains(&self.density) {
            return Err(Error::Config(format!("density {} outside [0, 1)", self.density)));
        }
        let need = 2.0 * self.inset_cm + self.spawn_size_cm + 2.0 * self.goal_radius_cm + 4.0 * self.robot_radius_cm;
        if (self.size_cm as f64) < need {
            return Err(Error::Config(format!("map size {} cm too small (need {need} cm)", self.size_cm)));
        }
        Ok(())
    }

    fn spawn_rect(&self) -> Rect {
        let a = self.inset_cm;
        Rect { x0: a, y0: a, x1: a + self.spawn_size_cm, y1: a + self.spawn_size_cm }
    }

    fn goal_center(&self) -> Vec2 {
        let c = self.size_cm as f64 - self.inset_cm - self.goal_radius_cm;
        Vec2::new(c, c)
    }
}

/// One connected map; layouts failing the spawn-to-goal check are redrawn.
pub fn generate<R: Rng + ?Sized>(cfg: &MapGenConfig, rng: &mut R) -> Result<GridMap> {
    cfg.validate()?;
    let base = GridMap::open(
        cfg.size_cm,
        cfg.size_cm,
        cfg.cell_cm,
        cfg.spawn_rect(),
        cfg.goal_center(),
        cfg.goal_radius_cm,
    )?;
    if cfg.density == 0.0 {
        return Ok(base);
    }
    let interior = ((base.cols() - 2) * (base.rows() - 2)) as f64;
    let target = (cfg.density * interior).ceil() as usize;
    let border = base.occupied_count();
    let cs = cfg.cell_cm as f64;
    let size = cfg.size_cm as f64;
    let margin = 2.0 * cfg.robot_radius_cm + cs;
    let spawn = cfg.spawn_rect();
    let keep_spawn = Rect {
        x0: spawn.x0 - margin,
        y0: spawn.y0 - margin,
        x1: spawn.x1 + margin,
        y1: spawn.y1 + margin,
    };
    let goal = cfg.goal_center();
    let keep_goal = cfg.goal_radius_cm + margin;

    for _ in 0..cfg.max_attempts {
        let mut map = base.clone();
        let mut pieces = 0;
        while map.occupied_count() - border < target && pieces < 10_000 {
            pieces += 1;
            let r = if rng.random::<f64>() < 0.6 {
                let w = rng.random_range(15.0..50.0);
                let h = rng.random_range(15.0..50.0);
                let x = rng.random_range(0.0..size - w);
                let y = rng.random_range(0.0..size - h);
                Rect { x0: x, y0: y, x1: x + w, y1: y + h }
            } else {
                let len = rng.random_range(50.0..size * 0.4);
                let thick = 2.0 * cs;
                let horizontal = rng.random::<bool>();
                let (w, h) = if horizontal { (len, thick) } else { (thick, len) };
                let x = rng.random_range(0.0..size - w);
                let y = rng.random_range(0.0..size - h);
                Rect { x0: x, y0: y, x1: x + w, y1: y + h }
            };
            let hits_spawn = r.x0 < keep_spawn.x1 && r.x1 > keep_spawn.x0 && r.y0 < keep_spawn.y1 && r.y1 > keep_spawn.y0;
            let near = Vec2::new(goal.x.clamp(r.x0, r.x1), goal.y.clamp(r.y0, r.y1));
            if hits_spawn || near.dist(goal) < keep_goal {
                continue;
            }
            stamp(&mut map, &r);
        }
        if map.occupied_count() - border >= target && map.is_connected(cfg.robot_radius_cm) {
            return Ok(map);
        }
    }
    Err(Error::Map(format!(
        "no connected layout at density {} after {} attempts",
        cfg.density, cfg.max_attempts
    )))
}

fn stamp(map: &mut GridMap, r: &Rect) {
    let cs = map.cell_size_cm() as f64;
    let cx0 = (r.x0 / cs).floor().max(0.0) as usize;
    let cy0 = (r.y0 / cs).floor().max(0.0) as usize;
    let cx1 = ((r.x1 / cs).ceil() as usize).min(map.cols());
    let cy1 = ((r.y1 / cs).ceil() as usize).min(map.rows());
    for cy in cy0..cy1 {
        for cx in cx0..cx1 {
            if map.kind(cx, cy) == CellKind::Free {
                map.set_occupied(cx, cy, true);
            }
        }
    }
}

/// `count` maps; map `k` depends only on `(seed, k)`.
pub fn generate_set(cfg: &MapGenConfig, count: usize, seed: u64) -> Result<Vec<GridMap>> {
    (0..count).map(|k| generate(cfg, &mut derive_rng(seed, k as u64))).collect()
}

/// Writes `map_000.txt`, `map_001.txt`, … into `dir`.
pub fn write_set(maps: &[GridMap], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    maps.iter()
        .enumerate()
        .map(|(k, m)| {
            let p = dir.join(format!("map_{k:03}.txt"));
            std::fs::write(&p, m.to_text()).map_err(|e| Error::io(&p, e))?;
            Ok(p)
        })
        .collect()
}

/// All `*.txt` maps in `dir`, sorted by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<(PathBuf, GridMap)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Map(format!("no .txt maps in {}", dir.display())));
    }
    paths
        .into_iter()
        .map(|p| GridMap::load(&p).map(|m| (p, m)))
        .collect()
}
