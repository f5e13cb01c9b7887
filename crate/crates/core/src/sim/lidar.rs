//! Grid ray casting for the planar LiDAR and disc collision tests.

use rand_distr::{Distribution, Normal};

use crate::map::{GridMap, Vec2};
use crate::rng::SimRng;

#[derive(Clone, Debug, PartialEq)]
pub struct LidarConfig {
    pub n_beams: usize,
    pub fov_rad: f64,
    pub max_range_cm: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            n_beams: crate::N_BEAMS,
            fov_rad: 270f64.to_radians(),
            max_range_cm: 300.0,
        }
    }
}

impl LidarConfig {
    /// Beam directions relative to the heading, evenly spaced across the
    /// field of view and centred on it.
    pub fn beam_offsets(&self) -> Vec<f64> {
        if self.n_beams == 1 {
            return vec![0.0];
        }
        let step = self.fov_rad / (self.n_beams - 1) as f64;
        (0..self.n_beams).map(|i| -0.5 * self.fov_rad + i as f64 * step).collect()
    }
}

/// Distance from `origin` along `angle` to the first occupied cell, capped at
/// `max_range`. Amanatides–Woo traversal; exact to the cell boundary.
pub fn cast_ray(map: &GridMap, origin: Vec2, angle: f64, max_range: f64) -> f64 {
    let cs = map.cell_size_cm() as f64;
    let (px, py) = (origin.x / cs, origin.y / cs);
    let (dx, dy) = (angle.cos(), angle.sin());
    let (mut ix, mut iy) = (px.floor() as i64, py.floor() as i64);
    if map.is_occupied(ix, iy) {
        return 0.0;
    }
    let limit = max_range / cs;
    let (step_x, mut t_max_x, t_delta_x) = axis_setup(px, ix, dx);
    let (step_y, mut t_max_y, t_delta_y) = axis_setup(py, iy, dy);
    loop {
        let t = if t_max_x < t_max_y {
            ix += step_x;
            let t = t_max_x;
            t_max_x += t_delta_x;
            t
        } else {
            iy += step_y;
            let t = t_max_y;
            t_max_y += t_delta_y;
            t
        };
        if t >= limit {
            return max_range;
        }
        if map.is_occupied(ix, iy) {
            return t * cs;
        }
    }
}

fn axis_setup(p: f64, i: i64, d: f64) -> (i64, f64, f64) {
    if d > 0.0 {
        (1, ((i + 1) as f64 - p) / d, 1.0 / d)
    } else if d < 0.0 {
        (-1, (p - i as f64) / -d, -1.0 / d)
    } else {
        (0, f64::INFINITY, f64::INFINITY)
    }
}

/// Scans all beams into `out`. With `noise_std > 0`, zero-mean Gaussian
/// noise is added to each range and the result clamped to `[0, max_range]`;
/// with `noise_std == 0` the stream is not touched.
pub fn lidar_scan(
    map: &GridMap,
    origin: Vec2,
    heading: f64,
    cfg: &LidarConfig,
    offsets: &[f64],
    noise_std: f64,
    rng: &mut SimRng,
    out: &mut [f64],
) {
    debug_assert_eq!(offsets.len(), cfg.n_beams);
    for (o, off) in out.iter_mut().zip(offsets) {
        *o = cast_ray(map, origin, heading + off, cfg.max_range_cm);
    }
    if noise_std > 0.0 {
        let normal = Normal::new(0.0, noise_std).expect("finite std");
        for o in out.iter_mut() {
            *o = (*o + normal.sample(rng)).clamp(0.0, cfg.max_range_cm);
        }
    }
}

/// True iff an occupied cell intersects the disc, or the disc leaves the map.
pub fn check_collision(map: &GridMap, center: Vec2, radius: f64) -> bool {
    let (w, h) = (map.width_cm() as f64, map.height_cm() as f64);
    if center.x - radius < 0.0 || center.y - radius < 0.0 || center.x + radius > w || center.y + radius > h {
        return true;
    }
    let cs = map.cell_size_cm() as f64;
    let cx0 = ((center.x - radius) / cs).floor() as i64;
    let cx1 = ((center.x + radius) / cs).floor() as i64;
    let cy0 = ((center.y - radius) / cs).floor() as i64;
    let cy1 = ((center.y + radius) / cs).floor() as i64;
    let r2 = radius * radius;
    for cy in cy0..=cy1 {
        // Nearest point of the cell row band to the centre.
        let (y0, y1) = (cy as f64 * cs, (cy + 1) as f64 * cs);
        let ny = center.y.clamp(y0, y1) - center.y;
        if ny * ny >= r2 {
            continue;
        }
        for cx in cx0..=cx1 {
            if !map.is_occupied(cx, cy) {
                continue;
            }
            let (x0, x1) = (cx as f64 * cs, (cx + 1) as f64 * cs);
            let nx = center.x.clamp(x0, x1) - center.x;
            if nx * nx + ny * ny < r2 {
                return true;
            }
        }
    }
    false
}
