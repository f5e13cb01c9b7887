//! Goal-relative geometry, the shaped reward and the 32-value state layout.

use std::f64::consts::PI;

use super::kinematics::{wrap_angle, VelocityPair};
use crate::map::Vec2;
use crate::N_BEAMS;

pub const COLLISION_REWARD: f64 = -10.0;
pub const ARRIVAL_REWARD: f64 = 75.0;
/// Obstacle proximity below which the proximity penalty applies.
pub const PROXIMITY_CM: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Event {
    None,
    Collision,
    Arrival,
    Timeout,
}

/// Robot pose relative to the goal and the start→goal segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelativeGeometry {
    /// Distance robot → goal centre.
    pub d1: f64,
    /// Distance from the robot to the start→goal segment.
    pub d2: f64,
    /// Signed angle from the heading to the robot→goal bearing, in (−π, π].
    pub alpha: f64,
}

impl RelativeGeometry {
    pub fn new(pos: Vec2, heading: f64, start: Vec2, goal: Vec2) -> Self {
        let to_goal = goal.sub(pos);
        let d1 = to_goal.norm();
        let seg = goal.sub(start);
        let len2 = seg.x * seg.x + seg.y * seg.y;
        let d2 = if len2 == 0.0 {
            pos.dist(start)
        } else {
            let rel = pos.sub(start);
            let t = ((rel.x * seg.x + rel.y * seg.y) / len2).clamp(0.0, 1.0);
            pos.dist(Vec2::new(start.x + t * seg.x, start.y + t * seg.y))
        };
        let alpha = if d1 == 0.0 {
            0.0
        } else {
            wrap_angle(to_goal.y.atan2(to_goal.x) - heading)
        };
        Self { d1, d2, alpha }
    }
}

/// Inputs of the per-step reward other than the geometry.
#[derive(Clone, Copy, Debug)]
pub struct RewardInputs {
    pub event: Event,
    pub geom: RelativeGeometry,
    pub v_linear: f64,
    pub v_linear_max: f64,
    pub scan_min_cm: f64,
    /// Normalisation distance for `d1` and `d2`.
    pub planning_distance_cm: f64,
}

pub fn compute_reward(x: &RewardInputs) -> f64 {
    match x.event {
        Event::Collision => COLLISION_REWARD,
        Event::Arrival => ARRIVAL_REWARD,
        Event::None | Event::Timeout => {
            let d = x.planning_distance_cm;
            let r_d1 = (1.0 - x.geom.d1 / d).clamp(0.0, 1.0);
            let r_d2 = (1.0 - x.geom.d2 / d).clamp(0.0, 1.0);
            let r_v = if x.v_linear > 0.5 * x.v_linear_max { 1.0 } else { 0.0 };
            let r_alpha = (1.0 - 2.0 * x.geom.alpha.abs() / PI).clamp(-1.0, 1.0);
            let r_d = if x.scan_min_cm < PROXIMITY_CM { -1.0 } else { 0.0 };
            0.3 * r_d1 + 0.1 * r_d2 + 0.3 * r_v + 0.3 * r_alpha + 0.1 * r_d
        }
    }
}

/// Everything the state encoder needs.
pub struct EncodeInputs<'a> {
    pub pos: Vec2,
    pub heading: f64,
    pub goal: Vec2,
    /// Orientation of the relative frame (start→goal direction).
    pub frame_angle: f64,
    pub planning_distance_cm: f64,
    pub velocity: VelocityPair,
    pub limits: VelocityPair,
    pub scan: &'a [f64],
    pub max_range_cm: f64,
}

/// Writes `[dx, dy, α, v_l, v_a, lidar×27]`, each normalised into [−1, 1].
///
/// `(dx, dy)` is goal − robot expressed in a frame whose x axis points from
/// the episode start towards the goal, divided by the planning distance.
pub fn encode_state(x: &EncodeInputs<'_>, out: &mut [f32]) {
    debug_assert_eq!(out.len(), 5 + N_BEAMS);
    let rel = x.goal.sub(x.pos);
    let (s, c) = x.frame_angle.sin_cos();
    let fx = c * rel.x + s * rel.y;
    let fy = -s * rel.x + c * rel.y;
    let d = x.planning_distance_cm;
    let alpha = if rel.norm() == 0.0 {
        0.0
    } else {
        wrap_angle(rel.y.atan2(rel.x) - x.heading)
    };
    out[0] = (fx / d).clamp(-1.0, 1.0) as f32;
    out[1] = (fy / d).clamp(-1.0, 1.0) as f32;
    out[2] = (alpha / PI) as f32;
    out[3] = (x.velocity.linear / x.limits.linear).clamp(-1.0, 1.0) as f32;
    out[4] = (x.velocity.angular / x.limits.angular).clamp(-1.0, 1.0) as f32;
    for (o, r) in out[5..].iter_mut().zip(x.scan) {
        *o = (r / x.max_range_cm).clamp(0.0, 1.0) as f32;
    }
}
