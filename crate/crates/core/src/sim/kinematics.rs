//! First-order velocity response and unicycle pose integration.

use std::f64::consts::PI;

use crate::map::Vec2;

/// A (linear cm/s, angular rad/s) velocity command or state.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VelocityPair {
    pub linear: f64,
    pub angular: f64,
}

impl VelocityPair {
    pub const fn new(linear: f64, angular: f64) -> Self {
        Self { linear, angular }
    }
}

/// `k·v + (1 − k)·target` per component, clamped to `±limits`.
///
/// `k` lumps inertia, friction and the low-level controller together;
/// `k = 0` is an instantaneous response.
pub fn apply_kinematics(v: VelocityPair, target: VelocityPair, k: f64, limits: VelocityPair) -> VelocityPair {
    let blend = |cur: f64, tgt: f64, max: f64| (k * cur + (1.0 - k) * tgt).clamp(-max, max);
    VelocityPair {
        linear: blend(v.linear, target.linear, limits.linear),
        angular: blend(v.angular, target.angular, limits.angular),
    }
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

const STRAIGHT_EPS: f64 = 1e-6;

/// Exact arc integration for velocities held constant over `dt`.
pub fn integrate_pose(pos: Vec2, heading: f64, v: VelocityPair, dt: f64) -> (Vec2, f64) {
    let (vl, w) = (v.linear, v.angular);
    if w.abs() < STRAIGHT_EPS {
        let p = Vec2::new(pos.x + vl * heading.cos() * dt, pos.y + vl * heading.sin() * dt);
        return (p, wrap_angle(heading + w * dt));
    }
    let th1 = heading + w * dt;
    let r = vl / w;
    let p = Vec2::new(pos.x + r * (th1.sin() - heading.sin()), pos.y - r * (th1.cos() - heading.cos()));
    (p, wrap_angle(th1))
}
