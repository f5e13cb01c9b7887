//! A single copy of the simulator: grid world, first-order kinematics with
//! control delay, LiDAR, reward, termination and the MDP state encoding.

mod kinematics;
mod lidar;
mod params;
mod reward;

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;

pub use kinematics::{apply_kinematics, integrate_pose, wrap_angle, VelocityPair};
pub use lidar::{cast_ray, check_collision, lidar_scan, LidarConfig};
pub use params::{DiversityRanges, Interval, SimParams, DELAY_QUEUE_CAPACITY};
pub use reward::{
    compute_reward, encode_state, EncodeInputs, Event, RelativeGeometry, RewardInputs, ARRIVAL_REWARD,
    COLLISION_REWARD, PROXIMITY_CM,
};

use crate::error::{Error, Result};
use crate::map::{GridMap, Rect, Vec2};
use crate::rng::SimRng;
use crate::{N_ACTIONS, STATE_DIM};

pub type State = [f32; STATE_DIM];

/// Target velocities of the five discrete actions:
/// turn left, forward-left, forward, forward-right, turn right.
pub const DEFAULT_ACTIONS: [VelocityPair; N_ACTIONS] = [
    VelocityPair::new(0.36, 1.0),
    VelocityPair::new(18.0, 1.0),
    VelocityPair::new(18.0, 0.0),
    VelocityPair::new(18.0, -1.0),
    VelocityPair::new(0.36, -1.0),
];

/// Boxes dropped onto the map at every reset, away from spawn and goal.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomObstacles {
    pub count: usize,
    pub min_size_cm: f64,
    pub max_size_cm: f64,
}

impl Default for RandomObstacles {
    fn default() -> Self {
        Self {
            count: 0,
            min_size_cm: 15.0,
            max_size_cm: 45.0,
        }
    }
}

/// Static configuration of one environment copy.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    pub robot_radius_cm: f64,
    pub lidar: LidarConfig,
    pub timeout_steps: u32,
    pub actions: [VelocityPair; N_ACTIONS],
    /// Normalisation distance `D`; the map diagonal when `None`.
    pub planning_distance_cm: Option<f64>,
    pub random_obstacles: RandomObstacles,
    pub spawn_attempts: u32,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            robot_radius_cm: 9.0,
            lidar: LidarConfig::default(),
            timeout_steps: 1000,
            actions: DEFAULT_ACTIONS,
            planning_distance_cm: None,
            random_obstacles: RandomObstacles::default(),
            spawn_attempts: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobotState {
    pub pos: Vec2,
    /// In (−π, π].
    pub heading: f64,
    pub velocity: VelocityPair,
    pub radius_cm: f64,
    /// Commanded targets not yet in effect (control delay).
    pub pending: VecDeque<VelocityPair>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub reward: f32,
    /// Collision or arrival.
    pub done: bool,
    /// Timeout.
    pub truncated: bool,
    pub event: Event,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: State,
    pub reward: f32,
    pub done: bool,
    pub truncated: bool,
    pub event: Event,
}

pub struct Env {
    base: Arc<GridMap>,
    /// Working copy carrying per-episode random obstacles.
    world: Option<GridMap>,
    cfg: EnvConfig,
    ranges: DiversityRanges,
    beam_offsets: Vec<f64>,
    planning_distance: f64,
    params: SimParams,
    robot: RobotState,
    /// Target in effect while the delay queue is still filling.
    held_target: VelocityPair,
    start: Vec2,
    frame_angle: f64,
    steps: u32,
    ended: bool,
    needs_reset: bool,
    scan: Vec<f64>,
}

impl Env {
    pub fn new(map: Arc<GridMap>, cfg: EnvConfig, ranges: DiversityRanges) -> Result<Self> {
        ranges.validate()?;
        if ranges.control_delay_steps.1 > DELAY_QUEUE_CAPACITY {
            return Err(Error::Config("delay range exceeds queue capacity".into()));
        }
        if cfg.lidar.n_beams != crate::N_BEAMS {
            return Err(Error::Config(format!(
                "state layout needs {} beams, got {}",
                crate::N_BEAMS,
                cfg.lidar.n_beams
            )));
        }
        if !(cfg.robot_radius_cm > 0.0 && cfg.lidar.max_range_cm > 0.0) {
            return Err(Error::Config("robot radius and LiDAR range must be positive".into()));
        }
        let planning_distance = cfg.planning_distance_cm.unwrap_or_else(|| map.diagonal_cm());
        let world = (cfg.random_obstacles.count > 0).then(|| (*map).clone());
        let nominal = ranges.sample_mid();
        Ok(Self {
            beam_offsets: cfg.lidar.beam_offsets(),
            scan: vec![cfg.lidar.max_range_cm; cfg.lidar.n_beams],
            robot: RobotState {
                pos: map.spawn_region().center(),
                heading: 0.0,
                velocity: VelocityPair::default(),
                radius_cm: cfg.robot_radius_cm,
                pending: VecDeque::with_capacity(DELAY_QUEUE_CAPACITY + 1),
            },
            start: map.spawn_region().center(),
            base: map,
            world,
            cfg,
            ranges,
            planning_distance,
            params: nominal,
            held_target: VelocityPair::default(),
            frame_angle: 0.0,
            steps: 0,
            ended: false,
            needs_reset: true,
        })
    }

    pub fn map(&self) -> &GridMap {
        self.world.as_ref().unwrap_or(&self.base)
    }

    pub fn base_map(&self) -> &Arc<GridMap> {
        &self.base
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn ranges(&self) -> &DiversityRanges {
        &self.ranges
    }

    pub fn set_ranges(&mut self, ranges: DiversityRanges) -> Result<()> {
        ranges.validate()?;
        self.ranges = ranges;
        Ok(())
    }

    pub fn robot(&self) -> &RobotState {
        &self.robot
    }

    pub fn start(&self) -> Vec2 {
        self.start
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn planning_distance_cm(&self) -> f64 {
        self.planning_distance
    }

    pub fn last_scan(&self) -> &[f64] {
        &self.scan
    }

    fn limits(&self) -> VelocityPair {
        VelocityPair::new(self.params.v_linear_max_cm_s, self.params.v_angular_max_rad_s)
    }

    /// Resamples the physical parameters, redraws random obstacles, samples a
    /// collision-free start pose and writes the initial state into `out`.
    pub fn reset_into(&mut self, rng: &mut SimRng, out: &mut [f32]) -> Result<()> {
        self.params = self.ranges.sample(rng);
        if self.cfg.random_obstacles.count > 0 {
            self.redraw_obstacles(rng);
        }
        let spawn = self.base.spawn_region();
        let mut placed = false;
        for _ in 0..self.cfg.spawn_attempts {
            let p = Vec2::new(
                spawn.x0 + (spawn.x1 - spawn.x0) * rng.random::<f64>(),
                spawn.y0 + (spawn.y1 - spawn.y0) * rng.random::<f64>(),
            );
            let heading = wrap_angle(PI - 2.0 * PI * rng.random::<f64>());
            if !check_collision(self.map(), p, self.cfg.robot_radius_cm) {
                self.robot.pos = p;
                self.robot.heading = heading;
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Map(format!(
                "no collision-free spawn pose after {} attempts",
                self.cfg.spawn_attempts
            )));
        }
        self.robot.velocity = VelocityPair::default();
        self.robot.pending.clear();
        self.held_target = VelocityPair::default();
        self.start = self.robot.pos;
        let g = self.base.goal_center().sub(self.start);
        self.frame_angle = if g.norm() > 0.0 { g.y.atan2(g.x) } else { 0.0 };
        self.steps = 0;
        self.ended = false;
        self.needs_reset = false;
        self.scan_now(rng);
        self.encode_into(out);
        Ok(())
    }

    pub fn reset(&mut self, rng: &mut SimRng) -> Result<State> {
        let mut s = [0f32; STATE_DIM];
        self.reset_into(rng, &mut s)?;
        Ok(s)
    }

    /// Advances one control interval under `action` and writes the next
    /// state into `out`.
    pub fn step_into(&mut self, action: usize, rng: &mut SimRng, out: &mut [f32]) -> Result<StepInfo> {
        if self.needs_reset {
            return Err(Error::Usage("environment must be reset before stepping".into()));
        }
        if self.ended {
            return Err(Error::Usage("episode has ended; call reset first".into()));
        }
        if action >= N_ACTIONS {
            return Err(Error::Usage(format!("action {action} outside 0..{N_ACTIONS}")));
        }

        self.robot.pending.push_back(self.cfg.actions[action]);
        if self.robot.pending.len() > self.params.control_delay_steps {
            self.held_target = self.robot.pending.pop_front().expect("non-empty queue");
        }
        let limits = self.limits();
        self.robot.velocity = apply_kinematics(self.robot.velocity, self.held_target, self.params.k, limits);
        let (pos, heading) =
            integrate_pose(self.robot.pos, self.robot.heading, self.robot.velocity, self.params.control_interval_s);
        self.robot.pos = pos;
        self.robot.heading = heading;
        self.steps += 1;
        self.scan_now(rng);

        let goal = self.base.goal_center();
        let event = if check_collision(self.map(), pos, self.cfg.robot_radius_cm) {
            Event::Collision
        } else if pos.dist(goal) <= self.base.goal_radius_cm() {
            Event::Arrival
        } else if self.steps >= self.cfg.timeout_steps {
            Event::Timeout
        } else {
            Event::None
        };
        let geom = RelativeGeometry::new(pos, heading, self.start, goal);
        let reward = compute_reward(&RewardInputs {
            event,
            geom,
            v_linear: self.robot.velocity.linear,
            v_linear_max: limits.linear,
            scan_min_cm: self.scan.iter().copied().fold(f64::INFINITY, f64::min),
            planning_distance_cm: self.planning_distance,
        });
        let done = matches!(event, Event::Collision | Event::Arrival);
        let truncated = event == Event::Timeout;
        self.ended = done || truncated;
        self.encode_into(out);
        Ok(StepInfo {
            reward: reward as f32,
            done,
            truncated,
            event,
        })
    }

    pub fn step(&mut self, action: usize, rng: &mut SimRng) -> Result<StepOutcome> {
        let mut state = [0f32; STATE_DIM];
        let info = self.step_into(action, rng, &mut state)?;
        Ok(StepOutcome {
            state,
            reward: info.reward,
            done: info.done,
            truncated: info.truncated,
            event: info.event,
        })
    }

    pub fn is_ended(&self) -> bool {
        self.ended
    }

    /// Current state encoding.
    pub fn encode_into(&self, out: &mut [f32]) {
        encode_state(
            &EncodeInputs {
                pos: self.robot.pos,
                heading: self.robot.heading,
                goal: self.base.goal_center(),
                frame_angle: self.frame_angle,
                planning_distance_cm: self.planning_distance,
                velocity: self.robot.velocity,
                limits: self.limits(),
                scan: &self.scan,
                max_range_cm: self.cfg.lidar.max_range_cm,
            },
            out,
        );
    }

    fn scan_now(&mut self, rng: &mut SimRng) {
        let map = self.world.as_ref().unwrap_or(&self.base);
        lidar_scan(
            map,
            self.robot.pos,
            self.robot.heading,
            &self.cfg.lidar,
            &self.beam_offsets,
            self.params.lidar_noise_std_cm,
            rng,
            &mut self.scan,
        );
    }

    /// Places the configured number of random boxes, keeping them clear of
    /// the spawn region and goal and keeping the goal reachable. Falls back to
    /// the bare map if no connected layout turns up.
    fn redraw_obstacles(&mut self, rng: &mut SimRng) {
        const LAYOUT_ATTEMPTS: usize = 20;
        let ro = self.cfg.random_obstacles.clone();
        let world = self.world.get_or_insert_with(|| (*self.base).clone());
        let clearance = self.cfg.robot_radius_cm;
        let margin = 2.0 * clearance + 10.0;
        let spawn = self.base.spawn_region();
        let keep_out = Rect {
            x0: spawn.x0 - margin,
            y0: spawn.y0 - margin,
            x1: spawn.x1 + margin,
            y1: spawn.y1 + margin,
        };
        let goal = self.base.goal_center();
        let goal_keep_out = self.base.goal_radius_cm() + margin;
        let (w, h) = (self.base.width_cm() as f64, self.base.height_cm() as f64);
        let cs = self.base.cell_size_cm() as f64;

        for _ in 0..LAYOUT_ATTEMPTS {
            world.clone_from(&self.base);
            let mut boxes = 0;
            let mut tries = 0;
            while boxes < ro.count && tries < 50 * ro.count {
                tries += 1;
                let bw = ro.min_size_cm + (ro.max_size_cm - ro.min_size_cm) * rng.random::<f64>();
                let bh = ro.min_size_cm + (ro.max_size_cm - ro.min_size_cm) * rng.random::<f64>();
                let x0 = (w - bw) * rng.random::<f64>();
                let y0 = (h - bh) * rng.random::<f64>();
                let r = Rect { x0, y0, x1: x0 + bw, y1: y0 + bh };
                let overlaps_spawn = r.x0 < keep_out.x1 && r.x1 > keep_out.x0 && r.y0 < keep_out.y1 && r.y1 > keep_out.y0;
                let near_goal = Vec2::new(goal.x.clamp(r.x0, r.x1), goal.y.clamp(r.y0, r.y1)).dist(goal) < goal_keep_out;
                if overlaps_spawn || near_goal {
                    continue;
                }
                let (cx0, cx1) = ((r.x0 / cs).floor() as usize, ((r.x1 / cs).ceil() as usize).min(world.cols()));
                let (cy0, cy1) = ((r.y0 / cs).floor() as usize, ((r.y1 / cs).ceil() as usize).min(world.rows()));
                for cy in cy0..cy1 {
                    for cx in cx0..cx1 {
                        world.set_occupied(cx, cy, true);
                    }
                }
                boxes += 1;
            }
            if world.is_connected(clearance) {
                return;
            }
        }
        world.clone_from(&self.base);
    }
}

impl DiversityRanges {
    /// Midpoint parameters; used before the first reset.
    pub fn sample_mid(&self) -> SimParams {
        let mid = |i: Interval| 0.5 * (i.lo + i.hi);
        SimParams {
            k: mid(self.k),
            control_interval_s: mid(self.control_interval_s),
            control_delay_steps: (self.control_delay_steps.0 + self.control_delay_steps.1) / 2,
            v_linear_max_cm_s: mid(self.v_linear_max_cm_s),
            v_angular_max_rad_s: mid(self.v_angular_max_rad_s),
            lidar_noise_std_cm: mid(self.lidar_noise_std_cm),
        }
    }
}
