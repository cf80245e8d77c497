//! Battlefield motion model: speed and heading updates bounded by the
//! unit's acceleration, deceleration and maneuverability, a terrain delay
//! term, and additive Gaussian process noise.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MotionError {
    #[error("entity is stalled (commanded speed {0} m/s), travel time undefined")]
    Stalled(f64),
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionState {
    pub position: Point2,
    /// Speed, m/s.
    pub v: f64,
    /// Heading, rad.
    pub theta: f64,
}

impl MotionState {
    pub fn new(x: f64, y: f64, v: f64, theta: f64) -> Self {
        Self {
            position: Point2::new(x, y),
            v,
            theta: wrap_angle(theta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub v_desired: f64,
    pub delta_theta: f64,
    /// Optional acceleration magnitude; caps the unit's capability for this step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_command: Option<f64>,
}

impl ControlInput {
    pub fn new(v_desired: f64, delta_theta: f64) -> Self {
        Self {
            v_desired,
            delta_theta,
            a_command: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionLimits {
    /// Acceleration capability, m/s^2.
    pub accel: f64,
    /// Deceleration capability, m/s^2.
    pub decel: f64,
    /// Maximum heading rate, rad/s.
    pub maneuverability: f64,
    pub v_max: f64,
    pub dt: f64,
}

impl Default for MotionLimits {
    fn default() -> Self {
        Self {
            accel: 1.0,
            decel: 2.0,
            maneuverability: 1.0,
            v_max: 5.0,
            dt: 0.1,
        }
    }
}

impl MotionLimits {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("accel", self.accel),
            ("decel", self.decel),
            ("maneuverability", self.maneuverability),
            ("v_max", self.v_max),
            ("dt", self.dt),
        ];
        for (name, value) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(format!("motion.{name} must be positive, got {value}"));
            }
        }
        Ok(())
    }

    /// Largest heading change allowed in one step.
    pub fn max_turn(&self) -> f64 {
        self.maneuverability * self.dt
    }
}

/// Standard deviations of the zero-mean process noises.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_vx: f64,
    pub sigma_vy: f64,
    pub sigma_ax: f64,
    pub sigma_ay: f64,
    pub sigma_theta: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            sigma_x: 0.01,
            sigma_y: 0.01,
            sigma_vx: 0.05,
            sigma_vy: 0.05,
            sigma_ax: 0.0,
            sigma_ay: 0.0,
            sigma_theta: 0.005,
        }
    }
}

impl NoiseParams {
    pub fn zero() -> Self {
        Self {
            sigma_x: 0.0,
            sigma_y: 0.0,
            sigma_vx: 0.0,
            sigma_vy: 0.0,
            sigma_ax: 0.0,
            sigma_ay: 0.0,
            sigma_theta: 0.0,
        }
    }

    /// Scalar speed noise for one step of length `dt`: the per-axis velocity
    /// noise collapsed by `max`, plus the speed change caused by the
    /// acceleration noise over the step.
    pub fn speed_sigma(&self, dt: f64) -> f64 {
        let sv = self.sigma_vx.max(self.sigma_vy);
        let sa = self.sigma_ax.max(self.sigma_ay) * dt;
        sv.hypot(sa)
    }

    pub fn validate(&self) -> Result<(), String> {
        let all = [
            self.sigma_x,
            self.sigma_y,
            self.sigma_vx,
            self.sigma_vy,
            self.sigma_ax,
            self.sigma_ay,
            self.sigma_theta,
        ];
        if all.iter().all(|s| *s >= 0.0 && s.is_finite()) {
            Ok(())
        } else {
            Err("process noise sigmas must be finite and >= 0".into())
        }
    }
}

/// Terrain delay field. `tau` is a delay distance in meters, sampled at the
/// start of each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerrainModel {
    Constant {
        tau: f64,
    },
    /// Piecewise-constant grid; `grid[row][col]` covers
    /// `[origin.x + col*cell, ...) x [origin.y + row*cell, ...)`. Points off
    /// the grid use the nearest cell.
    Grid {
        origin: Point2,
        cell: f64,
        grid: Vec<Vec<f64>>,
    },
}

impl Default for TerrainModel {
    fn default() -> Self {
        TerrainModel::Constant { tau: 0.0 }
    }
}

impl TerrainModel {
    pub fn tau_at(&self, p: &Point2) -> f64 {
        match self {
            TerrainModel::Constant { tau } => *tau,
            TerrainModel::Grid { origin, cell, grid } => {
                let rows = grid.len();
                let row = (((p.y - origin.y) / cell).floor().max(0.0) as usize).min(rows - 1);
                let cols = grid[row].len();
                let col = (((p.x - origin.x) / cell).floor().max(0.0) as usize).min(cols - 1);
                grid[row][col]
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            TerrainModel::Constant { tau } if *tau >= 0.0 && tau.is_finite() => Ok(()),
            TerrainModel::Constant { tau } => Err(format!("terrain tau must be >= 0, got {tau}")),
            TerrainModel::Grid { cell, grid, .. } => {
                if !(*cell > 0.0) {
                    return Err("terrain grid cell size must be positive".into());
                }
                if grid.is_empty() || grid.iter().any(|r| r.is_empty()) {
                    return Err("terrain grid must be non-empty".into());
                }
                if grid.iter().flatten().any(|t| !(*t >= 0.0 && t.is_finite())) {
                    return Err("terrain grid values must be finite and >= 0".into());
                }
                Ok(())
            }
        }
    }
}

fn rate_limits(u: &ControlInput, lim: &MotionLimits) -> (f64, f64) {
    match u.a_command {
        Some(a) => (a.abs().min(lim.accel), a.abs().min(lim.decel)),
        None => (lim.accel, lim.decel),
    }
}

/// Which term of the speed update was active; the EKF Jacobian needs it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SpeedBranch {
    /// Speed follows `v + a*dt` or `v - d*dt` (unit slope in `v`).
    RateLimited,
    /// Speed pinned at the command, `v_max` or zero.
    Saturated,
}

pub(crate) fn update_velocity_branch(v: f64, u: &ControlInput, lim: &MotionLimits) -> (f64, SpeedBranch) {
    let (up, down) = rate_limits(u, lim);
    if u.v_desired > v {
        let ramp = v + up * lim.dt;
        let cap = u.v_desired.min(lim.v_max);
        if ramp < cap {
            (ramp, SpeedBranch::RateLimited)
        } else {
            (cap, SpeedBranch::Saturated)
        }
    } else {
        let ramp = v - down * lim.dt;
        let floor = u.v_desired.max(0.0);
        if ramp > floor {
            (ramp, SpeedBranch::RateLimited)
        } else {
            (floor, SpeedBranch::Saturated)
        }
    }
}

/// Speed after one step, limited by acceleration/deceleration capability.
pub fn update_velocity(v: f64, u: &ControlInput, lim: &MotionLimits) -> f64 {
    update_velocity_branch(v, u, lim).0
}

pub fn clip_turn(delta_theta: f64, lim: &MotionLimits) -> f64 {
    let m = lim.max_turn();
    delta_theta.clamp(-m, m)
}

/// Heading after one step; the commanded change is clipped to `m*dt`.
pub fn update_heading(theta: f64, u: &ControlInput, lim: &MotionLimits) -> f64 {
    wrap_angle(theta + clip_turn(u.delta_theta, lim))
}

pub fn update_position(s: &MotionState, lim: &MotionLimits) -> Point2 {
    s.position + Point2::from_heading(s.theta) * (s.v * lim.dt)
}

/// Time to travel from `p1` to `p2` at speed `v_c`, plus the terrain delay
/// `tau(p1) / v_c`.
pub fn terrain_travel_time(p1: &Point2, p2: &Point2, v_c: f64, terrain: &TerrainModel) -> Result<f64, MotionError> {
    if !(v_c > 0.0) {
        return Err(MotionError::Stalled(v_c));
    }
    Ok(p1.distance(p2) / v_c + terrain.tau_at(p1) / v_c)
}

/// Displacement along the new heading for a step at speed `v`, including
/// the terrain delay. Zero for a stalled unit.
pub(crate) fn step_displacement(p: &Point2, v: f64, theta: f64, lim: &MotionLimits, terrain: &TerrainModel) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    let nominal = *p + Point2::from_heading(theta) * (v * lim.dt);
    match terrain_travel_time(p, &nominal, v, terrain) {
        Ok(t_tau) => v * t_tau,
        Err(_) => 0.0,
    }
}

/// Noise-free successor state.
pub fn deterministic_step(s: &MotionState, u: &ControlInput, lim: &MotionLimits, terrain: &TerrainModel) -> MotionState {
    let v = update_velocity(s.v, u, lim);
    let theta = update_heading(s.theta, u, lim);
    let disp = step_displacement(&s.position, v, theta, lim, terrain);
    MotionState {
        position: s.position + Point2::from_heading(theta) * disp,
        v,
        theta,
    }
}

/// One stochastic step. Noise is drawn in a fixed order (speed, heading,
/// x, y) whether or not the sigmas are zero, so random streams stay aligned
/// across noise settings.
pub fn step<R: Rng + ?Sized>(
    s: &MotionState,
    u: &ControlInput,
    lim: &MotionLimits,
    noise: &NoiseParams,
    terrain: &TerrainModel,
    rng: &mut R,
) -> MotionState {
    let e_v: f64 = rng.sample(StandardNormal);
    let e_theta: f64 = rng.sample(StandardNormal);
    let e_x: f64 = rng.sample(StandardNormal);
    let e_y: f64 = rng.sample(StandardNormal);

    let v = (update_velocity(s.v, u, lim) + noise.speed_sigma(lim.dt) * e_v).clamp(0.0, lim.v_max);
    let theta = wrap_angle(s.theta + clip_turn(u.delta_theta, lim) + noise.sigma_theta * e_theta);
    let disp = step_displacement(&s.position, v, theta, lim, terrain);
    let position = s.position
        + Point2::from_heading(theta) * disp
        + Point2::new(noise.sigma_x * e_x, noise.sigma_y * e_y);
    MotionState { position, v, theta }
}
