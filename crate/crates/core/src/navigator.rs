//! Safe-path navigation: the convex-hull and centroid maneuvering methods
//! and the closed loop of motion, sensing, filtering and replanning.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filters::{Estimator, FilterConfig, FilterError, FilterKind, ModelContext};
use crate::geometry::{
    centroid, closest_point_on_segment, corridor_hull, point_segment_distance, split_polyline, ConvexPolygon, GeometryError, Point2, Polyline,
};
use crate::localization::{measure_imu, measure_position, LocalizationError, SensorNoise};
use crate::motion::{deterministic_step, step, wrap_angle, ControlInput, MotionLimits, MotionState, NoiseParams, TerrainModel};
use crate::planner::{plan, Circle, ObstacleMap, PlannerConfig};
use crate::risk::{compare_trajectories, SafePathBuffer, TrajectoryMetrics, RESAMPLE_POINTS};
use crate::scenario::World;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NavError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Localization(#[from] LocalizationError),
    #[error("estimate ({0:.2}, {1:.2}) lies outside every segment hull")]
    OutsideHulls(f64, f64),
    #[error("more than {0} consecutive back-steps")]
    BackStepLimit(u32),
    #[error("invalid navigation setup: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Chull,
    #[default]
    Centroid,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Chull => "chull",
            Method::Centroid => "centroid",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chull" => Ok(Method::Chull),
            "centroid" => Ok(Method::Centroid),
            other => Err(format!("unknown method '{other}' (expected chull or centroid)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NavConfig {
    pub method: Method,
    /// Speed of the default command, m/s.
    pub cruise_speed: f64,
    pub subsegments_per_segment: usize,
    /// Distance ahead of the predicted position that the hull check probes, m.
    pub lookahead: f64,
    /// How far ahead obstacles are looked for, m.
    pub obstacle_check_radius: f64,
    /// Required gap between the entity and an obstacle edge, m.
    pub clearance: f64,
    pub max_steps: usize,
    pub goal_radius: f64,
    pub max_back_steps: u32,
    /// A detour waypoint counts as reached within this distance, m.
    pub waypoint_radius: f64,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            method: Method::Centroid,
            cruise_speed: 2.0,
            subsegments_per_segment: 5,
            lookahead: 4.0,
            obstacle_check_radius: 10.0,
            clearance: 1.0,
            max_steps: 6000,
            goal_radius: 0.2,
            max_back_steps: 3,
            waypoint_radius: 1.5,
        }
    }
}

impl NavConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_steps == 0 {
            return Err("navigation.max_steps must be positive".into());
        }
        if self.subsegments_per_segment == 0 {
            return Err("navigation.subsegments_per_segment must be positive".into());
        }
        let nonneg = [
            ("cruise_speed", self.cruise_speed),
            ("lookahead", self.lookahead),
            ("obstacle_check_radius", self.obstacle_check_radius),
            ("clearance", self.clearance),
            ("goal_radius", self.goal_radius),
            ("waypoint_radius", self.waypoint_radius),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("navigation.{name} must be finite and >= 0"));
            }
        }
        if !(self.cruise_speed > 0.0) {
            return Err("navigation.cruise_speed must be positive".into());
        }
        Ok(())
    }

    pub fn default_command(&self) -> ControlInput {
        ControlInput::new(self.cruise_speed, 0.0)
    }
}

/// Command that turns toward `to`, holding the current speed. A target at
/// the current position yields the zero command.
pub fn compute_control_input(from: &MotionState, to: &Point2, _lim: &MotionLimits) -> ControlInput {
    if *to == from.position {
        return ControlInput::new(0.0, 0.0);
    }
    ControlInput::new(from.v, wrap_angle(from.position.bearing_to(to) - from.theta))
}

fn steer(from: &MotionState, to: &Point2, lim: &MotionLimits, cruise: f64) -> ControlInput {
    let mut u = compute_control_input(from, to, lim);
    u.v_desired = cruise;
    u
}

/// Per-segment hulls and the reference points the hull method steers to.
#[derive(Debug, Clone)]
pub struct HullSet {
    pub hulls: Vec<ConvexPolygon>,
    /// Arc length along the central path where each segment ends.
    pub segment_end: Vec<f64>,
    pub centroids: Vec<Point2>,
    pub centroid_arc: Vec<f64>,
    /// Ends of the corridor's finish line across the goal.
    pub finish: (Point2, Point2),
    pub half_width: f64,
}

impl HullSet {
    pub fn new(buffer: &SafePathBuffer) -> Result<Self, NavError> {
        let hulls = buffer
            .segments
            .iter()
            .map(|s| corridor_hull(s, buffer.half_width))
            .collect::<Result<Vec<_>, _>>()?;
        let mut acc = 0.0;
        let segment_end = buffer
            .segments
            .iter()
            .map(|s| {
                acc += s.length();
                acc
            })
            .collect();
        let centroids: Vec<Point2> = hulls.iter().map(|h| h.vertex_centroid()).collect();
        let centroid_arc = centroids.iter().map(|c| buffer.central.project(c).arc_length).collect();
        let pts = buffer.central.points();
        let goal = pts[pts.len() - 1];
        let d = goal - pts[pts.len() - 2];
        let normal = Point2::new(-d.y, d.x) * (buffer.half_width / d.norm());
        Ok(Self {
            hulls,
            segment_end,
            centroids,
            centroid_arc,
            finish: (goal + normal, goal - normal),
            half_width: buffer.half_width,
        })
    }

    fn in_window(&self, segment: usize, p: &Point2) -> bool {
        self.hulls[segment].contains(p) || self.hulls.get(segment + 1).is_some_and(|h| h.contains(p))
    }

    fn in_any(&self, p: &Point2) -> bool {
        self.hulls.iter().any(|h| h.contains(p))
    }
}

/// Mutable progress of the hull method within one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HullProgress {
    pub segment: usize,
    pub last_confirmed: Point2,
    pub back_steps: u32,
}

/// Decision of one safety-check step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDecision {
    /// Predicted position under `u`.
    pub next: Point2,
    pub u: ControlInput,
    pub back_step: bool,
}

/// Convex-hull safety check for one step.
///
/// The default command is kept when the point `lookahead` meters beyond its
/// predicted position lies in the current or next segment hull. Otherwise
/// the entity turns toward the first hull centroid still ahead of it, or
/// past the last one straight toward the corridor's finish line. If even the corrected prediction leaves both hulls, it steers
/// back toward the last position confirmed inside them.
#[allow(clippy::too_many_arguments)]
pub fn chull_step(
    est: &MotionState,
    central: &Polyline,
    hulls: &HullSet,
    progress: &mut HullProgress,
    lim: &MotionLimits,
    terrain: &TerrainModel,
    cfg: &NavConfig,
) -> Result<StepDecision, NavError> {
    let here = est.position;
    let proj = central.project(&here);
    // the rounded corridor ends are not covered by any hull
    if !hulls.in_any(&here) && proj.distance > hulls.half_width {
        return Err(NavError::OutsideHulls(here.x, here.y));
    }
    let arc = proj.arc_length;
    let advance = |progress: &mut HullProgress, p: &Point2| {
        let s = progress.segment;
        if let Some(next) = hulls.hulls.get(s + 1) {
            if next.contains(p) && (!hulls.hulls[s].contains(p) || arc >= hulls.segment_end[s]) {
                progress.segment = s + 1;
            }
        }
    };
    advance(progress, &here);
    if hulls.in_window(progress.segment, &here) {
        progress.last_confirmed = here;
    }

    let default = cfg.default_command();
    let predicted = deterministic_step(est, &default, lim, terrain);
    let probe = predicted.position + Point2::from_heading(predicted.theta) * cfg.lookahead;
    if hulls.in_window(progress.segment, &probe) {
        advance(progress, &probe);
        progress.back_steps = 0;
        return Ok(StepDecision {
            next: predicted.position,
            u: default,
            back_step: false,
        });
    }

    let s = progress.segment;
    let target = [s, s + 1]
        .into_iter()
        .filter(|k| *k < hulls.centroids.len())
        .find(|k| hulls.centroid_arc[*k] > arc)
        .map(|k| hulls.centroids[k])
        .unwrap_or_else(|| closest_point_on_segment(&here, &hulls.finish.0, &hulls.finish.1).0);
    let u = steer(est, &target, lim, cfg.cruise_speed);
    let corrected = deterministic_step(est, &u, lim, terrain);
    if hulls.in_window(progress.segment, &corrected.position) {
        progress.back_steps = 0;
        return Ok(StepDecision {
            next: corrected.position,
            u,
            back_step: false,
        });
    }

    progress.back_steps += 1;
    if progress.back_steps > cfg.max_back_steps {
        return Err(NavError::BackStepLimit(cfg.max_back_steps));
    }
    let u = steer(est, &progress.last_confirmed, lim, cfg.cruise_speed);
    Ok(StepDecision {
        next: deterministic_step(est, &u, lim, terrain).position,
        u,
        back_step: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub point: Point2,
    pub arc: f64,
    pub segment: usize,
    pub visited: bool,
}

/// Sub-segment centroids of every segment followed by the goal.
pub fn centroid_targets(buffer: &SafePathBuffer, per_segment: usize) -> Result<Vec<Target>, NavError> {
    let mut out = Vec::new();
    for (k, seg) in buffer.segments.iter().enumerate() {
        for piece in split_polyline(seg, per_segment)? {
            let c = centroid(piece.points())?;
            out.push(Target {
                point: c,
                arc: buffer.central.project(&c).arc_length,
                segment: k,
                visited: false,
            });
        }
    }
    let goal = buffer.central.last();
    out.push(Target {
        point: goal,
        arc: buffer.central.length(),
        segment: buffer.segments.len() - 1,
        visited: false,
    });
    Ok(out)
}

/// Centroid method for one step: consume targets reached (within
/// `lookahead / 2`) or passed along the path, then steer to the nearest
/// remaining one. The goal is never consumed. Returns the decision and the
/// segment of the chosen target.
pub fn centroid_step(
    est: &MotionState,
    central: &Polyline,
    targets: &mut [Target],
    lim: &MotionLimits,
    terrain: &TerrainModel,
    cfg: &NavConfig,
) -> (StepDecision, usize) {
    let here = est.position;
    let arc = central.project(&here).arc_length;
    let last = targets.len() - 1;
    for t in targets[..last].iter_mut().filter(|t| !t.visited) {
        if t.point.distance(&here) <= cfg.lookahead / 2.0 || arc > t.arc {
            t.visited = true;
        }
    }
    let chosen = targets
        .iter()
        .filter(|t| !t.visited)
        .min_by(|a, b| a.point.distance(&here).total_cmp(&b.point.distance(&here)))
        .copied()
        .unwrap_or(targets[last]);
    let u = steer(est, &chosen.point, lim, cfg.cruise_speed);
    let next = deterministic_step(est, &u, lim, terrain).position;
    (
        StepDecision {
            next,
            u,
            back_step: false,
        },
        chosen.segment,
    )
}

/// Nearest obstacle whose disc, grown by `clearance`, meets the segment
/// from `from` to `to`.
pub fn detect_obstacle<'m>(from: &Point2, to: &Point2, map: &'m ObstacleMap, clearance: f64) -> Option<&'m Circle> {
    map.obstacles
        .iter()
        .filter(|o| point_segment_distance(&o.center(), from, to) < o.r + clearance)
        .min_by(|a, b| a.center().distance(from).total_cmp(&b.center().distance(from)))
}

/// First point on the central path beyond `obstacle` that keeps `clearance`
/// from every obstacle; the goal if none does.
pub fn rejoin_point(central: &Polyline, obstacle: &Circle, map: &ObstacleMap, clearance: f64, from_arc: f64) -> Point2 {
    let total = central.length();
    let mut s = central.project(&obstacle.center()).arc_length.max(from_arc) + obstacle.r + clearance + 1.0;
    while s < total {
        let p = central.point_at(s);
        if map.obstacles.iter().all(|o| o.center().distance(&p) > o.r + clearance) {
            return p;
        }
        s += 0.5;
    }
    central.last()
}

/// Obstacles grown by `clearance`, shrunk where needed so that neither
/// endpoint starts inside one.
pub fn inflate_obstacles(map: &ObstacleMap, clearance: f64, keep_free: &[Point2]) -> ObstacleMap {
    let obstacles = map
        .obstacles
        .iter()
        .filter_map(|o| {
            let c = o.center();
            let r = keep_free
                .iter()
                .fold(o.r + clearance, |r, p| r.min(c.distance(p) - 0.01));
            (r > 0.0).then(|| Circle::new(c, r))
        })
        .collect();
    ObstacleMap {
        obstacles,
        hazards: map.hazards.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Reached,
    Aborted,
    StepLimit,
}

/// Everything one navigation trial produced.
#[derive(Debug, Clone, PartialEq)]
pub struct NavRecord {
    pub initial_estimate: MotionState,
    pub initial_truth: MotionState,
    pub truth: Vec<MotionState>,
    /// Filter estimate after each step.
    pub predicted: Vec<MotionState>,
    /// Position fix of each step.
    pub measured: Vec<Point2>,
    pub controls: Vec<ControlInput>,
    pub segment_index: Vec<usize>,
    pub replans: u32,
    pub detours: Vec<Vec<Point2>>,
    pub back_steps: u32,
    /// Steps that ended with the estimate outside the buffer.
    pub buffer_violations: u32,
    /// Steps whose true position lay inside an obstacle.
    pub collisions: u32,
    pub degenerate_events: u32,
    pub outcome: Outcome,
    pub abort_reason: Option<String>,
    /// Mean wall-clock time of estimate, filter and safety check per step.
    pub mean_step_ms: f64,
}

impl NavRecord {
    pub fn steps(&self) -> usize {
        self.predicted.len()
    }

    /// Initial estimate followed by the per-step estimates.
    pub fn estimated_points(&self) -> Vec<Point2> {
        std::iter::once(self.initial_estimate.position)
            .chain(self.predicted.iter().map(|s| s.position))
            .collect()
    }

    pub fn truth_points(&self) -> Vec<Point2> {
        std::iter::once(self.initial_truth.position)
            .chain(self.truth.iter().map(|s| s.position))
            .collect()
    }

    /// Estimated trajectory against the buffer's central path.
    pub fn metrics(&self, buffer: &SafePathBuffer) -> Option<TrajectoryMetrics> {
        let est = Polyline::new(self.estimated_points()).ok()?;
        let mut m = compare_trajectories(&est, &buffer.central, &buffer.zones, RESAMPLE_POINTS).ok()?;
        m.mean_step_runtime_ms = self.mean_step_ms;
        Some(m)
    }
}

/// Read-only inputs of a navigation trial.
#[derive(Debug, Clone, Copy)]
pub struct NavSetup<'a> {
    pub world: &'a World,
    pub buffer: &'a SafePathBuffer,
    pub limits: &'a MotionLimits,
    pub process_noise: &'a NoiseParams,
    pub sensor: &'a SensorNoise,
    pub filter_kind: FilterKind,
    pub filter: &'a FilterConfig,
    pub planner: &'a PlannerConfig,
    pub nav: &'a NavConfig,
}

/// Independent random streams of one trial.
pub const STREAM_TRUTH: u64 = 0;
pub const STREAM_SENSOR: u64 = 1;
pub const STREAM_FILTER: u64 = 2;
pub const STREAM_PLANNER: u64 = 3;

pub fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

enum Steering {
    Hull(HullSet, HullProgress),
    Centroid(Vec<Target>),
}

struct Detour {
    waypoints: Vec<Point2>,
    next: usize,
}

impl Detour {
    /// Current waypoint, skipping those reached or passed. None when done.
    fn target(&mut self, here: &Point2, radius: f64) -> Option<Point2> {
        while self.next < self.waypoints.len() {
            let wp = self.waypoints[self.next];
            let passed = if self.next > 0 {
                let a = self.waypoints[self.next - 1];
                let d = wp - a;
                (*here - a).dot(&d) >= d.dot(&d)
            } else {
                false
            };
            if here.distance(&wp) <= radius || passed {
                self.next += 1;
            } else {
                return Some(wp);
            }
        }
        None
    }
}

/// Runs one closed-loop navigation from the start of the buffer's central
/// path to its end.
///
/// Each step picks a command from the filter estimate (hull check, centroid
/// targeting, or a planned detour around an obstacle ahead), moves the true
/// state through the noisy motion model, takes a landmark fix and folds it
/// into the filter. Trials end on reaching the goal, on localization or
/// planning failure, or after `max_steps`.
pub fn navigate(setup: &NavSetup<'_>, seed: u64) -> Result<NavRecord, NavError> {
    let NavSetup {
        world,
        buffer,
        limits,
        process_noise,
        sensor,
        filter_kind,
        filter,
        planner,
        nav,
    } = *setup;
    nav.validate().map_err(NavError::Invalid)?;
    filter.validate()?;
    let mut truth_rng = trial_rng(seed, STREAM_TRUTH);
    let mut sensor_rng = trial_rng(seed, STREAM_SENSOR);
    let mut filter_rng = trial_rng(seed, STREAM_FILTER);
    let mut planner_rng = trial_rng(seed, STREAM_PLANNER);
    let terrain = &world.terrain;
    let central = &buffer.central;
    let goal = central.last();
    let pts = central.points();
    let final_dir = pts[pts.len() - 1] - pts[pts.len() - 2];

    let start = MotionState::new(pts[0].x, pts[0].y, nav.cruise_speed, pts[0].bearing_to(&pts[1]));
    let fix0 = measure_position(&start.position, world, sensor, &mut sensor_rng)?;
    let (v0, theta0) = measure_imu(&start, sensor, &mut sensor_rng);
    let est0 = MotionState::new(fix0.position.x, fix0.position.y, v0, theta0);
    let cov0 = Estimator::initial_covariance(
        sensor.sigma_fix_x,
        sensor.sigma_fix_y,
        sensor.sigma_imu_v,
        sensor.sigma_imu_theta,
    );
    let filter_cfg = FilterConfig {
        process_noise: *process_noise,
        ..filter.clone()
    };
    let mut estimator = Estimator::new(filter_kind, &est0, cov0, &filter_cfg, &mut filter_rng);
    let model = ModelContext {
        limits,
        noise: process_noise,
        terrain,
    };

    let mut steering = match nav.method {
        Method::Chull => Steering::Hull(
            HullSet::new(buffer)?,
            HullProgress {
                segment: 0,
                last_confirmed: est0.position,
                back_steps: 0,
            },
        ),
        Method::Centroid => Steering::Centroid(centroid_targets(buffer, nav.subsegments_per_segment)?),
    };

    let mut rec = NavRecord {
        initial_estimate: est0,
        initial_truth: start,
        truth: Vec::new(),
        predicted: Vec::new(),
        measured: Vec::new(),
        controls: Vec::new(),
        segment_index: Vec::new(),
        replans: 0,
        detours: Vec::new(),
        back_steps: 0,
        buffer_violations: 0,
        collisions: 0,
        degenerate_events: 0,
        outcome: Outcome::StepLimit,
        abort_reason: None,
        mean_step_ms: 0.0,
    };
    let mut truth = start;
    let mut detour: Option<Detour> = None;
    let mut segment = 0usize;
    let mut busy = std::time::Duration::ZERO;

    let abort = |rec: &mut NavRecord, reason: String, busy: std::time::Duration| {
        rec.outcome = Outcome::Aborted;
        rec.abort_reason = Some(reason);
        rec.mean_step_ms = mean_ms(busy, rec.steps());
    };

    for _ in 0..nav.max_steps {
        let est = estimator.estimate();

        // obstacle ahead: plan a detour back onto the central path
        if detour.is_none() {
            let ahead = est.position + Point2::from_heading(est.theta) * nav.obstacle_check_radius;
            if let Some(obstacle) = detect_obstacle(&est.position, &ahead, &world.obstacle_map, nav.clearance) {
                let from_arc = central.project(&est.position).arc_length;
                let rejoin = rejoin_point(central, obstacle, &world.obstacle_map, nav.clearance, from_arc);
                let inflated = inflate_obstacles(&world.obstacle_map, nav.clearance, &[est.position, rejoin]);
                match plan(est.position, rejoin, &inflated, buffer, planner, &mut planner_rng) {
                    Ok(result) => {
                        rec.replans += 1;
                        rec.detours.push(result.path.clone());
                        detour = Some(Detour {
                            waypoints: result.path,
                            next: 1,
                        });
                    }
                    Err(e) => {
                        abort(&mut rec, format!("planning failed: {e}"), busy);
                        return Ok(rec);
                    }
                }
            }
        }

        let t0 = Instant::now();
        let waypoint = detour.as_mut().and_then(|d| d.target(&est.position, nav.waypoint_radius));
        if waypoint.is_none() {
            detour = None;
        }
        let u = match (waypoint, &mut steering) {
            (Some(wp), _) => steer(&est, &wp, limits, nav.cruise_speed),
            (None, Steering::Hull(hulls, progress)) => {
                match chull_step(&est, central, hulls, progress, limits, terrain, nav) {
                    Ok(d) => {
                        segment = segment.max(progress.segment);
                        if d.back_step {
                            rec.back_steps += 1;
                        }
                        d.u
                    }
                    Err(e) => {
                        busy += t0.elapsed();
                        abort(&mut rec, e.to_string(), busy);
                        return Ok(rec);
                    }
                }
            }
            (None, Steering::Centroid(targets)) => {
                let (d, seg) = centroid_step(&est, central, targets, limits, terrain, nav);
                segment = segment.max(seg);
                d.u
            }
        };
        let mut elapsed = t0.elapsed();

        truth = step(&truth, &u, limits, process_noise, terrain, &mut truth_rng);
        let fix = match measure_position(&truth.position, world, sensor, &mut sensor_rng) {
            Ok(f) => f,
            Err(e) => {
                busy += elapsed;
                abort(&mut rec, e.to_string(), busy);
                return Ok(rec);
            }
        };
        let t1 = Instant::now();
        let diag = estimator.advance(&u, &fix, &model, &filter_cfg, &mut filter_rng);
        let est = estimator.estimate();
        elapsed += t1.elapsed();
        busy += elapsed;
        match diag {
            Ok(d) => rec.degenerate_events += d.degenerate as u32,
            Err(e) => {
                abort(&mut rec, e.to_string(), busy);
                return Ok(rec);
            }
        }

        rec.truth.push(truth);
        rec.predicted.push(est);
        rec.measured.push(fix.position);
        rec.controls.push(u);
        rec.segment_index.push(segment);
        if !buffer.contains(&est.position) {
            rec.buffer_violations += 1;
        }
        if !world.obstacle_map.point_free(&truth.position) {
            rec.collisions += 1;
        }

        let to_goal = est.position.distance(&goal);
        let past_end = (est.position - goal).dot(&final_dir) >= 0.0 && to_goal <= buffer.half_width;
        if to_goal <= nav.goal_radius || past_end {
            rec.outcome = Outcome::Reached;
            break;
        }
    }
    rec.mean_step_ms = mean_ms(busy, rec.steps());
    Ok(rec)
}

fn mean_ms(total: std::time::Duration, steps: usize) -> f64 {
    if steps == 0 {
        0.0
    } else {
        total.as_secs_f64() * 1e3 / steps as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::build_safe_path;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn straight() -> SafePathBuffer {
        build_safe_path(Polyline::new(vec![p(0.0, 0.0), p(40.0, 0.0)]).unwrap(), 10.0, 2, &[2.0, 4.0, 6.0, 8.0])
            .unwrap()
    }

    #[test]
    fn control_input_examples() {
        let lim = MotionLimits::default();
        let s = MotionState::new(0.0, 0.0, 1.5, 0.0);
        assert_eq!(compute_control_input(&s, &p(1.0, 0.0), &lim).delta_theta, 0.0);
        assert!((compute_control_input(&s, &p(0.0, 1.0), &lim).delta_theta - FRAC_PI_2).abs() < 1e-15);
        let back = MotionState::new(0.0, 0.0, 1.5, PI);
        assert!((compute_control_input(&back, &p(1.0, 0.0), &lim).delta_theta.abs() - PI).abs() < 1e-15);
        assert_eq!(compute_control_input(&s, &p(1.0, 0.0), &lim).v_desired, 1.5);
        assert_eq!(compute_control_input(&s, &p(0.0, 0.0), &lim), ControlInput::new(0.0, 0.0));
    }

    #[test]
    fn chull_keeps_default_inside() {
        let buf = straight();
        let hulls = HullSet::new(&buf).unwrap();
        let cfg = NavConfig {
            lookahead: 0.0,
            ..NavConfig::default()
        };
        let mut prog = HullProgress {
            segment: 0,
            last_confirmed: p(0.0, 0.0),
            back_steps: 0,
        };
        let est = MotionState::new(5.0, 1.0, 2.0, 0.0);
        let d = chull_step(&est, &buf.central, &hulls, &mut prog, &MotionLimits::default(), &TerrainModel::default(), &cfg)
            .unwrap();
        assert_eq!(d.u, cfg.default_command());
        assert_eq!(prog.segment, 0);
    }

    #[test]
    fn chull_turns_to_segment_centroid() {
        let buf = straight();
        let hulls = HullSet::new(&buf).unwrap();
        let cfg = NavConfig::default();
        let mut prog = HullProgress {
            segment: 0,
            last_confirmed: p(0.0, 0.0),
            back_steps: 0,
        };
        // heading straight at the upper wall
        let est = MotionState::new(5.0, 6.0, 2.0, FRAC_PI_2);
        let lim = MotionLimits::default();
        let d = chull_step(&est, &buf.central, &hulls, &mut prog, &lim, &TerrainModel::default(), &cfg).unwrap();
        let expect = wrap_angle((0.0f64 - 6.0).atan2(10.0 - 5.0) - FRAC_PI_2);
        assert!((d.u.delta_theta - expect).abs() < 1e-12);
        assert!(!d.back_step);
    }

    #[test]
    fn chull_advances_into_next_hull() {
        let buf = straight();
        let hulls = HullSet::new(&buf).unwrap();
        let cfg = NavConfig {
            lookahead: 0.0,
            ..NavConfig::default()
        };
        let mut prog = HullProgress {
            segment: 0,
            last_confirmed: p(0.0, 0.0),
            back_steps: 0,
        };
        let est = MotionState::new(20.5, 0.0, 2.0, 0.0);
        let d = chull_step(&est, &buf.central, &hulls, &mut prog, &MotionLimits::default(), &TerrainModel::default(), &cfg)
            .unwrap();
        assert_eq!(d.u, cfg.default_command());
        assert_eq!(prog.segment, 1);
    }

    #[test]
    fn chull_outside_everything_aborts() {
        let buf = straight();
        let hulls = HullSet::new(&buf).unwrap();
        let mut prog = HullProgress {
            segment: 0,
            last_confirmed: p(0.0, 0.0),
            back_steps: 0,
        };
        let est = MotionState::new(5.0, 30.0, 2.0, 0.0);
        let r = chull_step(
            &est,
            &buf.central,
            &hulls,
            &mut prog,
            &MotionLimits::default(),
            &TerrainModel::default(),
            &NavConfig::default(),
        );
        assert!(matches!(r, Err(NavError::OutsideHulls(..))));
    }

    #[test]
    fn centroid_examples() {
        let buf = straight();
        let cfg = NavConfig::default();
        let lim = MotionLimits::default();
        let mut targets = centroid_targets(&buf, 5).unwrap();
        assert_eq!(targets.len(), 11);
        // sitting on the first centroid, the next one is due east
        let est = MotionState::new(2.0, 0.0, 2.0, 0.0);
        let (d, seg) = centroid_step(&est, &buf.central, &mut targets, &lim, &TerrainModel::default(), &cfg);
        assert_eq!(d.u.delta_theta, 0.0);
        assert_eq!(seg, 0);
        assert!(targets[0].visited);

        // a centroid at bearing pi/2: the applied turn is clipped to m*dt
        let est = MotionState::new(6.0, -3.0, 2.0, 0.0);
        let mut fresh = centroid_targets(&buf, 5).unwrap();
        let (d, _) = centroid_step(&est, &buf.central, &mut fresh, &lim, &TerrainModel::default(), &cfg);
        assert!((d.u.delta_theta - FRAC_PI_2).abs() < 1e-12);
        let applied = deterministic_step(&est, &d.u, &lim, &TerrainModel::default()).theta;
        assert!((applied - 0.1).abs() < 1e-12);

        // past the first segment, targets come from the second
        let est = MotionState::new(21.0, 0.0, 2.0, 0.0);
        let (_, seg) = centroid_step(&est, &buf.central, &mut targets, &lim, &TerrainModel::default(), &cfg);
        assert_eq!(seg, 1);
        assert!(targets[..5].iter().all(|t| t.visited));
    }

    #[test]
    fn rejoin_clears_obstacle() {
        let central = Polyline::new(vec![p(0.0, 0.0), p(40.0, 0.0)]).unwrap();
        let map = ObstacleMap {
            obstacles: vec![Circle::new(p(20.0, 0.0), 3.0)],
            hazards: vec![],
        };
        let r = rejoin_point(&central, &map.obstacles[0], &map, 1.0, 0.0);
        assert!(r.x >= 24.0 && r.y == 0.0);
        let inflated = inflate_obstacles(&map, 1.0, &[p(16.5, 0.0)]);
        assert!(inflated.obstacles[0].r < 3.5 && inflated.obstacles[0].r >= 3.0);
    }
}
