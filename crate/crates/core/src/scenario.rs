//! Battlefield worlds, synthetic trajectories, ground-truth paths and the
//! scenario file format.
//!
//! Every generator is a pure function of its seed and configuration. The
//! random source is `ChaCha8Rng`, whose output stream is fixed across
//! platforms.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filters::FilterConfig;
use crate::geometry::{centroid, orient, GeometryError, Point2, Polyline};
use crate::localization::{Landmark, LandmarkCluster, SensorNoise};
use crate::motion::{MotionLimits, NoiseParams, TerrainModel};
use crate::navigator::NavConfig;
use crate::planner::{Circle, ObstacleMap, PlannerConfig};
use crate::risk::{build_safe_path, RiskError, SafePathBuffer};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unknown cluster id {0}")]
    UnknownCluster(u32),
    #[error("cluster {0} repeats consecutively in the path")]
    RepeatedCluster(u32),
    #[error("unknown path '{0}'")]
    UnknownPath(String),
    #[error("placement budget exhausted after {0} draws")]
    RejectionExhausted(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Risk(#[from] RiskError),
}

type Result<T> = std::result::Result<T, ScenarioError>;

/// Axis-aligned region `[0, width] x [0, height]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub width: f64,
    pub height: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            width: 200.0,
            height: 200.0,
        }
    }
}

impl Bounds {
    pub fn contains(&self, p: &Point2) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub bounds: Bounds,
    pub landmarks: Vec<Landmark>,
    pub clusters: Vec<LandmarkCluster>,
    pub obstacle_map: ObstacleMap,
    pub terrain: TerrainModel,
    pub seed: u64,
}

impl World {
    /// Builds a world, grouping landmarks into clusters and checking
    /// every invariant.
    pub fn new(
        bounds: Bounds,
        landmarks: Vec<Landmark>,
        obstacle_map: ObstacleMap,
        terrain: TerrainModel,
        seed: u64,
    ) -> Result<Self> {
        if !(bounds.width > 0.0 && bounds.height > 0.0) {
            return Err(ScenarioError::Invalid("bounds must be positive".into()));
        }
        let mut ids = BTreeSet::new();
        let mut groups: BTreeMap<u32, Vec<&Landmark>> = BTreeMap::new();
        for l in &landmarks {
            if !ids.insert(l.id) {
                return Err(ScenarioError::Invalid(format!("duplicate landmark id {}", l.id)));
            }
            if !bounds.contains(&l.position) {
                return Err(ScenarioError::Invalid(format!("landmark {} lies outside the bounds", l.id)));
            }
            groups.entry(l.cluster_id).or_default().push(l);
        }
        let mut clusters = Vec::with_capacity(groups.len());
        for (id, members) in groups {
            if members.len() < 3 {
                return Err(ScenarioError::Invalid(format!(
                    "cluster {id} has {} landmarks, needs at least 3",
                    members.len()
                )));
            }
            let anchors: Vec<Point2> = members.iter().map(|l| l.position).collect();
            let spread = anchors.iter().any(|c| orient(&anchors[0], &anchors[1], c) != 0.0);
            if !spread {
                return Err(ScenarioError::Invalid(format!("cluster {id} landmarks are collinear")));
            }
            clusters.push(LandmarkCluster {
                id,
                member_ids: members.iter().map(|l| l.id).collect(),
                centroid: centroid(&anchors)?,
                anchors,
            });
        }
        obstacle_map.validate().map_err(ScenarioError::Invalid)?;
        terrain.validate().map_err(ScenarioError::Invalid)?;
        for c in obstacle_map.obstacles.iter().chain(&obstacle_map.hazards) {
            if !bounds.contains(&c.center()) {
                return Err(ScenarioError::Invalid(format!("disc at ({}, {}) lies outside the bounds", c.x, c.y)));
            }
        }
        Ok(Self {
            bounds,
            landmarks,
            clusters,
            obstacle_map,
            terrain,
            seed,
        })
    }

    pub fn cluster(&self, id: u32) -> Option<&LandmarkCluster> {
        self.clusters.iter().find(|c| c.id == id)
    }
}

/// Where to scatter one cluster's landmarks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub id: u32,
    pub center: Point2,
    pub landmarks: usize,
    /// Landmarks fall uniformly in a disc of this radius.
    pub spread: f64,
}

/// Cluster layout of the bundled battlefield.
pub fn default_cluster_layout() -> Vec<ClusterSpec> {
    [
        (1, 165.0, 30.0),
        (2, 100.0, 170.0),
        (3, 160.0, 110.0),
        (4, 35.0, 40.0),
        (5, 100.0, 100.0),
        (6, 30.0, 100.0),
        (7, 95.0, 45.0),
    ]
    .into_iter()
    .map(|(id, x, y)| ClusterSpec {
        id,
        center: Point2::new(x, y),
        landmarks: 4,
        spread: 6.0,
    })
    .collect()
}

pub const OBSTACLE_RADIUS: (f64, f64) = (2.0, 5.0);
pub const HAZARD_RADIUS: (f64, f64) = (3.0, 8.0);
/// Minimum gap between an obstacle's edge and a cluster centroid, m.
pub const CENTROID_CLEARANCE: f64 = 3.0;
const PLACEMENT_BUDGET: usize = 100_000;

fn disc_point<R: Rng + ?Sized>(center: &Point2, radius: f64, rng: &mut R) -> Point2 {
    let r = radius * rng.random::<f64>().sqrt();
    let a = rng.random_range(0.0..2.0 * PI);
    *center + Point2::from_heading(a) * r
}

/// Random battlefield: landmarks scattered per `layout`, then obstacles and
/// hazards placed uniformly. Obstacles are redrawn while they come within
/// `CENTROID_CLEARANCE` of a cluster centroid.
pub fn gen_world(seed: u64, n_obstacles: usize, n_hazards: usize, layout: &[ClusterSpec]) -> Result<World> {
    let bounds = Bounds::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut landmarks = Vec::new();
    let mut next_id = 1;
    for spec in layout {
        if spec.landmarks < 3 {
            return Err(ScenarioError::Invalid(format!("cluster {} needs at least 3 landmarks", spec.id)));
        }
        for _ in 0..spec.landmarks {
            let mut p = disc_point(&spec.center, spec.spread, &mut rng);
            let mut draws = 0;
            while !bounds.contains(&p) {
                draws += 1;
                if draws > PLACEMENT_BUDGET {
                    return Err(ScenarioError::RejectionExhausted(draws));
                }
                p = disc_point(&spec.center, spec.spread, &mut rng);
            }
            landmarks.push(Landmark {
                id: next_id,
                position: p,
                cluster_id: spec.id,
            });
            next_id += 1;
        }
    }
    let centroids: Vec<Point2> = layout
        .iter()
        .map(|s| {
            let pts: Vec<Point2> = landmarks.iter().filter(|l| l.cluster_id == s.id).map(|l| l.position).collect();
            centroid(&pts)
        })
        .collect::<std::result::Result<_, _>>()?;

    let mut draw_disc = |radius: (f64, f64), keep_clear: bool| -> Result<Circle> {
        for _ in 0..PLACEMENT_BUDGET {
            let r = rng.random_range(radius.0..radius.1);
            let c = Point2::new(rng.random_range(r..bounds.width - r), rng.random_range(r..bounds.height - r));
            if !keep_clear || centroids.iter().all(|k| k.distance(&c) >= r + CENTROID_CLEARANCE) {
                return Ok(Circle::new(c, r));
            }
        }
        Err(ScenarioError::RejectionExhausted(PLACEMENT_BUDGET))
    };
    let obstacles = (0..n_obstacles)
        .map(|_| draw_disc(OBSTACLE_RADIUS, true))
        .collect::<Result<Vec<_>>>()?;
    let hazards = (0..n_hazards)
        .map(|_| draw_disc(HAZARD_RADIUS, false))
        .collect::<Result<Vec<_>>>()?;
    World::new(
        bounds,
        landmarks,
        ObstacleMap { obstacles, hazards },
        TerrainModel::default(),
        seed,
    )
}

/// Polyline through the centroids of `sequence`, in order.
pub fn build_ground_truth_path(world: &World, sequence: &[u32]) -> Result<Polyline> {
    if sequence.len() < 2 {
        return Err(ScenarioError::Invalid("a path needs at least two clusters".into()));
    }
    let mut pts = Vec::with_capacity(sequence.len());
    for (i, id) in sequence.iter().enumerate() {
        if i > 0 && sequence[i - 1] == *id {
            return Err(ScenarioError::RepeatedCluster(*id));
        }
        pts.push(world.cluster(*id).ok_or(ScenarioError::UnknownCluster(*id))?.centroid);
    }
    Ok(Polyline::new(pts)?)
}

/// Timestep of the synthetic trajectories, s.
pub const SYNTHETIC_DT: f64 = 0.05;

/// One timestep of a synthetic trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRecord {
    pub px: f64,
    pub sx: f64,
    pub ax: f64,
    pub py: f64,
    pub sy: f64,
    pub ay: f64,
    pub theta: f64,
}

impl SyntheticRecord {
    pub fn position(&self) -> Point2 {
        Point2::new(self.px, self.py)
    }

    pub fn speed(&self) -> f64 {
        self.sx.hypot(self.sy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTrajectory {
    pub records: Vec<SyntheticRecord>,
    pub dt: f64,
}

impl SyntheticTrajectory {
    pub fn positions(&self) -> Vec<Point2> {
        self.records.iter().map(|r| r.position()).collect()
    }
}

pub fn synthetic_acceleration(t: f64, period: f64) -> f64 {
    3.0 * (4.0 * PI * t / period).sin()
}

pub fn synthetic_heading(t: f64, period: f64) -> f64 {
    PI / 2.0 * (2.0 * PI * t / period).sin()
}

/// Synthetic trajectory of `n` steps at `SYNTHETIC_DT`. The seed sets the
/// start position and initial speed. Acceleration is tangential; speed is
/// floored at zero.
pub fn gen_synthetic(n: usize, seed: u64) -> Result<SyntheticTrajectory> {
    if n < 2 {
        return Err(ScenarioError::Invalid("a synthetic trajectory needs at least 2 steps".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = SYNTHETIC_DT;
    let period = n as f64 * dt;
    let mut p = Point2::new(rng.random_range(20.0..40.0), rng.random_range(80.0..120.0));
    let mut s: f64 = rng.random_range(1.0..3.0);
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * dt;
        let a = synthetic_acceleration(t, period);
        let theta = synthetic_heading(t, period);
        let (sin, cos) = theta.sin_cos();
        records.push(SyntheticRecord {
            px: p.x,
            sx: s * cos,
            ax: a * cos,
            py: p.y,
            sy: s * sin,
            ay: a * sin,
            theta,
        });
        s = (s + a * dt).max(0.0);
        p = p + Point2::new(cos, sin) * (s * dt);
    }
    Ok(SyntheticTrajectory { records, dt })
}

/// Landmark clusters strung along `path` every `spacing` meters, alternately
/// offset to either side, so that fixes are available everywhere on it.
pub fn world_along_path(path: &Polyline, spacing: f64, seed: u64) -> Result<World> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (path.length() / spacing).ceil() as usize + 1;
    let mut landmarks = Vec::new();
    let mut next_id = 1;
    for k in 0..n {
        let s = (k as f64 * spacing).min(path.length());
        let here = path.point_at(s);
        let ahead = path.point_at((s + 0.5).min(path.length()));
        let behind = path.point_at((s - 0.5).max(0.0));
        let dir = ahead - behind;
        let normal = Point2::new(-dir.y, dir.x) * (1.0 / dir.norm().max(1e-12));
        let side = if k % 2 == 0 { 8.0 } else { -8.0 };
        let center = here + normal * side;
        for _ in 0..4 {
            landmarks.push(Landmark {
                id: next_id,
                position: disc_point(&center, 4.0, &mut rng),
                cluster_id: k as u32 + 1,
            });
            next_id += 1;
        }
    }
    // large enough to hold any path the synthetic generator produces
    let extent = landmarks
        .iter()
        .map(|l| l.position.x.max(l.position.y))
        .fold(200.0, f64::max)
        .ceil();
    if landmarks.iter().any(|l| l.position.x < 0.0 || l.position.y < 0.0) {
        return Err(ScenarioError::Invalid("path leaves the positive quadrant".into()));
    }
    World::new(
        Bounds {
            width: extent,
            height: extent,
        },
        landmarks,
        ObstacleMap::default(),
        TerrainModel::default(),
        seed,
    )
}

// ---- scenario file ----

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarkEntry {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub cluster: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    pub name: String,
    pub clusters: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BufferSpec {
    #[serde(rename = "W")]
    pub half_width: f64,
    pub segments: usize,
    pub zone_weights: Vec<f64>,
}

impl Default for BufferSpec {
    fn default() -> Self {
        Self {
            half_width: 10.0,
            segments: 4,
            zone_weights: vec![2.0, 4.0, 6.0, 8.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub process: NoiseParams,
    pub sensor: SensorNoise,
}

/// On-disk scenario. Field names are fixed; unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub bounds: Bounds,
    pub landmarks: Vec<LandmarkEntry>,
    pub obstacles: Vec<Circle>,
    pub hazards: Vec<Circle>,
    #[serde(default)]
    pub terrain: TerrainModel,
    pub paths: Vec<PathSpec>,
    #[serde(default)]
    pub buffer: BufferSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub motion: MotionLimits,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub navigation: NavConfig,
    #[serde(default)]
    pub seed: u64,
}

/// A validated scenario with its world built.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub world: World,
}

pub const DEFAULT_SCENARIO_JSON: &str = include_str!("../scenarios/default.json");

impl Scenario {
    pub fn from_file(file: ScenarioFile) -> Result<Self> {
        let landmarks = file
            .landmarks
            .iter()
            .map(|l| Landmark {
                id: l.id,
                position: Point2::new(l.x, l.y),
                cluster_id: l.cluster,
            })
            .collect();
        let world = World::new(
            file.bounds,
            landmarks,
            ObstacleMap {
                obstacles: file.obstacles.clone(),
                hazards: file.hazards.clone(),
            },
            file.terrain.clone(),
            file.seed,
        )?;
        let invalid = |e: String| ScenarioError::Invalid(e);
        file.noise.process.validate().map_err(invalid)?;
        file.noise.sensor.validate().map_err(invalid)?;
        file.motion.validate().map_err(invalid)?;
        file.filter.validate().map_err(|e| invalid(e.to_string()))?;
        file.planner.validate().map_err(|e| invalid(e.to_string()))?;
        file.navigation.validate().map_err(invalid)?;
        if file.paths.is_empty() {
            return Err(invalid("at least one path is required".into()));
        }
        let mut names = BTreeSet::new();
        for p in &file.paths {
            if !names.insert(p.name.as_str()) {
                return Err(invalid(format!("duplicate path name '{}'", p.name)));
            }
            build_ground_truth_path(&world, &p.clusters)?;
        }
        if !(file.buffer.half_width > 0.0) || file.buffer.segments == 0 {
            return Err(invalid("buffer.W must be positive and buffer.segments >= 1".into()));
        }
        let scenario = Self { file, world };
        scenario.buffer_for(&scenario.file.paths[0].name)?;
        Ok(scenario)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }

    pub fn bundled() -> Self {
        Self::from_json(DEFAULT_SCENARIO_JSON).expect("bundled scenario is valid")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.file).expect("scenario serializes")
    }

    pub fn path_names(&self) -> Vec<&str> {
        self.file.paths.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn central_path(&self, name: &str) -> Result<Polyline> {
        let spec = self
            .file
            .paths
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| ScenarioError::UnknownPath(name.to_string()))?;
        build_ground_truth_path(&self.world, &spec.clusters)
    }

    pub fn buffer_for(&self, name: &str) -> Result<SafePathBuffer> {
        let b = &self.file.buffer;
        Ok(build_safe_path(self.central_path(name)?, b.half_width, b.segments, &b.zone_weights)?)
    }

    /// Filter configuration with the process noise filled in.
    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            process_noise: self.file.noise.process,
            ..self.file.filter.clone()
        }
    }
}

/// Scenario file for a freshly generated battlefield with the default
/// cluster layout and the three standard path types.
pub fn generate_scenario(seed: u64) -> Result<ScenarioFile> {
    let world = gen_world(seed, 25, 25, &default_cluster_layout())?;
    Ok(ScenarioFile {
        bounds: world.bounds,
        landmarks: world
            .landmarks
            .iter()
            .map(|l| LandmarkEntry {
                id: l.id,
                x: l.position.x,
                y: l.position.y,
                cluster: l.cluster_id,
            })
            .collect(),
        obstacles: world.obstacle_map.obstacles.clone(),
        hazards: world.obstacle_map.hazards.clone(),
        terrain: world.terrain.clone(),
        paths: vec![
            PathSpec {
                name: "P1".into(),
                clusters: vec![6, 5, 3],
            },
            PathSpec {
                name: "P2".into(),
                clusters: vec![4, 7, 5, 3],
            },
            PathSpec {
                name: "P3".into(),
                clusters: vec![7, 3],
            },
        ],
        buffer: BufferSpec::default(),
        noise: NoiseSpec::default(),
        motion: MotionLimits::default(),
        filter: FilterConfig::default(),
        planner: PlannerConfig::default(),
        navigation: NavConfig::default(),
        seed,
    })
}
