use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use safenav::filters::{FilterConfig, FilterKind};
use safenav::geometry::{Point2, Polyline};
use safenav::localization::SensorNoise;
use safenav::motion::{MotionLimits, NoiseParams};
use safenav::navigator::{navigate, Method, NavConfig, NavRecord, NavSetup, Outcome};
use safenav::planner::{collision_free, plan, Circle, ObstacleMap, PlannerConfig};
use safenav::risk::{build_safe_path, SafePathBuffer};
use safenav::scenario::{world_along_path, World};

struct Case {
    world: World,
    buffer: SafePathBuffer,
    limits: MotionLimits,
    process: NoiseParams,
    sensor: SensorNoise,
    filter: FilterConfig,
    planner: PlannerConfig,
    nav: NavConfig,
}

impl Case {
    fn straight(noisy: bool) -> Self {
        let central = Polyline::new(vec![Point2::new(20.0, 50.0), Point2::new(120.0, 50.0)]).unwrap();
        let world = world_along_path(&central, 25.0, 4).unwrap();
        let buffer = build_safe_path(central, 10.0, 4, &[2.0, 4.0, 6.0, 8.0]).unwrap();
        let (process, sensor) = if noisy {
            (NoiseParams::default(), SensorNoise::default())
        } else {
            (NoiseParams::zero(), SensorNoise::noiseless())
        };
        Self {
            world,
            buffer,
            limits: MotionLimits::default(),
            process,
            sensor,
            filter: FilterConfig {
                process_noise: process,
                ..FilterConfig::default()
            },
            planner: PlannerConfig::default(),
            nav: NavConfig::default(),
        }
    }

    fn run(&self, method: Method, seed: u64) -> NavRecord {
        let nav = NavConfig {
            method,
            ..self.nav.clone()
        };
        let setup = NavSetup {
            world: &self.world,
            buffer: &self.buffer,
            limits: &self.limits,
            process_noise: &self.process,
            sensor: &self.sensor,
            filter_kind: FilterKind::Ekf,
            filter: &self.filter,
            planner: &self.planner,
            nav: &nav,
        };
        navigate(&setup, seed).unwrap()
    }
}

#[test]
fn zero_noise_reaches_goal_precisely() {
    let case = Case::straight(false);
    for method in [Method::Centroid, Method::Chull] {
        let rec = case.run(method, 1);
        assert_eq!(rec.outcome, Outcome::Reached, "{method}");
        let m = rec.metrics(&case.buffer).unwrap();
        assert!(m.percent_error < 1.0, "{method}: {}", m.percent_error);
        assert_eq!(rec.buffer_violations, 0);
        for (t, e) in rec.truth.iter().zip(&rec.predicted) {
            assert!(t.position.distance(&e.position) < 1e-9);
        }
    }
}

#[test]
fn segment_index_never_decreases() {
    let case = Case::straight(true);
    for method in [Method::Centroid, Method::Chull] {
        let rec = case.run(method, 7);
        assert!(rec.segment_index.windows(2).all(|w| w[0] <= w[1]), "{method}");
        assert_eq!(rec.predicted.len(), rec.measured.len());
    }
}

#[test]
fn obstacle_on_path_triggers_collision_free_detour() {
    let mut case = Case::straight(true);
    case.world.obstacle_map.obstacles.push(Circle::new(Point2::new(70.0, 50.0), 3.0));
    let rec = case.run(Method::Centroid, 3);
    assert_eq!(rec.outcome, Outcome::Reached);
    assert!(rec.replans >= 1);
    assert_eq!(rec.collisions, 0);
    for detour in &rec.detours {
        for w in detour.windows(2) {
            assert!(collision_free(&w[0], &w[1], &case.world.obstacle_map));
        }
        let end = detour.last().unwrap();
        assert!(case.buffer.contains(end));
    }
}

#[test]
fn step_limit_of_one() {
    let mut case = Case::straight(true);
    case.nav.max_steps = 1;
    let rec = case.run(Method::Centroid, 0);
    assert_eq!(rec.outcome, Outcome::StepLimit);
    assert_eq!(rec.steps(), 1);
    assert_eq!(rec.truth.len(), 1);
}

#[test]
fn identical_seeds_give_identical_records() {
    let case = Case::straight(true);
    for method in [Method::Centroid, Method::Chull] {
        let mut a = case.run(method, 42);
        let mut b = case.run(method, 42);
        a.mean_step_ms = 0.0;
        b.mean_step_ms = 0.0;
        assert_eq!(a, b);
    }
}

#[test]
fn empty_map_paths_are_near_straight() {
    let case = Case::straight(false);
    let start = Point2::new(30.0, 50.0);
    let goal = Point2::new(70.0, 50.0);
    let cfg = PlannerConfig {
        beta: 0.0,
        max_iterations: 3000,
        ..PlannerConfig::default()
    };
    let good = (0..20)
        .filter(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let r = plan(start, goal, &ObstacleMap::default(), &case.buffer, &cfg, &mut rng).unwrap();
            r.length_cost <= 1.05 * start.distance(&goal)
        })
        .count();
    assert!(good >= 18, "{good}/20");
}

#[test]
fn wall_with_gap_is_threaded() {
    let case = Case::straight(false);
    // a column of discs across the corridor with a gap at y = 50
    let mut map = ObstacleMap::default();
    for k in 0..10 {
        let y = 30.0 + 4.0 * k as f64;
        if (y - 50.0).abs() > 3.0 {
            map.obstacles.push(Circle::new(Point2::new(60.0, y), 2.0));
        }
    }
    let start = Point2::new(40.0, 55.0);
    let goal = Point2::new(80.0, 45.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let r = plan(start, goal, &map, &case.buffer, &PlannerConfig::default(), &mut rng).unwrap();
    for w in r.path.windows(2) {
        assert!(collision_free(&w[0], &w[1], &map));
    }
    let crossing = r.path.windows(2).find(|w| w[0].x <= 60.0 && w[1].x > 60.0).unwrap();
    let t = (60.0 - crossing[0].x) / (crossing[1].x - crossing[0].x);
    let y = crossing[0].y + t * (crossing[1].y - crossing[0].y);
    assert!((y - 50.0).abs() < 3.0, "crossed at y = {y}");
    assert!(r.path.last().unwrap().distance(&goal) <= PlannerConfig::default().goal_radius);
}
