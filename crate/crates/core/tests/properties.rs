use nalgebra::{Matrix2, Matrix4, Vector4};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safenav::filters::{
    ekf_predict, ekf_update, joseph_update_covariance, FilterConfig, FilterState, OBSERVATION,
};
use safenav::geometry::{centroid, convex_hull, point_in_polygon, split_polyline, Point2, Polyline};
use safenav::localization::PositionFix;
use safenav::motion::{step, wrap_angle, ControlInput, MotionLimits, MotionState, NoiseParams, TerrainModel};
use safenav::risk::{ade, awrs, build_safe_path, wrs, RiskZoneConfig};

fn point() -> impl Strategy<Value = Point2> {
    (-50.0..50.0f64, -50.0..50.0f64).prop_map(|(x, y)| Point2::new(x, y))
}

fn polyline() -> impl Strategy<Value = Polyline> {
    prop::collection::vec(point(), 2..8).prop_filter_map("distinct points", |pts| Polyline::new(pts).ok())
}

fn zones() -> RiskZoneConfig {
    RiskZoneConfig::equal_width(10.0, &[2.0, 4.0, 6.0, 8.0]).unwrap()
}

proptest! {
    #[test]
    fn hull_contains_inputs(pts in prop::collection::vec(point(), 3..30)) {
        if let Ok(h) = convex_hull(&pts) {
            for p in &pts {
                prop_assert!(point_in_polygon(p, &h));
            }
            prop_assert!(h.area() > 0.0);
        }
    }

    #[test]
    fn hull_is_idempotent(pts in prop::collection::vec(point(), 3..30)) {
        if let Ok(h) = convex_hull(&pts) {
            let again = convex_hull(h.vertices()).unwrap();
            prop_assert_eq!(again.vertices().len(), h.vertices().len());
            for v in again.vertices() {
                prop_assert!(h.vertices().contains(v));
            }
        }
    }

    #[test]
    fn projection_no_farther_than_vertices(line in polyline(), p in point()) {
        let d = line.project(&p).distance;
        for v in line.points() {
            prop_assert!(d <= p.distance(v) + 1e-9);
        }
    }

    #[test]
    fn split_pieces_sum_to_length(line in polyline(), n in 1usize..12) {
        let pieces = split_polyline(&line, n).unwrap();
        prop_assert_eq!(pieces.len(), n);
        let sum: f64 = pieces.iter().map(|p| p.length()).sum();
        prop_assert!((sum - line.length()).abs() < 1e-6 * line.length().max(1.0));
        for w in pieces.windows(2) {
            prop_assert_eq!(w[0].last(), w[1].first());
        }
    }

    #[test]
    fn centroid_inside_hull(pts in prop::collection::vec(point(), 3..20)) {
        if let Ok(h) = convex_hull(&pts) {
            let c = centroid(&pts).unwrap();
            prop_assert!(point_in_polygon(&c, &h));
        }
    }

    #[test]
    fn motion_respects_limits(
        v in 0.0..5.0f64,
        theta in -3.0..3.0f64,
        vd in -2.0..10.0f64,
        dth in -4.0..4.0f64,
        seed in any::<u64>(),
    ) {
        let lim = MotionLimits::default();
        let s = MotionState::new(0.0, 0.0, v, theta);
        let u = ControlInput::new(vd, dth);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let next = step(&s, &u, &lim, &NoiseParams::default(), &TerrainModel::default(), &mut rng);
        prop_assert!(next.v >= 0.0 && next.v <= lim.v_max);
        let quiet = step(&s, &u, &lim, &NoiseParams::zero(), &TerrainModel::default(), &mut rng);
        prop_assert!(wrap_angle(quiet.theta - s.theta).abs() <= lim.max_turn() + 1e-12);
    }

    #[test]
    fn ekf_covariance_stays_symmetric_psd(
        seed in any::<u64>(),
        vd in 0.0..5.0f64,
        dth in -0.2..0.2f64,
    ) {
        let lim = MotionLimits::default();
        let terrain = TerrainModel::default();
        let cfg = FilterConfig::default();
        let mut fs = FilterState::new(
            &MotionState::new(0.0, 0.0, 1.0, 0.3),
            Matrix4::from_diagonal(&Vector4::new(0.1, 0.1, 0.05, 0.01)),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = ControlInput::new(vd, dth);
        for _ in 0..50 {
            let pred = ekf_predict(&fs, &u, &lim, &terrain, &cfg);
            let e: f64 = rng.random_range(-0.05..0.05);
            let z = PositionFix {
                position: Point2::new(pred.mean[0] + e, pred.mean[1] - e),
                covariance: cfg.r_matrix(),
            };
            fs = ekf_update(&pred, &z, &cfg).unwrap().0;
            let p = fs.covariance;
            prop_assert!((p - p.transpose()).abs().max() < 1e-12);
            prop_assert!(p.symmetric_eigenvalues().min() > -1e-10);
        }
    }

    #[test]
    fn joseph_form_agrees_with_short_form(
        d in prop::collection::vec(0.001..1.0f64, 4),
        r in prop::collection::vec(0.0005..0.01f64, 2),
    ) {
        let p = Matrix4::from_diagonal(&Vector4::new(d[0], d[1], d[2], d[3]));
        let rm = Matrix2::new(r[0], 0.0, 0.0, r[1]);
        let h = OBSERVATION;
        let s = h * p * h.transpose() + rm;
        let k = p * h.transpose() * s.try_inverse().unwrap();
        let short = (Matrix4::identity() - k * h) * p;
        let joseph = joseph_update_covariance(&p, &k, &rm);
        prop_assert!((short - joseph).abs().max() < 1e-8);
    }

    #[test]
    fn wrs_monotone_within_zone_and_capped(zone in 0usize..4, a in 0.0..1.0f64, b in 0.0..1.0f64, far in 10.0..1e3f64) {
        let z = zones();
        let lo_edge = z.zone_bounds[zone];
        let width = z.zone_bounds[zone + 1] - lo_edge;
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (dlo, dhi) = (lo_edge + lo * width * 0.999, lo_edge + hi * width * 0.999);
        prop_assert!(wrs(dlo, &z) <= wrs(dhi, &z));
        prop_assert!((wrs(far, &z) - z.d_max * z.d_max / z.w_max).abs() < 1e-12);
    }

    #[test]
    fn awrs_shrinks_within_zones(
        devs in prop::collection::vec((0usize..4, 0.0..0.999f64, prop::bool::ANY), 2..30),
        s in 0.0..1.0f64,
    ) {
        let buffer = build_safe_path(
            Polyline::new(vec![Point2::new(-100.0, 0.0), Point2::new(100.0, 0.0)]).unwrap(),
            10.0,
            4,
            &[2.0, 4.0, 6.0, 8.0],
        )
        .unwrap();
        let b = &buffer.zones.zone_bounds;
        let place = |scale: f64| -> Vec<Point2> {
            devs.iter()
                .enumerate()
                .map(|(i, (j, f, left))| {
                    let d = b[*j] + scale * f * (b[j + 1] - b[*j]);
                    Point2::new(i as f64, if *left { d } else { -d })
                })
                .collect()
        };
        prop_assert!(awrs(&place(s), &buffer).unwrap() <= awrs(&place(1.0), &buffer).unwrap() + 1e-12);
    }

    #[test]
    fn ade_translation(pts in prop::collection::vec(point(), 1..20), shift in point()) {
        let moved: Vec<Point2> = pts.iter().map(|p| *p + shift).collect();
        prop_assert!(ade(&pts, &pts).unwrap().abs() < 1e-12);
        prop_assert!((ade(&moved, &pts).unwrap() - shift.norm()).abs() < 1e-9);
    }

    #[test]
    fn ade_invariant_under_shared_translation(
        pts in prop::collection::vec((point(), point()), 1..20),
        shift in point(),
    ) {
        let est: Vec<Point2> = pts.iter().map(|p| p.0).collect();
        let truth: Vec<Point2> = pts.iter().map(|p| p.1).collect();
        let est2: Vec<Point2> = est.iter().map(|p| *p + shift).collect();
        let truth2: Vec<Point2> = truth.iter().map(|p| *p + shift).collect();
        let a = ade(&est, &truth).unwrap();
        let b = ade(&est2, &truth2).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }
}
