//! Safe-path buffer, zone-weighted risk score and trajectory metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{closest_point_on_polyline, split_polyline, GeometryError, Point2, Polyline};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("trajectories have {0} and {1} points")]
    LengthMismatch(usize, usize),
    #[error("trajectory is empty")]
    Empty,
    #[error("invalid risk zones: {0}")]
    InvalidZones(String),
    #[error("reference length must be positive, got {0}")]
    NonPositiveLength(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// How a zone weight scales the squared deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WrsMode {
    /// `d * (d / w_j)`.
    #[default]
    Quotient,
    /// `d * w_j`.
    Product,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskZoneConfig {
    /// Zone edges `[a_1, b_1 = a_2, ..., b_n = d_max]`, ascending from 0.
    pub zone_bounds: Vec<f64>,
    pub zone_weights: Vec<f64>,
    pub d_max: f64,
    pub w_max: f64,
    pub mode: WrsMode,
}

impl RiskZoneConfig {
    /// Equal-width zones across `[0, half_width]`.
    pub fn equal_width(half_width: f64, weights: &[f64]) -> Result<Self, RiskError> {
        let n = weights.len();
        if n == 0 {
            return Err(RiskError::InvalidZones("at least one zone weight required".into()));
        }
        let bounds = (0..=n).map(|k| half_width * k as f64 / n as f64).collect();
        let cfg = Self {
            zone_bounds: bounds,
            zone_weights: weights.to_vec(),
            d_max: half_width,
            w_max: weights.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mode: WrsMode::Quotient,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), RiskError> {
        let b = &self.zone_bounds;
        if b.len() != self.zone_weights.len() + 1 {
            return Err(RiskError::InvalidZones("need one more bound than weights".into()));
        }
        if b[0] != 0.0 || b.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(RiskError::InvalidZones("bounds must ascend strictly from 0".into()));
        }
        if (b[b.len() - 1] - self.d_max).abs() > 1e-12 {
            return Err(RiskError::InvalidZones("last bound must equal d_max".into()));
        }
        if self.zone_weights.iter().any(|w| !(*w > 0.0)) || self.zone_weights.windows(2).any(|w| w[1] < w[0]) {
            return Err(RiskError::InvalidZones("weights must be positive and ascending".into()));
        }
        if !(self.w_max > 0.0) {
            return Err(RiskError::InvalidZones("w_max must be positive".into()));
        }
        Ok(())
    }

    fn score(&self, d: f64, w: f64) -> f64 {
        match self.mode {
            WrsMode::Quotient => d * (d / w),
            WrsMode::Product => d * w,
        }
    }
}

/// Weighted risk score of a lateral deviation `d`.
pub fn wrs(d: f64, zones: &RiskZoneConfig) -> f64 {
    let d = d.abs();
    if d >= zones.d_max {
        return zones.score(zones.d_max, zones.w_max);
    }
    let b = &zones.zone_bounds;
    // half-open [a_j, b_j)
    let j = b[1..].iter().position(|hi| d < *hi).unwrap_or(zones.zone_weights.len() - 1);
    zones.score(d, zones.zone_weights[j])
}

/// Corridor around the ground-truth path.
#[derive(Debug, Clone, PartialEq)]
pub struct SafePathBuffer {
    pub central: Polyline,
    pub half_width: f64,
    pub segments: Vec<Polyline>,
    pub zones: RiskZoneConfig,
}

impl SafePathBuffer {
    /// Lateral deviation from the central path.
    pub fn deviation(&self, p: &Point2) -> f64 {
        closest_point_on_polyline(p, &self.central).1
    }

    /// Closed containment in the corridor.
    pub fn contains(&self, p: &Point2) -> bool {
        self.deviation(p) <= self.half_width + 1e-9
    }

    pub fn wrs_at(&self, p: &Point2) -> f64 {
        wrs(self.deviation(p), &self.zones)
    }
}

/// Buffer with equal-width zones and `segments_n` equal-length segments.
pub fn build_safe_path(
    central: Polyline,
    half_width: f64,
    segments_n: usize,
    zone_weights: &[f64],
) -> Result<SafePathBuffer, RiskError> {
    if !(half_width > 0.0) {
        return Err(RiskError::InvalidZones(format!("buffer half-width must be positive, got {half_width}")));
    }
    let zones = RiskZoneConfig::equal_width(half_width, zone_weights)?;
    let segments = split_polyline(&central, segments_n)?;
    Ok(SafePathBuffer {
        central,
        half_width,
        segments,
        zones,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryMetrics {
    pub ade: f64,
    pub fde: f64,
    pub awrs: f64,
    pub percent_error: f64,
    pub mean_step_runtime_ms: f64,
    pub trajectory_length: f64,
}

/// Mean WRS of `traj` points against the buffer's central path.
pub fn awrs(traj: &[Point2], buffer: &SafePathBuffer) -> Result<f64, RiskError> {
    awrs_against(traj, &buffer.central, &buffer.zones)
}

pub fn awrs_against(traj: &[Point2], central: &Polyline, zones: &RiskZoneConfig) -> Result<f64, RiskError> {
    if traj.is_empty() {
        return Err(RiskError::Empty);
    }
    let total: f64 = traj.iter().map(|p| wrs(closest_point_on_polyline(p, central).1, zones)).sum();
    Ok(total / traj.len() as f64)
}

/// Mean index-aligned displacement.
pub fn ade(est: &[Point2], truth: &[Point2]) -> Result<f64, RiskError> {
    if est.len() != truth.len() {
        return Err(RiskError::LengthMismatch(est.len(), truth.len()));
    }
    if est.is_empty() {
        return Err(RiskError::Empty);
    }
    let total: f64 = est.iter().zip(truth).map(|(a, b)| a.distance(b)).sum();
    Ok(total / est.len() as f64)
}

pub fn fde(est: &[Point2], truth: &[Point2]) -> Result<f64, RiskError> {
    match (est.last(), truth.last()) {
        (Some(a), Some(b)) => Ok(a.distance(b)),
        _ => Err(RiskError::Empty),
    }
}

pub fn percent_error(est_len: f64, true_len: f64) -> Result<f64, RiskError> {
    if !(true_len > 0.0) {
        return Err(RiskError::NonPositiveLength(true_len));
    }
    Ok((est_len - true_len).abs() / true_len * 100.0)
}

/// Default point count for arc-length alignment.
pub const RESAMPLE_POINTS: usize = 200;

/// Metrics of an estimated trajectory against a reference path. Both are
/// resampled by arc length to `n` points before ADE, FDE and AWRS.
pub fn compare_trajectories(
    est: &Polyline,
    reference: &Polyline,
    zones: &RiskZoneConfig,
    n: usize,
) -> Result<TrajectoryMetrics, RiskError> {
    let e = est.resample(n);
    let r = reference.resample(n);
    Ok(TrajectoryMetrics {
        ade: ade(&e, &r)?,
        fde: fde(&e, &r)?,
        awrs: awrs_against(&e, reference, zones)?,
        percent_error: percent_error(est.length(), reference.length())?,
        mean_step_runtime_ms: 0.0,
        trajectory_length: est.length(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zones() -> RiskZoneConfig {
        RiskZoneConfig::equal_width(10.0, &[2.0, 4.0, 6.0, 8.0]).unwrap()
    }

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    #[test]
    fn wrs_examples() {
        let z = zones();
        assert_eq!(z.zone_bounds, vec![0.0, 2.5, 5.0, 7.5, 10.0]);
        assert_eq!(wrs(0.0, &z), 0.0);
        assert_eq!(wrs(1.0, &z), 0.5);
        assert_eq!(wrs(3.0, &z), 2.25);
        assert_eq!(wrs(12.0, &z), 12.5);
        // boundary belongs to the outer zone
        assert_eq!(wrs(2.5, &z), 2.5 * 2.5 / 4.0);
        assert_eq!(wrs(10.0, &z), 12.5);
    }

    #[test]
    fn product_mode() {
        let z = RiskZoneConfig {
            mode: WrsMode::Product,
            ..zones()
        };
        assert_eq!(wrs(1.0, &z), 2.0);
        assert_eq!(wrs(11.0, &z), 80.0);
    }

    #[test]
    fn invalid_zones_rejected() {
        let mut z = zones();
        z.zone_weights = vec![4.0, 2.0, 6.0, 8.0];
        assert!(z.validate().is_err());
        assert!(RiskZoneConfig::equal_width(10.0, &[]).is_err());
    }

    #[test]
    fn awrs_examples() {
        let central = Polyline::new(vec![p(0.0, 0.0), p(10.0, 0.0)]).unwrap();
        let buf = build_safe_path(central.clone(), 10.0, 2, &[2.0, 4.0, 6.0, 8.0]).unwrap();
        assert_eq!(awrs(central.points(), &buf).unwrap(), 0.0);
        let shifted: Vec<Point2> = (0..=10).map(|i| p(i as f64, 1.0)).collect();
        assert!((awrs(&shifted, &buf).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(awrs(&[p(4.0, 3.0)], &buf).unwrap(), 2.25);
        assert_eq!(awrs(&[], &buf), Err(RiskError::Empty));
    }

    #[test]
    fn displacement_examples() {
        let t = [p(0.0, 0.0), p(1.0, 0.0)];
        assert_eq!(ade(&t, &t).unwrap(), 0.0);
        assert_eq!(ade(&[p(1.0, 0.0), p(2.0, 0.0)], &t).unwrap(), 1.0);
        assert_eq!(ade(&[p(3.0, 0.0), p(1.0, 4.0)], &t).unwrap(), 3.5);
        assert_eq!(fde(&[p(9.0, 9.0), p(4.0, 4.0)], &t).unwrap(), 5.0);
        assert!(matches!(ade(&t[..1], &t), Err(RiskError::LengthMismatch(1, 2))));
    }

    #[test]
    fn percent_error_examples() {
        assert!((percent_error(106.0, 100.0).unwrap() - 6.0).abs() < 1e-12);
        assert_eq!(percent_error(100.0, 100.0).unwrap(), 0.0);
        assert!((percent_error(95.0, 100.0).unwrap() - 5.0).abs() < 1e-12);
        assert!(percent_error(1.0, 0.0).is_err());
    }

    #[test]
    fn buffer_layout() {
        let central = Polyline::new(vec![p(0.0, 0.0), p(30.0, 0.0), p(30.0, 30.0)]).unwrap();
        let buf = build_safe_path(central.clone(), 10.0, 3, &[2.0, 4.0, 6.0, 8.0]).unwrap();
        assert_eq!(buf.segments.len(), 3);
        let total: f64 = buf.segments.iter().map(|s| s.length()).sum();
        assert!((total - central.length()).abs() < 1e-9);
        assert_eq!(buf.segments[0].first(), central.first());
        assert_eq!(buf.segments[2].last(), central.last());
        assert!(buf.contains(&p(5.0, 10.0)));
        assert!(!buf.contains(&p(5.0, 10.1)));
        assert!(build_safe_path(central, 0.0, 3, &[2.0]).is_err());
    }

    #[test]
    fn compare_identical_is_zero() {
        let central = Polyline::new(vec![p(0.0, 0.0), p(30.0, 0.0), p(30.0, 30.0)]).unwrap();
        let m = compare_trajectories(&central, &central, &zones(), 50).unwrap();
        assert!(m.ade < 1e-12 && m.fde < 1e-12 && m.awrs < 1e-20 && m.percent_error == 0.0);
    }
}
