//! State estimation over the motion model with landmark position fixes:
//! an extended Kalman filter and a bootstrap particle filter baseline.
//!
//! The state vector is `(x, y, v, theta)`. Only position is observed.

mod ekf;
mod pf;

pub use ekf::{
    analytic_jacobian, ekf_predict, ekf_update, finite_difference_jacobian, joseph_update_covariance,
    process_covariance, transition, EkfUpdateTrace, OBSERVATION,
};
pub use pf::{
    effective_sample_size, init_particles, pf_step, systematic_resample, weighted_estimate, Particle,
    ParticleFilter, PfStepInfo,
};

use nalgebra::{Matrix2, Matrix4, Vector4};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::localization::PositionFix;
use crate::motion::{wrap_angle, ControlInput, MotionLimits, MotionState, NoiseParams, TerrainModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("residual covariance is singular; measurement noise R must be positive definite")]
    SingularResidual,
    #[error("invalid filter configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterState {
    pub mean: Vector4<f64>,
    pub covariance: Matrix4<f64>,
    pub step: u64,
}

impl FilterState {
    pub fn new(initial: &MotionState, covariance: Matrix4<f64>) -> Self {
        Self {
            mean: state_to_vector(initial),
            covariance,
            step: 0,
        }
    }

    pub fn estimate(&self) -> MotionState {
        vector_to_state(&self.mean)
    }
}

pub fn state_to_vector(s: &MotionState) -> Vector4<f64> {
    Vector4::new(s.position.x, s.position.y, s.v, s.theta)
}

pub fn vector_to_state(x: &Vector4<f64>) -> MotionState {
    MotionState::new(x[0], x[1], x[2], x[3])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    #[default]
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Fixed process covariance. When absent, Q is linearized from the
    /// motion model's process noise at every predict.
    pub q: Option<[[f64; 4]; 4]>,
    /// Measurement covariance of a position fix.
    pub r: [[f64; 2]; 2],
    pub jacobian: JacobianMode,
    pub particle_count: usize,
    /// Resample when the effective sample size drops below this fraction of N.
    pub resample_threshold: f64,
    /// Process noise used to derive Q and to propagate particles. Filled in
    /// from the scenario's noise section.
    #[serde(skip)]
    pub process_noise: NoiseParams,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            q: None,
            r: [[0.0142f64.powi(2), 0.0], [0.0, 0.039f64.powi(2)]],
            jacobian: JacobianMode::Analytic,
            particle_count: 1000,
            resample_threshold: 0.5,
            process_noise: NoiseParams::default(),
        }
    }
}

impl FilterConfig {
    pub fn r_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.r[0][0], self.r[0][1], self.r[1][0], self.r[1][1])
    }

    pub fn q_matrix(&self) -> Option<Matrix4<f64>> {
        self.q.map(|q| Matrix4::from_fn(|i, j| q[i][j]))
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        let r = self.r_matrix();
        if (r - r.transpose()).abs().max() > 1e-12 || r[(0, 0)] < 0.0 || r.determinant() < 0.0 {
            return Err(FilterError::InvalidConfig("R must be symmetric PSD".into()));
        }
        if let Some(q) = self.q_matrix() {
            if (q - q.transpose()).abs().max() > 1e-12 {
                return Err(FilterError::InvalidConfig("Q must be symmetric".into()));
            }
            if q.symmetric_eigenvalues().min() < -1e-12 {
                return Err(FilterError::InvalidConfig("Q must be PSD".into()));
            }
        }
        if self.particle_count < 10 {
            return Err(FilterError::InvalidConfig("particle_count must be >= 10".into()));
        }
        if !(0.0..=1.0).contains(&self.resample_threshold) {
            return Err(FilterError::InvalidConfig("resample_threshold must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Motion-model parameters shared by both filters.
#[derive(Debug, Clone, Copy)]
pub struct ModelContext<'a> {
    pub limits: &'a MotionLimits,
    pub noise: &'a NoiseParams,
    pub terrain: &'a TerrainModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Ekf,
    Pf,
}

impl FilterKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FilterKind::Ekf => "ekf",
            FilterKind::Pf => "pf",
        }
    }
}

impl std::fmt::Display for FilterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FilterKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ekf" => Ok(FilterKind::Ekf),
            "pf" => Ok(FilterKind::Pf),
            other => Err(format!("unknown filter '{other}' (expected ekf or pf)")),
        }
    }
}

/// Either filter behind one interface, owned by a single trial.
#[derive(Debug, Clone)]
pub enum Estimator {
    Ekf(FilterState),
    Pf(ParticleFilter),
}

/// Diagnostics from one predict/update cycle.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepDiagnostics {
    pub degenerate: bool,
    pub resampled: bool,
}

impl Estimator {
    /// Initial covariance: fix noise on position, IMU noise on speed/heading.
    pub fn initial_covariance(sx: f64, sy: f64, sv: f64, st: f64) -> Matrix4<f64> {
        Matrix4::from_diagonal(&Vector4::new(sx * sx, sy * sy, sv * sv, st * st))
    }

    pub fn new<R: Rng + ?Sized>(
        kind: FilterKind,
        initial: &MotionState,
        covariance: Matrix4<f64>,
        cfg: &FilterConfig,
        rng: &mut R,
    ) -> Self {
        match kind {
            FilterKind::Ekf => Estimator::Ekf(FilterState::new(initial, covariance)),
            FilterKind::Pf => {
                let spread = [
                    covariance[(0, 0)].sqrt(),
                    covariance[(1, 1)].sqrt(),
                    covariance[(2, 2)].sqrt(),
                    covariance[(3, 3)].sqrt(),
                ];
                Estimator::Pf(ParticleFilter::new(
                    init_particles(initial, spread, cfg.particle_count, rng),
                    *initial,
                ))
            }
        }
    }

    pub fn kind(&self) -> FilterKind {
        match self {
            Estimator::Ekf(_) => FilterKind::Ekf,
            Estimator::Pf(_) => FilterKind::Pf,
        }
    }

    pub fn estimate(&self) -> MotionState {
        match self {
            Estimator::Ekf(fs) => fs.estimate(),
            Estimator::Pf(pf) => pf.estimate,
        }
    }

    /// Propagates with control `u` and folds in fix `z`.
    pub fn advance<R: Rng + ?Sized>(
        &mut self,
        u: &ControlInput,
        z: &PositionFix,
        model: &ModelContext<'_>,
        cfg: &FilterConfig,
        rng: &mut R,
    ) -> Result<StepDiagnostics, FilterError> {
        match self {
            Estimator::Ekf(fs) => {
                let predicted = ekf_predict(fs, u, model.limits, model.terrain, cfg);
                let (updated, _) = ekf_update(&predicted, z, cfg)?;
                *fs = updated;
                Ok(StepDiagnostics::default())
            }
            Estimator::Pf(pf) => {
                let info = pf_step(&mut pf.particles, u, z, model.limits, model.noise, model.terrain, cfg, rng)?;
                pf.estimate = info.estimate;
                if info.degenerate {
                    pf.degenerate_events += 1;
                }
                Ok(StepDiagnostics {
                    degenerate: info.degenerate,
                    resampled: info.resampled,
                })
            }
        }
    }
}

pub(crate) fn symmetrize4(p: &Matrix4<f64>) -> Matrix4<f64> {
    (p + p.transpose()) * 0.5
}

pub(crate) fn wrap_state(x: &mut Vector4<f64>) {
    x[3] = wrap_angle(x[3]);
}
