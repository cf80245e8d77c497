use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};

use super::{symmetrize4, vector_to_state, wrap_state, FilterConfig, FilterError, FilterState, JacobianMode};
use crate::localization::PositionFix;
use crate::motion::{
    clip_turn, deterministic_step, step_displacement, update_velocity_branch, wrap_angle, ControlInput,
    MotionLimits, NoiseParams, SpeedBranch, TerrainModel,
};

/// Position selector `h(x) = (x, y)`.
pub const OBSERVATION: Matrix2x4<f64> = Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0);

/// Per-update quantities kept for inspection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfUpdateTrace {
    pub residual: Vector2<f64>,
    pub residual_cov: Matrix2<f64>,
    pub gain: Matrix4x2<f64>,
}

/// Noise-free motion model as a map on state vectors.
pub fn transition(x: &Vector4<f64>, u: &ControlInput, lim: &MotionLimits, terrain: &TerrainModel) -> Vector4<f64> {
    let next = deterministic_step(&vector_to_state(x), u, lim, terrain);
    Vector4::new(next.position.x, next.position.y, next.v, next.theta)
}

/// Jacobian of [`transition`] from the branch structure of the speed and
/// heading updates. At a branch boundary the active branch's slope is used.
/// The terrain field is piecewise constant, so it contributes no slope.
pub fn analytic_jacobian(x: &Vector4<f64>, u: &ControlInput, lim: &MotionLimits, terrain: &TerrainModel) -> Matrix4<f64> {
    let pos = crate::geometry::Point2::new(x[0], x[1]);
    let (v_next, branch) = update_velocity_branch(x[2], u, lim);
    let theta_next = wrap_angle(x[3] + clip_turn(u.delta_theta, lim));
    let disp = step_displacement(&pos, v_next, theta_next, lim, terrain);
    let dv = if branch == SpeedBranch::RateLimited { 1.0 } else { 0.0 };
    let ddisp_dv = if v_next > 0.0 { dv * lim.dt } else { 0.0 };
    let (s, c) = theta_next.sin_cos();

    let mut f = Matrix4::identity();
    f[(0, 2)] = ddisp_dv * c;
    f[(0, 3)] = -disp * s;
    f[(1, 2)] = ddisp_dv * s;
    f[(1, 3)] = disp * c;
    f[(2, 2)] = dv;
    f
}

/// Central-difference Jacobian of [`transition`] with step `h`. Heading
/// differences are wrapped.
pub fn finite_difference_jacobian(
    x: &Vector4<f64>,
    u: &ControlInput,
    lim: &MotionLimits,
    terrain: &TerrainModel,
    h: f64,
) -> Matrix4<f64> {
    let mut f = Matrix4::zeros();
    for j in 0..4 {
        let mut plus = *x;
        let mut minus = *x;
        plus[j] += h;
        minus[j] -= h;
        let fp = transition(&plus, u, lim, terrain);
        let fm = transition(&minus, u, lim, terrain);
        let mut diff = fp - fm;
        diff[3] = wrap_angle(diff[3]);
        f.set_column(j, &(diff / (2.0 * h)));
    }
    f
}

/// Process covariance linearized at the prior mean: speed and heading noise
/// pushed through the position update, plus the direct position noise.
pub fn process_covariance(
    x: &Vector4<f64>,
    u: &ControlInput,
    lim: &MotionLimits,
    terrain: &TerrainModel,
    noise: &NoiseParams,
) -> Matrix4<f64> {
    let pos = crate::geometry::Point2::new(x[0], x[1]);
    let (v_next, _) = update_velocity_branch(x[2], u, lim);
    let theta_next = wrap_angle(x[3] + clip_turn(u.delta_theta, lim));
    let disp = step_displacement(&pos, v_next, theta_next, lim, terrain);
    let moving = if v_next > 0.0 { 1.0 } else { 0.0 };
    let (s, c) = theta_next.sin_cos();

    // columns: speed noise, heading noise
    let g = nalgebra::Matrix4x2::new(
        moving * lim.dt * c,
        -disp * s,
        moving * lim.dt * s,
        disp * c,
        1.0,
        0.0,
        0.0,
        1.0,
    );
    let sv = noise.speed_sigma(lim.dt);
    let sigma = Matrix2::new(sv * sv, 0.0, 0.0, noise.sigma_theta * noise.sigma_theta);
    let mut q = g * sigma * g.transpose();
    q[(0, 0)] += noise.sigma_x * noise.sigma_x;
    q[(1, 1)] += noise.sigma_y * noise.sigma_y;
    q
}

/// Predict step: mean through the noise-free model, `P = F P F^T + Q`.
pub fn ekf_predict(
    fs: &FilterState,
    u: &ControlInput,
    lim: &MotionLimits,
    terrain: &TerrainModel,
    cfg: &FilterConfig,
) -> FilterState {
    let f = match cfg.jacobian {
        JacobianMode::Analytic => analytic_jacobian(&fs.mean, u, lim, terrain),
        JacobianMode::FiniteDifference => finite_difference_jacobian(&fs.mean, u, lim, terrain, 1e-6),
    };
    let q = cfg
        .q_matrix()
        .unwrap_or_else(|| process_covariance(&fs.mean, u, lim, terrain, &cfg.process_noise));
    FilterState {
        mean: transition(&fs.mean, u, lim, terrain),
        covariance: symmetrize4(&(f * fs.covariance * f.transpose() + q)),
        step: fs.step + 1,
    }
}

/// Update step with a position fix, using `P = (I - K H) P`.
pub fn ekf_update(fs: &FilterState, z: &PositionFix, cfg: &FilterConfig) -> Result<(FilterState, EkfUpdateTrace), FilterError> {
    let h = OBSERVATION;
    let r = cfg.r_matrix();
    let residual = Vector2::new(z.position.x, z.position.y) - h * fs.mean;
    let s = h * fs.covariance * h.transpose() + r;
    if !(s.determinant() > 0.0) {
        return Err(FilterError::SingularResidual);
    }
    let s_inv = s.try_inverse().ok_or(FilterError::SingularResidual)?;
    let gain = fs.covariance * h.transpose() * s_inv;
    let mut mean = fs.mean + gain * residual;
    wrap_state(&mut mean);
    let covariance = symmetrize4(&((Matrix4::identity() - gain * h) * fs.covariance));
    Ok((
        FilterState {
            mean,
            covariance,
            step: fs.step,
        },
        EkfUpdateTrace {
            residual,
            residual_cov: s,
            gain,
        },
    ))
}

/// Joseph-stabilized covariance update for gain `k`:
/// `(I - K H) P (I - K H)^T + K R K^T`.
pub fn joseph_update_covariance(p: &Matrix4<f64>, k: &Matrix4x2<f64>, r: &Matrix2<f64>) -> Matrix4<f64> {
    let a = Matrix4::identity() - k * OBSERVATION;
    a * p * a.transpose() + k * r * k.transpose()
}
