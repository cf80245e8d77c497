use nalgebra::{Matrix4, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{FilterConfig, FilterError};
use crate::geometry::Point2;
use crate::localization::PositionFix;
use crate::motion::{step, wrap_angle, ControlInput, MotionLimits, MotionState, NoiseParams, TerrainModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub state: MotionState,
    pub weight: f64,
}

/// Bootstrap particle filter state for one trial.
#[derive(Debug, Clone)]
pub struct ParticleFilter {
    pub particles: Vec<Particle>,
    pub estimate: MotionState,
    /// Steps on which every weight underflowed and the set was reset.
    pub degenerate_events: u32,
}

impl ParticleFilter {
    pub fn new(particles: Vec<Particle>, estimate: MotionState) -> Self {
        Self {
            particles,
            estimate,
            degenerate_events: 0,
        }
    }

    pub fn covariance(&self) -> Matrix4<f64> {
        let m = self.estimate;
        let mut p = Matrix4::zeros();
        for q in &self.particles {
            let d = nalgebra::Vector4::new(
                q.state.position.x - m.position.x,
                q.state.position.y - m.position.y,
                q.state.v - m.v,
                wrap_angle(q.state.theta - m.theta),
            );
            p += d * d.transpose() * q.weight;
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfStepInfo {
    /// Weighted estimate taken after the measurement, before resampling.
    pub estimate: MotionState,
    pub ess: f64,
    pub resampled: bool,
    pub degenerate: bool,
}

/// `n` equally weighted particles drawn around `initial` with independent
/// Gaussian spreads `(x, y, v, theta)`.
pub fn init_particles<R: Rng + ?Sized>(initial: &MotionState, spread: [f64; 4], n: usize, rng: &mut R) -> Vec<Particle> {
    let w = 1.0 / n as f64;
    (0..n)
        .map(|_| {
            let e: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
            Particle {
                state: MotionState {
                    position: Point2::new(
                        initial.position.x + spread[0] * e[0],
                        initial.position.y + spread[1] * e[1],
                    ),
                    v: (initial.v + spread[2] * e[2]).max(0.0),
                    theta: wrap_angle(initial.theta + spread[3] * e[3]),
                },
                weight: w,
            }
        })
        .collect()
}

pub fn effective_sample_size(particles: &[Particle]) -> f64 {
    let s2: f64 = particles.iter().map(|p| p.weight * p.weight).sum();
    if s2 > 0.0 {
        1.0 / s2
    } else {
        0.0
    }
}

/// Weighted mean; heading uses the circular mean.
pub fn weighted_estimate(particles: &[Particle]) -> MotionState {
    let (mut x, mut y, mut v, mut s, mut c, mut total) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for p in particles {
        x += p.weight * p.state.position.x;
        y += p.weight * p.state.position.y;
        v += p.weight * p.state.v;
        s += p.weight * p.state.theta.sin();
        c += p.weight * p.state.theta.cos();
        total += p.weight;
    }
    MotionState {
        position: Point2::new(x / total, y / total),
        v: v / total,
        theta: wrap_angle(s.atan2(c)),
    }
}

/// Systematic resampling with a single uniform offset. Output weights are
/// uniform.
pub fn systematic_resample<R: Rng + ?Sized>(particles: &[Particle], rng: &mut R) -> Vec<Particle> {
    let n = particles.len();
    let w = 1.0 / n as f64;
    let u0: f64 = rng.random::<f64>() * w;
    let mut out = Vec::with_capacity(n);
    let mut cum = particles[0].weight;
    let mut i = 0;
    for k in 0..n {
        let target = u0 + k as f64 * w;
        while target > cum && i + 1 < n {
            i += 1;
            cum += particles[i].weight;
        }
        out.push(Particle {
            state: particles[i].state,
            weight: w,
        });
    }
    out
}

/// Per-axis Gaussian log-likelihood of the residual under diagonal-or-full
/// R. Axes with zero variance accept only an exact match.
fn log_likelihood(residual: &Vector2<f64>, r: &nalgebra::Matrix2<f64>, r_inv: Option<&nalgebra::Matrix2<f64>>) -> f64 {
    match r_inv {
        Some(inv) => -0.5 * (residual.transpose() * inv * residual)[(0, 0)],
        None => {
            let mut ll = 0.0;
            for k in 0..2 {
                if r[(k, k)] > 0.0 {
                    ll -= 0.5 * residual[k] * residual[k] / r[(k, k)];
                } else if residual[k] != 0.0 {
                    return f64::NEG_INFINITY;
                }
            }
            ll
        }
    }
}

/// Propagate, weight by the fix likelihood, estimate, and resample when the
/// effective sample size falls below `resample_threshold * N`.
#[allow(clippy::too_many_arguments)]
pub fn pf_step<R: Rng + ?Sized>(
    particles: &mut Vec<Particle>,
    u: &ControlInput,
    z: &PositionFix,
    lim: &MotionLimits,
    noise: &NoiseParams,
    terrain: &TerrainModel,
    cfg: &FilterConfig,
    rng: &mut R,
) -> Result<PfStepInfo, FilterError> {
    if particles.is_empty() {
        return Err(FilterError::InvalidConfig("particle set is empty".into()));
    }
    for p in particles.iter_mut() {
        p.state = step(&p.state, u, lim, noise, terrain, rng);
    }

    let r = cfg.r_matrix();
    let r_inv = if r.determinant() > 0.0 { r.try_inverse() } else { None };
    let zv = Vector2::new(z.position.x, z.position.y);
    let log_w: Vec<f64> = particles
        .iter()
        .map(|p| {
            let res = zv - Vector2::new(p.state.position.x, p.state.position.y);
            p.weight.ln() + log_likelihood(&res, &r, r_inv.as_ref())
        })
        .collect();
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut degenerate = false;
    if max.is_finite() {
        let mut total = 0.0;
        for (p, lw) in particles.iter_mut().zip(&log_w) {
            p.weight = (lw - max).exp();
            total += p.weight;
        }
        for p in particles.iter_mut() {
            p.weight /= total;
        }
    } else {
        degenerate = true;
        let w = 1.0 / particles.len() as f64;
        for p in particles.iter_mut() {
            p.weight = w;
        }
    }

    let estimate = weighted_estimate(particles);
    let ess = effective_sample_size(particles);
    let resampled = ess < cfg.resample_threshold * particles.len() as f64;
    if resampled {
        *particles = systematic_resample(particles, rng);
    }
    Ok(PfStepInfo {
        estimate,
        ess,
        resampled,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fix(x: f64, y: f64) -> PositionFix {
        PositionFix {
            position: Point2::new(x, y),
            covariance: Matrix2::zeros(),
        }
    }

    #[test]
    fn noiseless_particles_track_truth() {
        let lim = MotionLimits::default();
        let terrain = TerrainModel::default();
        let cfg = FilterConfig {
            r: [[0.0, 0.0], [0.0, 0.0]],
            particle_count: 50,
            ..FilterConfig::default()
        };
        let mut truth = MotionState::new(1.0, 2.0, 1.0, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut particles = init_particles(&truth, [0.0; 4], 50, &mut rng);
        for k in 0..100 {
            let u = ControlInput::new(2.0, if k % 20 < 10 { 0.05 } else { -0.05 });
            truth = crate::motion::deterministic_step(&truth, &u, &lim, &terrain);
            let info = pf_step(
                &mut particles,
                &u,
                &fix(truth.position.x, truth.position.y),
                &lim,
                &NoiseParams::zero(),
                &terrain,
                &cfg,
                &mut rng,
            )
            .unwrap();
            assert!(!info.degenerate);
            assert!(info.estimate.position.distance(&truth.position) < 1e-9);
            assert!((info.estimate.v - truth.v).abs() < 1e-9);
        }
    }

    #[test]
    fn weights_normalized_after_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let start = MotionState::new(0.0, 0.0, 1.0, 0.0);
        let mut particles = init_particles(&start, [0.5, 0.5, 0.1, 0.05], 500, &mut rng);
        let cfg = FilterConfig {
            resample_threshold: 0.0,
            ..FilterConfig::default()
        };
        pf_step(
            &mut particles,
            &ControlInput::new(1.0, 0.0),
            &fix(0.1, 0.0),
            &MotionLimits::default(),
            &NoiseParams::default(),
            &TerrainModel::default(),
            &cfg,
            &mut rng,
        )
        .unwrap();
        let s: f64 = particles.iter().map(|p| p.weight).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn far_measurement_resets_to_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let start = MotionState::new(0.0, 0.0, 1.0, 0.0);
        let mut particles = init_particles(&start, [0.0; 4], 20, &mut rng);
        let cfg = FilterConfig {
            r: [[0.0, 0.0], [0.0, 0.0]],
            particle_count: 20,
            ..FilterConfig::default()
        };
        let info = pf_step(
            &mut particles,
            &ControlInput::new(1.0, 0.0),
            &fix(50.0, 50.0),
            &MotionLimits::default(),
            &NoiseParams::zero(),
            &TerrainModel::default(),
            &cfg,
            &mut rng,
        )
        .unwrap();
        assert!(info.degenerate);
        assert!(particles.iter().all(|p| (p.weight - 0.05).abs() < 1e-15));
    }

    #[test]
    fn systematic_resample_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = |x: f64| MotionState::new(x, 0.0, 0.0, 0.0);
        let particles = vec![
            Particle { state: s(0.0), weight: 0.5 },
            Particle { state: s(1.0), weight: 0.25 },
            Particle { state: s(2.0), weight: 0.25 },
            Particle { state: s(3.0), weight: 0.0 },
        ];
        let out = systematic_resample(&particles, &mut rng);
        let count = |x: f64| out.iter().filter(|p| p.state.position.x == x).count();
        assert_eq!((count(0.0), count(1.0), count(2.0), count(3.0)), (2, 1, 1, 0));
        assert_eq!(effective_sample_size(&out), 4.0);
    }

    #[test]
    fn circular_mean_across_wrap() {
        let s = |t: f64| MotionState::new(0.0, 0.0, 0.0, t);
        let ps = [
            Particle { state: s(3.1), weight: 0.5 },
            Particle { state: s(-3.1), weight: 0.5 },
        ];
        assert!((weighted_estimate(&ps).theta.abs() - std::f64::consts::PI).abs() < 1e-9);
    }
}
