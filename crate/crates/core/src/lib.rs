//! Simulation library for GPS-denied navigation along a safe path.
//!
//! A moving entity follows a corridor around a ground-truth path through
//! landmark clusters. Its state is estimated from simulated landmark
//! trilateration fixes with an EKF (or a particle filter baseline), it is
//! kept inside the corridor by either a convex-hull or a centroid safety
//! check, and it detours around obstacles with a risk-aware RRT*.
//!
//! - [`geometry`]: points, polylines, convex hulls.
//! - [`motion`]: the battlefield motion model.
//! - [`localization`]: trilateration fixes and IMU readings.
//! - [`filters`]: EKF and particle filter.
//! - [`risk`]: corridor, weighted risk score, trajectory metrics.
//! - [`planner`]: risk-aware RRT*.
//! - [`navigator`]: the two maneuvering methods and the navigation loop.
//! - [`scenario`]: worlds, synthetic trajectories, scenario files.
//! - [`harness`]: Monte-Carlo trials and reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod filters;
pub mod geometry;
pub mod harness;
pub mod localization;
pub mod motion;
pub mod navigator;
pub mod planner;
pub mod risk;
pub mod scenario;

pub use filters::FilterKind;
pub use geometry::{Point2, Polyline};
pub use navigator::Method;
pub use scenario::Scenario;
