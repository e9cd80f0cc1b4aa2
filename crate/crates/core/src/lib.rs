//! Spoofing-resilient planning for planar robots localized by GNSS and a
//! range (RSSI) beacon at the origin.
//!
//! The crate is generic over the floating point type; [`f64`] aliases live at
//! the crate root and the [`single`] module carries `f32` equivalents.

// `!(x > 0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack_synthesis;
pub mod bvp_solver;
pub mod dynamics;
pub mod error;
mod ode;
pub mod optimal_attack;
pub mod scalar;
pub mod secure_planning;
pub mod sensing;
pub mod unicycle_security;
pub mod vec2;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use vec2::Vec2;

pub use ode::{rk4_step, try_rk4_step};

pub type Vector = vec2::Vec2<f64>;
pub type State = dynamics::RobotState<f64>;
pub type Pose = dynamics::UnicycleState<f64>;
pub type DiTrajectory = dynamics::DiTrajectory<f64>;
pub type UnicycleTrajectory = dynamics::UnicycleTrajectory<f64>;

/// Single-precision aliases.
pub mod single {
    pub type Vector = crate::vec2::Vec2<f32>;
    pub type State = crate::dynamics::RobotState<f32>;
    pub type Pose = crate::dynamics::UnicycleState<f32>;
    pub type DiTrajectory = crate::dynamics::DiTrajectory<f32>;
    pub type UnicycleTrajectory = crate::dynamics::UnicycleTrajectory<f32>;
}
