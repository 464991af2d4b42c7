//! Simulation and analysis toolkit for fully-actuated mechanical systems in
//! port-Hamiltonian form whose actuators exhibit symmetric or asymmetric
//! dead-zones.
//!
//! The crate provides:
//!
//! - [`plant`]: the open-loop mechanical system (mass matrix, potential,
//!   damping, diagonal input map, constant offset) and its energy/vector field.
//! - [`actuator`]: the piecewise-linear dead-zone, its exact hard inverse and
//!   the smooth `tanh` inverse approximation.
//! - [`control`]: the PI passivity-based law, the dead-zone compensation term,
//!   their sum, and the closed-loop energy (Lyapunov) function.
//! - [`analysis`]: linearization at the setpoint, the saddle-point form built
//!   from Cholesky factors, its spectrum, and the real-spectrum tuning rule.
//! - [`sim`]: fixed-step fourth-order integration of the ideal and physical
//!   closed loops, trajectory recording, CSV export, and steady-state metrics.
//! - [`scenarios`]: the built-in 2-DoF planar manipulator and the ready-made
//!   experiment suite.
//!
//! All numerics are generic over the scalar type through the [`Real`] trait;
//! `f64` is the intended precision and concrete aliases are exported at the
//! crate root (`MechanicalSystem64`, `PbcGains64`, ...).

// Negated comparisons like `!(x > 0)` act as NaN-rejecting validation guards.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod actuator;
pub mod analysis;
pub mod control;
pub mod linalg;
pub mod plant;
pub mod scenarios;
pub mod sim;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Scalar type for all toolkit math: `f32` or `f64`.
pub trait Real: RealField + FromPrimitive + ToPrimitive + Copy {}

impl<T: RealField + FromPrimitive + ToPrimitive + Copy> Real for T {}

/// Lossy conversion from an `f64` constant into the working scalar.
pub(crate) fn c<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant not representable in scalar type")
}

/// `true` when the value is neither NaN nor infinite.
pub(crate) fn is_finite<T: Real>(x: T) -> bool {
    x.to_f64().is_some_and(f64::is_finite)
}

/// Errors reported by model construction, evaluation, and simulation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{what} must be positive definite")]
    NotPositiveDefinite { what: &'static str },
    #[error("{what} must be symmetric")]
    NotSymmetric { what: &'static str },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("invalid parameter {what}: {why}")]
    InvalidParameter {
        what: &'static str,
        why: &'static str,
    },
    #[error("eigenvalue iteration did not converge")]
    EigenNotConverged,
    #[error("degenerate eigenvector: first block is numerically zero")]
    DegenerateEigenvector,
    #[error("dead-zone model is required for physical wiring")]
    MissingDeadZone,
    #[error("controller gains are required for controller `{0}`")]
    MissingGains(&'static str),
    #[error("state norm exceeded 1e9 at t = {t}; integration aborted")]
    StateExplosion { t: f64 },
    #[error("non-finite state at t = {t}; integration aborted")]
    NonFiniteState { t: f64 },
    #[error("trajectory is empty")]
    EmptyTrajectory,
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

pub use actuator::DeadZone;
pub use analysis::{SaddleDecomposition, TransientMetrics, TuningReport};
pub use control::PbcGains;
pub use plant::{GeneralizedState, MechanicalSystem};
pub use scenarios::{Scenario, SystemSpec};
pub use sim::{ControllerKind, SimConfig, SteadyStateError, Trajectory, Wiring};

/// Concrete double-precision aliases.
pub type GeneralizedState64 = GeneralizedState<f64>;
pub type MechanicalSystem64 = MechanicalSystem<f64>;
pub type DeadZone64 = DeadZone<f64>;
pub type PbcGains64 = PbcGains<f64>;
pub type SaddleDecomposition64 = SaddleDecomposition<f64>;
pub type SimConfig64 = SimConfig<f64>;
pub type Trajectory64 = Trajectory<f64>;
pub type Scenario64 = Scenario<f64>;

/// Concrete single-precision aliases.
pub type GeneralizedState32 = GeneralizedState<f32>;
pub type MechanicalSystem32 = MechanicalSystem<f32>;
pub type DeadZone32 = DeadZone<f32>;
pub type PbcGains32 = PbcGains<f32>;
