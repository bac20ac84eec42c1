//! Joint-muscle mapping for tendon-driven arms.
//!
//! The crate is organized bottom-up:
//!
//! - [`kinematics`]: serial revolute chains, marker pose and Jacobian, gravity torque.
//! - [`routing`]: via-point muscle geometry, ground-truth moment arms, model-error
//!   injection and grid dataset generation.
//! - [`mapping`]: the learned mapping `l = f(θ)` (a three-layer perceptron), its
//!   initial training, anchored online updates and the binary model file.
//! - [`jacobian`]: smoothed muscle Jacobians from local quadratic fits.
//! - [`estimator`]: extended Kalman filter for joint angles from muscle lengths.
//! - [`plant`]: the simulated robot (muscle stiffness control + quasi-static settling).
//! - [`updaters`]: Antagonism and Vision updaters, marker observation and IK.
//!
//! Units are fixed crate-wide: mm, rad, N, kg, s.

pub mod desk;
pub mod error;
pub mod estimator;
pub mod jacobian;
pub mod kinematics;
pub mod mapping;
pub mod model;
pub mod par;
pub mod plant;
pub mod routing;
pub mod updaters;

pub use error::{Error, Result};
pub use estimator::{EkfConfig, EkfState, StateEstimator};
pub use jacobian::{analytic_jacobian, smoothed_jacobian, JacobianConfig};
pub use kinematics::{KinematicChain, Pose, RevoluteJoint};
pub use mapping::{Activation, JointMuscleMapping, OnlineTrainer, TrainConfig};
pub use model::{FnModel, LengthModel};
pub use par::Execution;
pub use plant::{ControllerGains, Plant, PlantState, SensorNoise};
pub use routing::{GeometricModel, GridSpec, MuscleRouting, PerturbationSpec};
pub use updaters::{UpdateSample, UpdateSource, UpdaterConfig};
