//! Force-torque dynamics learning and model-based control for peg-in-hole
//! insertion.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: parametric hole shapes, signed distances and peg footprints.
//! - [`contact_sim`]: a quasi-static penalty contact model that stands in for
//!   the robot and wrist sensor, and the 30-d multi-pose [`ForceState`].
//! - [`dataset`]: grid probing and offline trajectory synthesis.
//! - [`dynamics`]: a two-layer LSTM forward model trained by BPTT.
//! - [`mpc`]: cross-entropy-method planning against a forward model.
//! - [`rl`]: an advantage actor-critic policy trained against a frozen model.
//!
//! Everything that draws random numbers takes an explicit seed; see
//! [`seed::derive`].

pub mod contact_sim;
mod container;
pub mod dataset;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod mpc;
pub mod nn;
pub mod rl;
pub mod seed;
pub mod vec2;

pub use contact_sim::{ContactSim, ForceState, ForceTorque, NoiseStd, SimConfig, Tilt};
pub use dataset::{GridTable, Trajectory};
pub use dynamics::{DynamicsConfig, DynamicsModel, Forward, TrainReport};
pub use error::{Error, Result};
pub use geometry::{HoleSpec, PegFootprint, ShapeKind};
pub use vec2::Vec2;
