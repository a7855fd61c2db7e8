//! Modelling, simulation, identification and computed-torque control of a
//! differential-drive chassis carrying a free pivoting platform (pivot offset
//! from the wheel axis), the arrangement that makes the platform
//! omnidirectional.

pub mod config;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod identification;
pub mod lsq;
pub mod model;
pub mod ode;
pub mod par;
pub mod params;
pub mod sensors;
pub mod simulator;

pub use error::{Error, Result};
pub use model::{ControlInput, RobotState};
pub use params::{ParamId, RobotParams};
