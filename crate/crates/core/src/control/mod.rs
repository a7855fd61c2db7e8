//! Task-space tracking control: references, gains, the computed-torque law,
//! planned trajectories and torque feasibility.

pub mod controller;
pub mod feasibility;
pub mod gains;
pub mod interval;
pub mod plan;
pub mod reference;
pub mod scenarios;

pub use controller::{
    closed_loop_simulate, computed_torque, ClosedLoopOptions, ClosedLoopResult, ComputedTorque,
    ErrorSeries, TwistFeedback,
};
pub use feasibility::{torque_feasibility, FeasibilityReport, TorqueBounds};
pub use gains::{tune_gains, Gains};
pub use interval::Interval;
pub use plan::{generate_plan, open_loop_replay, track_planned_trajectory};
pub use reference::{
    FigureEightReference, PolylineReference, RefSample, ReferenceTrajectory, SampledReference,
    SlalomReference,
};
