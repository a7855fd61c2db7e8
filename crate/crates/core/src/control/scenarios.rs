//! Standard tracking setups and the measurements taken on them.

use crate::control::controller::{
    closed_loop_simulate, norms, transient, ClosedLoopOptions, ClosedLoopResult, Transient,
};
use crate::control::gains::Gains;
use crate::control::plan::initial_configuration;
use crate::control::reference::ReferenceTrajectory;
use crate::dynamics::PlanarForce;
use crate::error::Result;
use crate::model::{RobotState, Vec3};
use crate::params::RobotParams;
use crate::simulator::{DisturbancePulse, DisturbanceSchedule};

/// Fraction of the peak an error must fall below to count as settled.
pub const SETTLE_FRACTION: f64 = 0.02;

/// Three 1 s pushes on the figure-eight: 150 N along -y from 4 s, 200 N
/// along +x from 8 s and 350 N along -x from 11 s.
pub fn figure_eight_disturbances() -> DisturbanceSchedule {
    let pulse = |t_on: f64, fx: f64, fy: f64| DisturbancePulse {
        t_on,
        t_off: t_on + 1.0,
        force: PlanarForce::new(fx, fy),
    };
    DisturbanceSchedule {
        pulses: vec![
            pulse(4.0, 0.0, -150.0),
            pulse(8.0, 200.0, 0.0),
            pulse(11.0, -350.0, 0.0),
        ],
    }
}

/// At rest at the reference's initial pose.
pub fn start_at_rest(reference: &dyn ReferenceTrajectory) -> RobotState {
    RobotState::at_rest(initial_configuration(&reference.sample(0.0).p))
}

/// On the reference at `t = 0`, moving with its initial twist.
pub fn start_on_reference(params: &RobotParams, reference: &dyn ReferenceTrajectory) -> RobotState {
    let s = reference.sample(0.0);
    RobotState::from_twist(params, initial_configuration(&s.p), s.pd)
}

/// Position and velocity error transients on one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowTransients {
    pub t0: f64,
    pub t1: f64,
    pub position: Transient,
    pub velocity: Transient,
}

/// Transients of `|e_p|` and `|e_v|` on the windows between consecutive
/// `cuts` (the last window ends at the end of the run).
pub fn window_transients(res: &ClosedLoopResult, cuts: &[f64]) -> Vec<WindowTransients> {
    let e = &res.errors;
    let (np, nv) = (norms(&e.e_p), norms(&e.e_v));
    let t_end = e.times.last().copied().unwrap_or(0.0) + 1e-9;
    let mut edges: Vec<f64> = cuts.to_vec();
    edges.push(t_end);
    edges
        .windows(2)
        .filter_map(|w| {
            Some(WindowTransients {
                t0: w[0],
                t1: w[1],
                position: transient(&e.times, &np, w[0], w[1], SETTLE_FRACTION)?,
                velocity: transient(&e.times, &nv, w[0], w[1], SETTLE_FRACTION)?,
            })
        })
        .collect()
}

/// Recovery from one disturbance pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recovery {
    pub pulse: DisturbancePulse,
    pub position: Transient,
    pub velocity: Transient,
}

impl Recovery {
    /// Time from the end of the push until the position error settles.
    pub fn position_settle(&self) -> f64 {
        self.position.t_settle - self.pulse.t_off
    }

    pub fn velocity_settle(&self) -> f64 {
        self.velocity.t_settle - self.pulse.t_off
    }
}

/// Closed-loop run under `disturbances` plus the error response caused by
/// each pulse on its own.
///
/// Pulses can arrive before the previous response has died out. Under
/// feedback linearisation the error dynamics are linear, so the response to
/// pulse `j` is the difference between the runs with pulses `1..=j` and
/// `1..j`; it is measured from the end of the pulse to the end of the run.
pub fn disturbance_recovery(
    params: &RobotParams,
    x0: &RobotState,
    reference: &dyn ReferenceTrajectory,
    gains: &Gains,
    opts: &ClosedLoopOptions,
    disturbances: &DisturbanceSchedule,
    t_end: f64,
) -> Result<(ClosedLoopResult, Vec<Recovery>)> {
    let mut pulses = disturbances.pulses.clone();
    pulses.sort_by(|a, b| a.t_on.total_cmp(&b.t_on));
    let runs: Vec<ClosedLoopResult> =
        crate::par::map_range(crate::par::Execution::Parallel, pulses.len() + 1, |k| {
            let sched = DisturbanceSchedule {
                pulses: pulses[..k].to_vec(),
            };
            closed_loop_simulate(params, x0, reference, gains, opts, &sched, t_end)
        })
        .into_iter()
        .collect::<Result<_>>()?;

    let diff = |a: &[Vec3], b: &[Vec3]| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).collect()
    };
    let times = &runs[0].errors.times;
    let recoveries = pulses
        .iter()
        .enumerate()
        .filter_map(|(j, pulse)| {
            let (with, without) = (&runs[j + 1].errors, &runs[j].errors);
            let dp = diff(&with.e_p, &without.e_p);
            let dv = diff(&with.e_v, &without.e_v);
            Some(Recovery {
                pulse: *pulse,
                position: transient(times, &dp, pulse.t_off, t_end + 1e-9, SETTLE_FRACTION)?,
                velocity: transient(times, &dv, pulse.t_off, t_end + 1e-9, SETTLE_FRACTION)?,
            })
        })
        .collect();
    Ok((runs.into_iter().next_back().unwrap(), recoveries))
}
