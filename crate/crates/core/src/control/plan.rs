//! Planned trajectories: generation, open-loop replay and closed-loop tracking.
//!
//! A plan is a [`SimTrajectory`] sampled on a uniform grid and stored with
//! the simulator's CSV schema. Its states and actions need not agree with
//! each other or with the plant.

use crate::control::controller::{closed_loop_simulate, ClosedLoopOptions, ClosedLoopResult};
use crate::control::gains::Gains;
use crate::control::reference::{ReferenceTrajectory, SampledReference};
use crate::dynamics;
use crate::error::{Error, Result};
use crate::model::{self, ControlInput, RobotState, Vec3, Vec6};
use crate::ode::{self, OdeOptions, OdeStats};
use crate::params::RobotParams;
use crate::simulator::{
    self, event_grid, ControlSequence, DisturbanceSchedule, SimOptions, SimTrajectory,
};

pub const PLAN_DT: f64 = 0.02;
/// Inertia scale of the model the inconsistent plan's actions come from.
pub const LIGHT_MODEL_SCALE: f64 = 0.98;

/// Configuration whose pose is `p` with wheel and pivot angles at zero.
pub fn initial_configuration(p: &Vec3) -> Vec6 {
    Vec6::new(p[0], p[1], p[2], 0.0, 0.0, 0.0)
}

/// Integrate `q_dot = Lambda(q) p_dot_d(t)` from `q0` and return admissible
/// states at `times` (ascending, starting at the initial time).
pub fn kinematic_rollout(
    params: &RobotParams,
    reference: &dyn ReferenceTrajectory,
    q0: &Vec6,
    times: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<RobotState>> {
    let Some(&t0) = times.first() else {
        return Ok(Vec::new());
    };
    let twist = |q: &Vec6, t: f64| model::lambda_delta(params, q).0 * reference.sample(t).pd;
    let t_last = *times.last().unwrap();
    let mut cuts: Vec<f64> = reference.breakpoints();
    cuts.extend_from_slice(times);
    let grid = event_grid(cuts, t0, t_last);

    let mut out = Vec::with_capacity(times.len());
    let mut q = *q0;
    let (mut h, mut stats) = (0.0, OdeStats::default());
    let mut next = 0;
    let mut emit = |t: f64, q: &Vec6, out: &mut Vec<RobotState>| {
        while next < times.len() && (times[next] - t).abs() <= 1e-9 {
            out.push(RobotState::new(*q, twist(q, times[next])));
            next += 1;
        }
    };
    emit(t0, &q, &mut out);
    for w in grid.windows(2) {
        // piecewise references switch at breakpoints; evaluate each piece
        // from the inside so the left piece is used up to its end
        let (ta, tb) = (w[0], w[1]);
        let tm = 0.5 * (ta + tb);
        let piece = |t: f64| {
            if (t - tb).abs() < 1e-12 {
                tm.max(t - 1e-9)
            } else {
                t
            }
        };
        q = ode::integrate(
            |t, q: &Vec6| Ok(model::lambda_delta(params, q).0 * reference.sample(piece(t)).pd),
            ta,
            q,
            tb,
            opts,
            &mut h,
            &mut stats,
            |_, _| Ok(()),
        )?;
        emit(tb, &q, &mut out);
    }
    if out.len() != times.len() {
        return Err(Error::InvalidInput(
            "rollout times must be ascending".into(),
        ));
    }
    Ok(out)
}

/// Uniform grid `t0, t0 + dt, ..., t_end`.
pub fn time_grid(t0: f64, dt: f64, t_end: f64) -> Vec<f64> {
    let n = ((t_end - t0) / dt + 1e-9).floor() as usize;
    (0..=n).map(|k| t0 + k as f64 * dt).collect()
}

/// Parameters with every inertial quantity scaled by `s`.
pub fn scale_inertia(params: &RobotParams, s: f64) -> RobotParams {
    RobotParams {
        mc: params.mc * s,
        mp: params.mp * s,
        ic: params.ic * s,
        ip: params.ip * s,
        ia: params.ia * s,
        ..*params
    }
}

/// Build a plan along `reference`: states from the kinematic rollout on
/// `state_params`, actions from the task-space inverse dynamics of
/// `action_params`. Using different parameter sets gives an inconsistent
/// plan.
pub fn generate_plan(
    state_params: &RobotParams,
    action_params: &RobotParams,
    reference: &dyn ReferenceTrajectory,
    dt: f64,
) -> Result<SimTrajectory> {
    state_params.validate()?;
    action_params.validate()?;
    if !(dt > 0.0) {
        return Err(Error::InvalidInput("plan period must be > 0".into()));
    }
    let times = time_grid(0.0, dt, reference.horizon());
    let q0 = initial_configuration(&reference.sample(0.0).p);
    let states = kinematic_rollout(state_params, reference, &q0, &times, &OdeOptions::default())?;
    let inputs = times
        .iter()
        .zip(&states)
        .map(|(&t, s)| {
            let ts = dynamics::task_space_model(action_params, &s.q, &s.qdot);
            ControlInput::from_vector(&(ts.mbar * reference.sample(t).pdd + ts.cbar * s.twist()))
        })
        .collect();
    Ok(SimTrajectory {
        times,
        states,
        inputs,
        stats: OdeStats::default(),
    })
}

fn plan_period(plan: &SimTrajectory) -> Result<f64> {
    if plan.len() < 3 {
        return Err(Error::InvalidInput(
            "a plan needs at least 3 samples".into(),
        ));
    }
    Ok(plan.times[1] - plan.times[0])
}

/// Apply the plan's actions under zero-order hold from its first state.
pub fn open_loop_replay(
    params: &RobotParams,
    plan: &SimTrajectory,
    ode: &OdeOptions,
) -> Result<SimTrajectory> {
    let dt = plan_period(plan)?;
    let controls = ControlSequence::new(plan.times[0], dt, plan.inputs.clone())?;
    let opts = SimOptions {
        ode: *ode,
        output_dt: Some(dt),
    };
    simulator::integrate(
        params,
        &plan.states[0],
        &controls,
        *plan.times.last().unwrap(),
        &opts,
        &DisturbanceSchedule::none(),
    )
}

/// Planar distance between replayed and planned positions at each plan sample.
pub fn position_drift(plan: &SimTrajectory, replay: &SimTrajectory) -> Vec<f64> {
    plan.times
        .iter()
        .zip(&plan.states)
        .filter_map(|(&t, s)| {
            let r = &replay.states[replay.index_of(t)?];
            Some(((r.q[0] - s.q[0]).powi(2) + (r.q[1] - s.q[1]).powi(2)).sqrt())
        })
        .collect()
}

/// Track the plan's poses with computed torque, starting from its first state.
pub fn track_planned_trajectory(
    params: &RobotParams,
    plan: &SimTrajectory,
    gains: &Gains,
    opts: &ClosedLoopOptions,
) -> Result<ClosedLoopResult> {
    plan_period(plan)?;
    let reference = SampledReference::from_trajectory(plan)?;
    closed_loop_simulate(
        params,
        &plan.states[0],
        &reference,
        gains,
        opts,
        &DisturbanceSchedule::none(),
        reference.horizon(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::reference::{PolylineReference, SlalomReference};

    #[test]
    fn rollout_follows_reference_and_stays_admissible() {
        let p = RobotParams::nominal();
        let r = PolylineReference::corridor();
        let times = time_grid(0.0, 0.5, 30.0);
        let xs = kinematic_rollout(&p, &r, &Vec6::zeros(), &times, &OdeOptions::default()).unwrap();
        for (t, s) in times.iter().zip(&xs) {
            assert!((s.pose() - r.sample(*t).p).amax() < 1e-8, "t={t}");
            assert!((model::constraint_jacobian(&p, &s.q) * s.qdot).amax() < 1e-12);
        }
    }

    #[test]
    fn recorded_closed_loop_run_replays_exactly() {
        let p = RobotParams::nominal_frictionless();
        let r = SlalomReference {
            duration: 2.0,
            ..SlalomReference::standard()
        };
        let g = Gains::uniform(3.0).unwrap();
        let x0 = RobotState::at_rest(Vec6::zeros());
        let run = closed_loop_simulate(
            &p,
            &x0,
            &r,
            &g,
            &ClosedLoopOptions::default(),
            &DisturbanceSchedule::none(),
            2.0,
        )
        .unwrap();
        let replay = open_loop_replay(&p, &run.traj, &OdeOptions::default()).unwrap();
        let d = position_drift(&run.traj, &replay);
        assert_eq!(d.len(), run.traj.len());
        assert!(d.iter().cloned().fold(0.0, f64::max) < 1e-8);
    }

    #[test]
    fn plan_is_on_reference() {
        let p = RobotParams::nominal_frictionless();
        let r = SlalomReference::standard();
        let plan = generate_plan(&p, &scale_inertia(&p, LIGHT_MODEL_SCALE), &r, PLAN_DT).unwrap();
        assert_eq!(plan.len(), 601);
        for (t, s) in plan.times.iter().zip(&plan.states) {
            assert!((s.pose() - r.sample(*t).p).amax() < 1e-8);
        }
    }

    #[test]
    fn lighter_model_scales_inertia_only() {
        let p = RobotParams::nominal();
        let l = scale_inertia(&p, LIGHT_MODEL_SCALE);
        assert_eq!(l.mc, p.mc * 0.98);
        assert_eq!((l.l1, l.bw, l.bp), (p.l1, p.bw, p.bp));
    }
}
