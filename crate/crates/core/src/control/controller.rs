//! Computed-torque tracking and closed-loop simulation.

use std::io::Write;

use crate::control::gains::Gains;
use crate::control::reference::{RefSample, ReferenceTrajectory};
use crate::dynamics;
use crate::error::{Error, Result};
use crate::model::{self, ControlInput, RobotState, Vec12, Vec3};
use crate::ode::{self, OdeOptions, OdeStats};
use crate::params::RobotParams;
use crate::simulator::{event_grid, fmt_f64, DisturbanceSchedule, Drift, SimTrajectory};

/// How the controller obtains the platform twist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TwistFeedback {
    /// `(x_dot, y_dot, alpha_dot)` straight from the state.
    #[default]
    State,
    /// Forward instantaneous kinematics applied to the motor rates.
    MotorRates,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComputedTorque {
    pub u: ControlInput,
    /// `Mbar p_ddot_d + Cbar p_dot`: what following the reference costs.
    pub u_traj: Vec3,
    /// `Mbar (-Kp e_p - Kv e_v)`: the error correction.
    pub u_corr: Vec3,
    /// Commanded task-space acceleration.
    pub v: Vec3,
    pub e_p: Vec3,
    pub e_v: Vec3,
}

pub fn measured_twist(params: &RobotParams, state: &RobotState, feedback: TwistFeedback) -> Vec3 {
    match feedback {
        TwistFeedback::State => state.twist(),
        TwistFeedback::MotorRates => model::fik_matrix(params, &state.q) * state.motor_speeds(),
    }
}

/// `u = Mbar (p_ddot_d - Kp e_p - Kv e_v) + Cbar p_dot`.
pub fn computed_torque(
    params: &RobotParams,
    state: &RobotState,
    r: &RefSample,
    gains: &Gains,
    feedback: TwistFeedback,
) -> ComputedTorque {
    let pdot = measured_twist(params, state, feedback);
    let e_p = state.pose() - r.p;
    let e_v = pdot - r.pd;
    let ts = dynamics::task_space_model(params, &state.q, &state.qdot);
    let corr_acc = -gains.kp.component_mul(&e_p) - gains.kv.component_mul(&e_v);
    let v = r.pdd + corr_acc;
    let u_traj = ts.mbar * r.pdd + ts.cbar * pdot;
    let u_corr = ts.mbar * corr_acc;
    ComputedTorque {
        u: ControlInput::from_vector(&(u_traj + u_corr)),
        u_traj,
        u_corr,
        v,
        e_p,
        e_v,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedLoopOptions {
    /// Controller update rate [Hz]; the torque is held between updates.
    pub control_rate: f64,
    pub ode: OdeOptions,
    pub feedback: TwistFeedback,
    /// Symmetric per-motor saturation, if any.
    pub torque_limit: Option<Vec3>,
}

impl Default for ClosedLoopOptions {
    fn default() -> Self {
        ClosedLoopOptions {
            control_rate: 1000.0,
            ode: OdeOptions::default(),
            feedback: TwistFeedback::State,
            torque_limit: None,
        }
    }
}

/// Tracking errors `p - p_d` and `p_dot - p_dot_d` at each controller update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorSeries {
    pub times: Vec<f64>,
    pub e_p: Vec<Vec3>,
    pub e_v: Vec<Vec3>,
}

impl ErrorSeries {
    pub fn max_abs(&self) -> (Vec3, Vec3) {
        let fold = |v: &[Vec3]| {
            v.iter()
                .fold(Vec3::zeros(), |m, e| m.zip_map(e, |a, b| a.max(b.abs())))
        };
        (fold(&self.e_p), fold(&self.e_v))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "ex", "ey", "ealpha", "edx", "edy", "edalpha"])?;
        for i in 0..self.times.len() {
            let mut rec = vec![fmt_f64(self.times[i])];
            rec.extend(
                self.e_p[i]
                    .iter()
                    .chain(self.e_v[i].iter())
                    .map(|v| fmt_f64(*v)),
            );
            wr.write_record(&rec)?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopResult {
    pub traj: SimTrajectory,
    pub errors: ErrorSeries,
    pub drift: Drift,
}

/// Simulate the robot under computed-torque control sampled at
/// `opts.control_rate`, recording state and errors at every update.
pub fn closed_loop_simulate(
    params: &RobotParams,
    x0: &RobotState,
    reference: &dyn ReferenceTrajectory,
    gains: &Gains,
    opts: &ClosedLoopOptions,
    disturbances: &DisturbanceSchedule,
    t_end: f64,
) -> Result<ClosedLoopResult> {
    params.validate()?;
    if !(opts.control_rate > 0.0) || !(t_end > 0.0) {
        return Err(Error::InvalidInput(
            "control rate and horizon must be > 0".into(),
        ));
    }
    let dt = 1.0 / opts.control_rate;
    let n = (t_end / dt + 1e-9).floor() as usize;
    let edges: Vec<f64> = disturbances.edges().collect();

    let mut traj = SimTrajectory {
        times: Vec::with_capacity(n + 1),
        states: Vec::with_capacity(n + 1),
        inputs: Vec::with_capacity(n + 1),
        stats: OdeStats::default(),
    };
    let mut errors = ErrorSeries::default();
    let mut y = x0.to_vector();
    let mut h = 0.0;
    let mut drift = Drift::default();
    let q0 = x0.q;

    for k in 0..=n {
        let t = k as f64 * dt;
        let state = RobotState::from_vector(&y);
        drift.velocity = drift
            .velocity
            .max((model::constraint_jacobian(params, &state.q) * state.qdot).amax());
        drift.holonomic = drift
            .holonomic
            .max(model::holonomic_residual(params, &state.q, &q0).abs());
        let ct = computed_torque(params, &state, &reference.sample(t), gains, opts.feedback);
        let u = match &opts.torque_limit {
            Some(lim) => ct.u.clamped(lim),
            None => ct.u,
        };
        traj.times.push(t);
        traj.states.push(state);
        traj.inputs.push(u);
        errors.times.push(t);
        errors.e_p.push(ct.e_p);
        errors.e_v.push(ct.e_v);
        if k == n {
            break;
        }
        let t_next = (k + 1) as f64 * dt;
        let cuts = event_grid(edges.clone(), t, t_next);
        for w in cuts.windows(2) {
            let fp = disturbances.force_at(w[0]);
            y = ode::integrate(
                |_t, x: &Vec12| {
                    dynamics::state_derivative(params, &RobotState::from_vector(x), &u, fp)
                },
                w[0],
                y,
                w[1],
                &opts.ode,
                &mut h,
                &mut traj.stats,
                |_, _| Ok(()),
            )?;
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { t: t_next });
        }
    }
    Ok(ClosedLoopResult {
        traj,
        errors,
        drift,
    })
}

/// An error excursion and how long it took to die out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transient {
    pub t_start: f64,
    pub t_peak: f64,
    pub peak: f64,
    /// First sample after the last one above `fraction * peak`; infinite
    /// if the window ends before the signal settles.
    pub t_settle: f64,
}

impl Transient {
    /// Settling time measured from the start of the window.
    pub fn settle_from_start(&self) -> f64 {
        self.t_settle - self.t_start
    }

    /// Settling time measured from the peak.
    pub fn settle_from_peak(&self) -> f64 {
        self.t_settle - self.t_peak
    }
}

/// Peak of `|signal|` on `[t0, t1)` and the time after which it stays below
/// `fraction` of that peak. `None` for an empty window.
pub fn transient(
    times: &[f64],
    signal: &[f64],
    t0: f64,
    t1: f64,
    fraction: f64,
) -> Option<Transient> {
    let idx: Vec<usize> = (0..times.len())
        .filter(|&i| times[i] >= t0 - 1e-12 && times[i] < t1 - 1e-12)
        .collect();
    let first = *idx.first()?;
    let (mut ip, mut peak) = (first, 0.0f64);
    for &i in &idx {
        if signal[i].abs() > peak {
            peak = signal[i].abs();
            ip = i;
        }
    }
    let last_above = idx
        .iter()
        .rev()
        .find(|&&i| signal[i].abs() > fraction * peak)
        .copied()
        .unwrap_or(first);
    // first sample at or below the threshold after the last excursion above it
    let t_settle = idx
        .iter()
        .copied()
        .find(|&i| i > last_above)
        .map_or(f64::INFINITY, |i| times[i]);
    Some(Transient {
        t_start: times[first],
        t_peak: times[ip],
        peak,
        t_settle: if peak == 0.0 { times[first] } else { t_settle },
    })
}

/// Euclidean norm of each error vector.
pub fn norms(v: &[Vec3]) -> Vec<f64> {
    v.iter().map(|e| e.norm()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::reference::SlalomReference;
    use crate::model::Vec6;

    #[test]
    fn on_reference_has_no_correction() {
        let p = RobotParams::nominal_frictionless();
        let q = Vec6::new(0.2, 0.1, 0.4, 1.0, 2.0, 0.3);
        let pd = Vec3::new(0.3, -0.2, 0.5);
        let s = RobotState::from_twist(&p, q, pd);
        let r = RefSample {
            p: s.pose(),
            pd,
            pdd: Vec3::new(0.1, 0.2, -0.3),
        };
        let g = Gains::uniform(3.0).unwrap();
        let ct = computed_torque(&p, &s, &r, &g, TwistFeedback::State);
        assert_eq!(ct.u_corr, Vec3::zeros());
        assert!((ct.u.to_vector() - ct.u_traj).amax() == 0.0);
        let ct2 = computed_torque(&p, &s, &r, &g, TwistFeedback::MotorRates);
        assert!((ct2.u.to_vector() - ct.u.to_vector()).amax() < 1e-9);
    }

    #[test]
    fn rest_gives_zero_torque() {
        let p = RobotParams::nominal_frictionless();
        let s = RobotState::at_rest(Vec6::zeros());
        let g = Gains::uniform(3.0).unwrap();
        let ct = computed_torque(
            &p,
            &s,
            &RefSample::at_rest(Vec3::zeros()),
            &g,
            TwistFeedback::State,
        );
        assert_eq!(ct.u, ControlInput::ZERO);
    }

    #[test]
    fn linearisation_is_exact() {
        let p = RobotParams::nominal();
        let s = RobotState::from_twist(
            &p,
            Vec6::new(0.0, 0.0, 0.7, 0.0, 0.0, -0.2),
            Vec3::new(0.5, 0.1, -0.4),
        );
        let r = RefSample {
            p: Vec3::new(0.1, 0.0, 0.6),
            pd: Vec3::new(0.4, 0.0, 0.0),
            pdd: Vec3::new(0.2, -0.1, 0.3),
        };
        let g = Gains::uniform(3.0).unwrap();
        let ct = computed_torque(&p, &s, &r, &g, TwistFeedback::State);
        let qdd = dynamics::forward_dynamics(&p, &s.q, &s.qdot, &ct.u, None).unwrap();
        assert!((Vec3::new(qdd[0], qdd[1], qdd[2]) - ct.v).amax() < 1e-9);
    }

    #[test]
    fn tracks_from_matching_start() {
        let p = RobotParams::nominal_frictionless();
        let r = SlalomReference::standard();
        let x0 = RobotState::at_rest(Vec6::zeros());
        let g = Gains::uniform(3.0).unwrap();
        let res = closed_loop_simulate(
            &p,
            &x0,
            &r,
            &g,
            &ClosedLoopOptions::default(),
            &DisturbanceSchedule::none(),
            2.0,
        )
        .unwrap();
        let (ep, ev) = res.errors.max_abs();
        assert!(ep.amax() < 1e-4 && ev.amax() < 1e-3, "{ep} {ev}");
        assert_eq!(res.traj.len(), 2001);
    }

    #[test]
    fn transient_measurement() {
        let times: Vec<f64> = (0..=1000).map(|k| k as f64 * 0.01).collect();
        let sig: Vec<f64> = times.iter().map(|t| (-t).exp()).collect();
        let tr = transient(&times, &sig, 0.0, 10.0, 0.02).unwrap();
        assert_eq!(tr.peak, 1.0);
        assert!((tr.t_settle - 50f64.ln()).abs() < 0.011, "{}", tr.t_settle);
    }
}
