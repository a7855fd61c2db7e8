//! Interval bounds on the computed torque under boxed tracking errors.
//!
//! Along the nominal motion the torque is affine in the errors:
//!
//! `u = [Mbar p_ddot_d + Cbar p_dot_d] + (-Mbar Kp) e_p + (Cbar - Mbar Kv) e_v`
//!
//! with `Mbar`, `Cbar` frozen at the nominal state. Every error component
//! enters once, so interval evaluation of this form is the exact hull (up
//! to outward rounding).

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::gains::Gains;
use crate::control::interval::Interval;
use crate::control::plan::{initial_configuration, kinematic_rollout, time_grid};
use crate::control::reference::ReferenceTrajectory;
use crate::dynamics::{self, TaskSpaceModel};
use crate::error::{Error, Result};
use crate::model::{Mat3, RobotState, Vec3};
use crate::ode::OdeOptions;
use crate::par::{self, Execution};
use crate::params::RobotParams;
use crate::simulator::fmt_f64;

pub const DEFAULT_TORQUE_LIMIT: f64 = 50.0;

pub type Box3 = [Interval; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorqueBounds {
    /// Admissible torque per motor (right wheel, left wheel, pivot).
    pub limits: Box3,
    /// Position error box for (x, y, alpha).
    pub ep_box: Box3,
    /// Velocity error box for (x_dot, y_dot, alpha_dot).
    pub ev_box: Box3,
}

impl TorqueBounds {
    pub fn new(limits: Box3, ep_box: Box3, ev_box: Box3) -> Result<Self> {
        for (name, b) in [("position", &ep_box), ("velocity", &ev_box)] {
            if b.iter().any(|i| !i.contains(0.0)) {
                return Err(Error::InvalidInput(format!(
                    "{name} error box must contain 0"
                )));
            }
        }
        Ok(TorqueBounds {
            limits,
            ep_box,
            ev_box,
        })
    }

    /// Symmetric boxes: `|u_i| <= limit`, `|e_p,i| <= ep`, `|e_v,i| <= ev`.
    pub fn symmetric(limit: f64, ep: Vec3, ev: Vec3) -> Result<Self> {
        let sym = |v: &Vec3| -> Result<Box3> {
            Ok([
                Interval::new(-v[0], v[0])?,
                Interval::new(-v[1], v[1])?,
                Interval::new(-v[2], v[2])?,
            ])
        };
        Self::new(sym(&Vec3::repeat(limit))?, sym(&ep)?, sym(&ev)?)
    }
}

impl Default for TorqueBounds {
    /// +-50 N m motors; 1 cm / 0.01 rad and 5 cm/s / 0.05 rad/s error boxes.
    fn default() -> Self {
        Self::symmetric(
            DEFAULT_TORQUE_LIMIT,
            Vec3::new(0.01, 0.01, 0.01),
            Vec3::new(0.05, 0.05, 0.05),
        )
        .expect("default bounds are valid")
    }
}

/// Nominal state and the affine torque map at one grid time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTorque {
    pub u_traj: Vec3,
    /// `d u / d e_p = -Mbar Kp`.
    pub du_dep: Mat3,
    /// `d u / d e_v = Cbar - Mbar Kv`.
    pub du_dev: Mat3,
}

impl AffineTorque {
    pub fn new(ts: &TaskSpaceModel, pdd: &Vec3, pd: &Vec3, gains: &Gains) -> Self {
        AffineTorque {
            u_traj: ts.mbar * pdd + ts.cbar * pd,
            du_dep: -ts.mbar * Mat3::from_diagonal(&gains.kp),
            du_dev: ts.cbar - ts.mbar * Mat3::from_diagonal(&gains.kv),
        }
    }

    pub fn eval(&self, ep: &Vec3, ev: &Vec3) -> Vec3 {
        self.u_traj + self.du_dep * ep + self.du_dev * ev
    }

    pub fn hull(&self, ep_box: &Box3, ev_box: &Box3) -> Box3 {
        std::array::from_fn(|i| {
            let mut acc = Interval::point(self.u_traj[i]);
            for j in 0..3 {
                acc = acc + self.du_dep[(i, j)] * ep_box[j] + self.du_dev[(i, j)] * ev_box[j];
            }
            acc
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub times: Vec<f64>,
    pub nominal: Vec<RobotState>,
    pub torques: Vec<AffineTorque>,
    pub intervals: Vec<Box3>,
    pub limits: Box3,
    pub ok: bool,
}

impl FeasibilityReport {
    /// Grid times at which some torque interval leaves the motor limits.
    pub fn violations(&self) -> Vec<f64> {
        self.times
            .iter()
            .zip(&self.intervals)
            .filter(|(_, iv)| iv.iter().zip(&self.limits).any(|(u, l)| !u.is_subset_of(l)))
            .map(|(t, _)| *t)
            .collect()
    }

    /// Largest `|u|` any interval reaches, per motor.
    pub fn peak(&self) -> Vec3 {
        self.intervals.iter().fold(Vec3::zeros(), |m, iv| {
            Vec3::from_fn(|i, _| m[i].max(iv[i].lo().abs()).max(iv[i].hi().abs()))
        })
    }

    /// Draw `samples` error pairs uniformly from the boxes at every grid
    /// time, evaluate the control law directly at the nominal state and
    /// count torque components falling outside the reported intervals.
    pub fn sample_check(
        &self,
        params: &RobotParams,
        reference: &dyn ReferenceTrajectory,
        gains: &Gains,
        bounds: &TorqueBounds,
        samples: usize,
        seed: u64,
        exec: Execution,
    ) -> usize {
        let (kp, kv) = (
            Mat3::from_diagonal(&gains.kp),
            Mat3::from_diagonal(&gains.kv),
        );
        let draw = |rng: &mut ChaCha8Rng, b: &Box3| {
            Vec3::from_fn(|i, _| rng.random_range(b[i].lo()..=b[i].hi()))
        };
        par::map_range(exec, self.times.len(), |k| {
            let s = &self.nominal[k];
            let r = reference.sample(self.times[k]);
            let ts = dynamics::task_space_model(params, &s.q, &s.qdot);
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            (0..samples)
                .map(|_| {
                    let (ep, ev) = (
                        draw(&mut rng, &bounds.ep_box),
                        draw(&mut rng, &bounds.ev_box),
                    );
                    let u = ts.mbar * (r.pdd - kp * ep - kv * ev) + ts.cbar * (r.pd + ev);
                    (0..3)
                        .filter(|&i| !self.intervals[k][i].contains(u[i]))
                        .count()
                })
                .sum::<usize>()
        })
        .into_iter()
        .sum()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "t", "u_traj_r", "u_traj_l", "u_traj_p", "lo_r", "hi_r", "lo_l", "hi_l", "lo_p",
            "hi_p", "ok",
        ])?;
        for ((t, a), iv) in self.times.iter().zip(&self.torques).zip(&self.intervals) {
            let ok = iv.iter().zip(&self.limits).all(|(u, l)| u.is_subset_of(l));
            let mut rec = vec![fmt_f64(*t)];
            rec.extend(a.u_traj.iter().map(|v| fmt_f64(*v)));
            for i in iv {
                rec.push(fmt_f64(i.lo()));
                rec.push(fmt_f64(i.hi()));
            }
            rec.push(u8::from(ok).to_string());
            wr.write_record(&rec)?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Bound the computed torque along `reference` on a grid of period `dt`.
///
/// The nominal motion comes from rolling the reference twist through the
/// kinematics; `Mbar` and `Cbar` are taken on it and held fixed against the
/// errors, which is only accurate while the robot stays near the reference.
pub fn torque_feasibility(
    params: &RobotParams,
    reference: &dyn ReferenceTrajectory,
    gains: &Gains,
    bounds: &TorqueBounds,
    dt: f64,
) -> Result<FeasibilityReport> {
    params.validate()?;
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(
            "feasibility grid period must be > 0".into(),
        ));
    }
    let times = time_grid(0.0, dt, reference.horizon());
    let q0 = initial_configuration(&reference.sample(0.0).p);
    let nominal = kinematic_rollout(params, reference, &q0, &times, &OdeOptions::default())?;
    let torques: Vec<AffineTorque> = times
        .iter()
        .zip(&nominal)
        .map(|(&t, s)| {
            let r = reference.sample(t);
            AffineTorque::new(
                &dynamics::task_space_model(params, &s.q, &s.qdot),
                &r.pdd,
                &r.pd,
                gains,
            )
        })
        .collect();
    let intervals: Vec<Box3> = torques
        .iter()
        .map(|a| a.hull(&bounds.ep_box, &bounds.ev_box))
        .collect();
    let ok = intervals.iter().all(|iv| {
        iv.iter()
            .zip(&bounds.limits)
            .all(|(u, l)| u.is_subset_of(l))
    });
    Ok(FeasibilityReport {
        times,
        nominal,
        torques,
        intervals,
        limits: bounds.limits,
        ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::reference::PolylineReference;

    #[test]
    fn zero_boxes_collapse_to_nominal() {
        let p = RobotParams::nominal_frictionless();
        let g = Gains::uniform(3.0).unwrap();
        let b = TorqueBounds::symmetric(50.0, Vec3::zeros(), Vec3::zeros()).unwrap();
        let rep = torque_feasibility(&p, &PolylineReference::corridor(), &g, &b, 0.5).unwrap();
        for (a, iv) in rep.torques.iter().zip(&rep.intervals) {
            for (v, u) in iv.iter().zip(a.u_traj.iter()) {
                assert_eq!((v.lo(), v.hi()), (*u, *u));
            }
        }
        assert!(rep.ok);
    }

    #[test]
    fn tight_limits_are_reported() {
        let p = RobotParams::nominal();
        let g = Gains::uniform(3.0).unwrap();
        let b = TorqueBounds::symmetric(0.1, Vec3::repeat(0.01), Vec3::repeat(0.05)).unwrap();
        let rep = torque_feasibility(&p, &PolylineReference::corridor(), &g, &b, 0.5).unwrap();
        assert!(!rep.ok);
        assert!(!rep.violations().is_empty());
    }

    #[test]
    fn box_must_contain_zero() {
        let i = Interval::new(0.1, 0.2).unwrap();
        let z = Interval::point(0.0);
        assert!(TorqueBounds::new([z; 3], [i, z, z], [z; 3]).is_err());
    }

    #[test]
    fn sampled_torques_stay_inside() {
        let p = RobotParams::nominal();
        let g = Gains::uniform(3.0).unwrap();
        let r = PolylineReference::corridor();
        let b = TorqueBounds::default();
        let mut rep = torque_feasibility(&p, &r, &g, &b, 1.0).unwrap();
        assert_eq!(
            rep.sample_check(&p, &r, &g, &b, 500, 3, Execution::Sequential),
            0
        );
        // collapsing the intervals must be caught
        for (iv, a) in rep.intervals.iter_mut().zip(&rep.torques) {
            *iv = std::array::from_fn(|i| Interval::point(a.u_traj[i]));
        }
        assert!(rep.sample_check(&p, &r, &g, &b, 50, 3, Execution::Sequential) > 0);
    }
}
