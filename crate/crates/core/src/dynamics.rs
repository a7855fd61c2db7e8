//! Inverse and forward dynamics.
//!
//! Two routes are provided. The multiplier-free route projects the Lagrange
//! equation onto the admissible velocity space with `Delta^T` (which cancels
//! `J^T lambda` and turns `E` into the identity) and is what the simulator and
//! controller use. The conventional route solves the 6x6 `[E, -J^T]` system
//! (inverse) or the 9x9 `[[M, J^T], [J, 0]]` system (forward) and also returns
//! the constraint multipliers; it is kept as an independent check.

use nalgebra::{SMatrix, SVector, Vector2};

use crate::error::{Error, Result};
use crate::model::{self, ControlInput, Mat3, Mat6, RobotState, Vec12, Vec3, Vec6};
use crate::params::RobotParams;

/// Planar force applied at the pivot point, world frame [N].
pub type PlanarForce = Vector2<f64>;

/// Velocities violating `J q_dot = 0` by more than this are flagged.
pub const ADMISSIBILITY_TOL: f64 = 1e-6;

/// Generalized forces acting on the robot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralizedForces {
    /// `E u`
    pub actuation: Vec6,
    /// `E_f q_dot`
    pub friction: Vec6,
    /// `(f_x, f_y, 0, 0, 0, 0)`
    pub disturbance: Vec6,
}

impl GeneralizedForces {
    pub fn new(
        params: &RobotParams,
        qdot: &Vec6,
        u: &ControlInput,
        disturbance: Option<PlanarForce>,
    ) -> Self {
        GeneralizedForces {
            actuation: model::actuation_selector() * u.to_vector(),
            friction: model::friction_matrix(params) * qdot,
            disturbance: disturbance
                .map(|f| disturbance_generalized_force(&f))
                .unwrap_or_else(Vec6::zeros),
        }
    }

    pub fn total(&self) -> Vec6 {
        self.actuation + self.friction + self.disturbance
    }
}

/// Generalized force of a planar force applied at the pivot. The pivot
/// coordinates are the first two entries of `q`, so the force maps straight
/// through.
pub fn disturbance_generalized_force(fp: &PlanarForce) -> Vec6 {
    Vec6::new(fp.x, fp.y, 0.0, 0.0, 0.0, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FwdDynSolution {
    pub qddot: Vec6,
    /// Constraint multipliers; only the conventional route produces them.
    pub lambda: Option<Vec3>,
}

/// Reduced model `Mbar p_ddot + Cbar p_dot = u` in task coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskSpaceModel {
    pub mbar: Mat3,
    pub cbar: Mat3,
}

/// `max |J q_dot|`.
pub fn admissibility_violation(params: &RobotParams, q: &Vec6, qdot: &Vec6) -> f64 {
    (model::constraint_jacobian(params, q) * qdot).amax()
}

/// Multiplier-free inverse dynamics,
/// `u = Delta^T M q_ddot + Delta^T (C - E_f) q_dot`.
///
/// Inputs that violate the velocity constraint are accepted (the optimizer
/// perturbs states numerically) but logged at warn level; the result then has
/// no physical meaning.
pub fn inverse_dynamics(params: &RobotParams, q: &Vec6, qdot: &Vec6, qddot: &Vec6) -> ControlInput {
    let viol = admissibility_violation(params, q, qdot);
    if viol > ADMISSIBILITY_TOL {
        log::warn!("inverse_dynamics: non-admissible velocity, |J q_dot| = {viol:e}");
    }
    let m = model::mass_matrix(params, q);
    let c = model::coriolis_matrix(params, q, qdot);
    let ef = model::friction_matrix(params);
    let (_, delta) = model::lambda_delta(params, q);
    let u = delta.transpose() * (m * qddot + (c - ef) * qdot);
    ControlInput::from_vector(&u)
}

/// Inverse dynamics via `[E, -J^T] (u, lambda) = M q_ddot + (C - E_f) q_dot`.
pub fn inverse_dynamics_conventional(
    params: &RobotParams,
    q: &Vec6,
    qdot: &Vec6,
    qddot: &Vec6,
) -> Result<(ControlInput, Vec3)> {
    let m = model::mass_matrix(params, q);
    let c = model::coriolis_matrix(params, q, qdot);
    let ef = model::friction_matrix(params);
    let tau_id = m * qddot + (c - ef) * qdot;

    let mut a = Mat6::zeros();
    a.fixed_view_mut::<6, 3>(0, 0)
        .copy_from(&model::actuation_selector());
    a.fixed_view_mut::<6, 3>(0, 3)
        .copy_from(&(-model::constraint_jacobian(params, q).transpose()));
    let sol = a
        .lu()
        .solve(&tau_id)
        .ok_or(Error::Singular("inverse_dynamics_conventional"))?;
    let u = Vec3::new(sol[0], sol[1], sol[2]);
    let lambda = Vec3::new(sol[3], sol[4], sol[5]);
    Ok((ControlInput::from_vector(&u), lambda))
}

/// Task-space matrices `Mbar = Delta^T M Lambda` and
/// `Cbar = Delta^T (M Lambda_dot + (C - E_f) Lambda)`.
pub fn task_space_model(params: &RobotParams, q: &Vec6, qdot: &Vec6) -> TaskSpaceModel {
    let m = model::mass_matrix(params, q);
    let c = model::coriolis_matrix(params, q, qdot);
    let ef = model::friction_matrix(params);
    let (lambda, delta) = model::lambda_delta(params, q);
    let lambda_dot = model::lambda_dot(params, q, qdot);
    let dt = delta.transpose();
    TaskSpaceModel {
        mbar: dt * m * lambda,
        cbar: dt * (m * lambda_dot + (c - ef) * lambda),
    }
}

/// Multiplier-free forward dynamics.
///
/// Solves `Mbar p_ddot = u + Delta^T Q_p - Cbar p_dot` and recovers the motor
/// accelerations from the second block row of `K`,
/// `phi_ddot = M_IIK p_ddot + M_IIK_dot p_dot`.
pub fn forward_dynamics(
    params: &RobotParams,
    q: &Vec6,
    qdot: &Vec6,
    u: &ControlInput,
    disturbance: Option<PlanarForce>,
) -> Result<Vec6> {
    let ts = task_space_model(params, q, qdot);
    let pdot = Vec3::new(qdot[0], qdot[1], qdot[2]);
    let mut rhs = u.to_vector() - ts.cbar * pdot;
    if let Some(fp) = disturbance {
        let (_, delta) = model::lambda_delta(params, q);
        rhs += delta.transpose() * disturbance_generalized_force(&fp);
    }
    let pddot = ts
        .mbar
        .lu()
        .solve(&rhs)
        .ok_or(Error::Singular("forward_dynamics"))?;
    let phiddot =
        model::iik_matrix(params, q) * pddot + model::iik_matrix_dot(params, q, qdot) * pdot;
    Ok(Vec6::new(
        pddot[0], pddot[1], pddot[2], phiddot[0], phiddot[1], phiddot[2],
    ))
}

/// Forward dynamics through the 9x9 block system
/// `[[M, J^T], [J, 0]] (q_ddot, lambda) = (E u + (E_f - C) q_dot + Q_p, -J_dot q_dot)`.
pub fn forward_dynamics_conventional(
    params: &RobotParams,
    q: &Vec6,
    qdot: &Vec6,
    u: &ControlInput,
    disturbance: Option<PlanarForce>,
) -> Result<FwdDynSolution> {
    let m = model::mass_matrix(params, q);
    let c = model::coriolis_matrix(params, q, qdot);
    let j = model::constraint_jacobian(params, q);
    let jd = model::jacobian_time_derivative(params, q, qdot);
    let forces = GeneralizedForces::new(params, qdot, u, disturbance);

    let mut a = SMatrix::<f64, 9, 9>::zeros();
    a.fixed_view_mut::<6, 6>(0, 0).copy_from(&m);
    a.fixed_view_mut::<6, 3>(0, 6).copy_from(&j.transpose());
    a.fixed_view_mut::<3, 6>(6, 0).copy_from(&j);

    let mut b = SVector::<f64, 9>::zeros();
    b.fixed_rows_mut::<6>(0)
        .copy_from(&(forces.total() - c * qdot));
    b.fixed_rows_mut::<3>(6).copy_from(&(-jd * qdot));

    let sol = a
        .lu()
        .solve(&b)
        .ok_or(Error::Singular("forward_dynamics_conventional"))?;
    Ok(FwdDynSolution {
        qddot: sol.fixed_rows::<6>(0).into_owned(),
        lambda: Some(sol.fixed_rows::<3>(6).into_owned()),
    })
}

/// `x_dot = f(x, u)` with `x = (q, q_dot)`.
pub fn state_derivative(
    params: &RobotParams,
    x: &RobotState,
    u: &ControlInput,
    disturbance: Option<PlanarForce>,
) -> Result<Vec12> {
    let qddot = forward_dynamics(params, &x.q, &x.qdot, u, disturbance)?;
    Ok(RobotState::new(x.qdot, qddot).to_vector())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample_state(p: &RobotParams) -> RobotState {
        RobotState::from_twist(
            p,
            Vec6::new(0.5, -0.2, 0.8, 3.0, 1.0, -0.4),
            Vec3::new(0.4, -0.7, 0.9),
        )
    }

    #[test]
    fn rest_gives_zero_torque_and_acceleration() {
        let p = RobotParams::nominal();
        let q = Vec6::new(0.0, 0.0, 0.3, 1.0, 2.0, -0.5);
        let z = Vec6::zeros();
        assert_eq!(inverse_dynamics(&p, &q, &z, &z), ControlInput::ZERO);
        let (u, lam) = inverse_dynamics_conventional(&p, &q, &z, &z).unwrap();
        assert_eq!(u.to_vector().amax(), 0.0);
        assert_eq!(lam.amax(), 0.0);
        assert_eq!(
            forward_dynamics(&p, &q, &z, &ControlInput::ZERO, None).unwrap(),
            z
        );
        let sol = forward_dynamics_conventional(&p, &q, &z, &ControlInput::ZERO, None).unwrap();
        assert!(sol.qddot.amax() == 0.0 && sol.lambda.unwrap().amax() == 0.0);
    }

    #[test]
    fn steady_platform_spin_needs_no_torque() {
        let p = RobotParams::nominal_frictionless();
        let w = 1.7;
        let q = Vec6::new(0.0, 0.0, 0.4, 0.0, 0.0, 0.1);
        let qd = Vec6::new(0.0, 0.0, w, 0.0, 0.0, w);
        let u = inverse_dynamics(&p, &q, &qd, &Vec6::zeros());
        assert_relative_eq!(u.to_vector().amax(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn routes_agree_on_sample() {
        let p = RobotParams::nominal();
        let x = sample_state(&p);
        let u = ControlInput::new(3.0, -2.0, 1.5);
        let fast = forward_dynamics(&p, &x.q, &x.qdot, &u, None).unwrap();
        let conv = forward_dynamics_conventional(&p, &x.q, &x.qdot, &u, None).unwrap();
        assert_relative_eq!(fast, conv.qddot, max_relative = 1e-10, epsilon = 1e-12);

        let u_fast = inverse_dynamics(&p, &x.q, &x.qdot, &fast);
        let (u_conv, lam) = inverse_dynamics_conventional(&p, &x.q, &x.qdot, &fast).unwrap();
        assert_relative_eq!(u_fast.to_vector(), u.to_vector(), epsilon = 1e-9);
        assert_relative_eq!(u_conv.to_vector(), u.to_vector(), epsilon = 1e-9);
        assert_relative_eq!(lam, conv.lambda.unwrap(), epsilon = 1e-8);
    }

    #[test]
    fn acceleration_constraint_holds() {
        let p = RobotParams::nominal();
        let x = sample_state(&p);
        let u = ControlInput::new(6.0, -10.0, 6.0);
        let fp = Some(PlanarForce::new(40.0, -25.0));
        let qdd = forward_dynamics(&p, &x.q, &x.qdot, &u, fp).unwrap();
        let j = model::constraint_jacobian(&p, &x.q);
        let jd = model::jacobian_time_derivative(&p, &x.q, &x.qdot);
        assert!((j * qdd + jd * x.qdot).amax() < 1e-12);
    }

    #[test]
    fn chassis_excitation_turns_platform() {
        let p = RobotParams::nominal();
        let q = Vec6::zeros();
        let qdd = forward_dynamics(
            &p,
            &q,
            &Vec6::zeros(),
            &ControlInput::new(6.0, -10.0, 6.0),
            None,
        )
        .unwrap();
        assert!(qdd[2].abs() > 1e-3);
        // unequal wheel torques spin the chassis
        assert!((qdd[2] - qdd[5]).abs() > 1e-3);
    }

    #[test]
    fn task_space_friction_only_at_rest() {
        let p = RobotParams::nominal_frictionless();
        let ts = task_space_model(&p, &Vec6::new(0.0, 0.0, 0.2, 0.0, 0.0, 1.0), &Vec6::zeros());
        assert_eq!(ts.cbar, Mat3::zeros());
        let pf = RobotParams::nominal();
        let ts = task_space_model(&pf, &Vec6::zeros(), &Vec6::zeros());
        assert!(ts.cbar.amax() > 0.0);
    }

    #[test]
    fn task_space_column_at_origin() {
        let p = RobotParams::nominal();
        let q = Vec6::zeros();
        let ts = task_space_model(&p, &q, &Vec6::zeros());
        let u = ts.mbar * Vec3::new(1.0, 0.0, 0.0);
        // pushing straight ahead needs equal wheel torques and no pivot torque
        assert!(u[0] > 1e-6 && (u[0] - u[1]).abs() < 1e-12, "{u}");
        assert!(u[2].abs() < 1e-12, "{u}");
        let qdd = model::lambda_delta(&p, &q).0 * Vec3::new(1.0, 0.0, 0.0);
        let u_id = inverse_dynamics(&p, &q, &Vec6::zeros(), &qdd);
        assert_relative_eq!(u, u_id.to_vector(), epsilon = 1e-12);
    }

    #[test]
    fn state_derivative_structure() {
        let p = RobotParams::nominal();
        let x = sample_state(&p);
        let f = state_derivative(&p, &x, &ControlInput::new(1.0, 2.0, 3.0), None).unwrap();
        assert_eq!(f.fixed_rows::<6>(0).into_owned(), x.qdot);
        let rest = RobotState::at_rest(x.q);
        assert_eq!(
            state_derivative(&p, &rest, &ControlInput::ZERO, None).unwrap(),
            Vec12::zeros()
        );
    }

    #[test]
    fn disturbance_force_is_pivot_force() {
        let f = disturbance_generalized_force(&PlanarForce::new(150.0, 0.0));
        assert_eq!(f, Vec6::new(150.0, 0.0, 0.0, 0.0, 0.0, 0.0));
        assert_eq!(
            disturbance_generalized_force(&PlanarForce::zeros()),
            Vec6::zeros()
        );
    }
}
