//! Closed-form kinematic and inertial model.
//!
//! Configuration `q = (x, y, alpha, phi_r, phi_l, phi_p)`: pivot position,
//! absolute platform heading, right/left wheel angles and pivot angle. The
//! chassis heading is never stored; it is always `theta = alpha - phi_p`.
//! Angles are not wrapped.
//!
//! Every matrix here depends on `q` only through `alpha` and `theta`, so the
//! time derivatives are exact chain-rule expressions in `theta_dot`.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

use crate::params::RobotParams;

pub type Vec3 = Vector3<f64>;
pub type Vec6 = SVector<f64, 6>;
pub type Vec12 = SVector<f64, 12>;
pub type Mat3 = Matrix3<f64>;
pub type Mat6 = SMatrix<f64, 6, 6>;
pub type Mat3x6 = SMatrix<f64, 3, 6>;
pub type Mat6x3 = SMatrix<f64, 6, 3>;

/// Configuration and velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState {
    pub q: Vec6,
    pub qdot: Vec6,
}

impl RobotState {
    pub fn new(q: Vec6, qdot: Vec6) -> Self {
        RobotState { q, qdot }
    }

    pub fn at_rest(q: Vec6) -> Self {
        RobotState {
            q,
            qdot: Vec6::zeros(),
        }
    }

    /// Admissible state with platform twist `pdot`.
    pub fn from_twist(params: &RobotParams, q: Vec6, pdot: Vec3) -> Self {
        let (lambda, _) = lambda_delta(params, &q);
        RobotState {
            q,
            qdot: lambda * pdot,
        }
    }

    pub fn to_vector(&self) -> Vec12 {
        let mut x = Vec12::zeros();
        x.fixed_rows_mut::<6>(0).copy_from(&self.q);
        x.fixed_rows_mut::<6>(6).copy_from(&self.qdot);
        x
    }

    pub fn from_vector(x: &Vec12) -> Self {
        RobotState {
            q: x.fixed_rows::<6>(0).into_owned(),
            qdot: x.fixed_rows::<6>(6).into_owned(),
        }
    }

    /// Task-space pose `(x, y, alpha)`.
    pub fn pose(&self) -> Vec3 {
        self.q.fixed_rows::<3>(0).into_owned()
    }

    /// Platform twist `(x_dot, y_dot, alpha_dot)`.
    pub fn twist(&self) -> Vec3 {
        self.qdot.fixed_rows::<3>(0).into_owned()
    }

    /// Motor angles `(phi_r, phi_l, phi_p)`.
    pub fn motor_angles(&self) -> Vec3 {
        self.q.fixed_rows::<3>(3).into_owned()
    }

    /// Motor speeds `(phi_r_dot, phi_l_dot, phi_p_dot)`.
    pub fn motor_speeds(&self) -> Vec3 {
        self.qdot.fixed_rows::<3>(3).into_owned()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qdot.iter()).all(|v| v.is_finite())
    }
}

/// Motor torques `(tau_r, tau_l, tau_p)` [N m].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    pub tau_r: f64,
    pub tau_l: f64,
    pub tau_p: f64,
}

impl ControlInput {
    pub const ZERO: ControlInput = ControlInput {
        tau_r: 0.0,
        tau_l: 0.0,
        tau_p: 0.0,
    };

    pub fn new(tau_r: f64, tau_l: f64, tau_p: f64) -> Self {
        ControlInput {
            tau_r,
            tau_l,
            tau_p,
        }
    }

    pub fn from_vector(u: &Vec3) -> Self {
        ControlInput::new(u[0], u[1], u[2])
    }

    pub fn to_vector(&self) -> Vec3 {
        Vec3::new(self.tau_r, self.tau_l, self.tau_p)
    }

    pub fn is_finite(&self) -> bool {
        self.tau_r.is_finite() && self.tau_l.is_finite() && self.tau_p.is_finite()
    }

    /// Clamp each torque to `[-limit[i], limit[i]]`.
    pub fn clamped(&self, limit: &Vec3) -> Self {
        let u = self.to_vector();
        ControlInput::from_vector(&Vec3::from_fn(|i, _| u[i].clamp(-limit[i], limit[i])))
    }
}

/// Pose of the wheel-axis midpoint and forward speed of the chassis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChassisPose {
    pub a: f64,
    pub b: f64,
    pub theta: f64,
    pub v: f64,
}

#[inline]
pub fn chassis_heading(q: &Vec6) -> f64 {
    q[2] - q[5]
}

pub fn chassis_pose(params: &RobotParams, state: &RobotState) -> ChassisPose {
    let theta = chassis_heading(&state.q);
    let (s, c) = theta.sin_cos();
    let qd = &state.qdot;
    ChassisPose {
        a: state.q[0] - params.l1 * c,
        b: state.q[1] - params.l1 * s,
        theta,
        v: params.r * (qd[3] + qd[4]) / 2.0,
    }
}

/// Rolling constraint matrix `J(q)` with `J q_dot = 0` for admissible motion.
pub fn constraint_jacobian(params: &RobotParams, q: &Vec6) -> Mat3x6 {
    let (s, c) = chassis_heading(q).sin_cos();
    let RobotParams { l1, l2, r, .. } = *params;
    let k = r / (2.0 * l2);
    #[rustfmt::skip]
    let j = Mat3x6::new(
        1.0, 0.0,  l1 * s, -0.5 * r * c, -0.5 * r * c, -l1 * s,
        0.0, 1.0, -l1 * c, -0.5 * r * s, -0.5 * r * s,  l1 * c,
        0.0, 0.0,  1.0,    -k,            k,           -1.0,
    );
    j
}

/// Time derivative of [`constraint_jacobian`] along `qdot`.
pub fn jacobian_time_derivative(params: &RobotParams, q: &Vec6, qdot: &Vec6) -> Mat3x6 {
    let (s, c) = chassis_heading(q).sin_cos();
    let td = qdot[2] - qdot[5];
    let RobotParams { l1, r, .. } = *params;
    #[rustfmt::skip]
    let jd = Mat3x6::new(
        0.0, 0.0, l1 * c * td,  0.5 * r * s * td,  0.5 * r * s * td, -l1 * c * td,
        0.0, 0.0, l1 * s * td, -0.5 * r * c * td, -0.5 * r * c * td, -l1 * s * td,
        0.0, 0.0, 0.0,          0.0,               0.0,               0.0,
    );
    jd
}

/// Mass matrix `M(q)`.
pub fn mass_matrix(params: &RobotParams, q: &Vec6) -> Mat6 {
    let RobotParams {
        x_b,
        y_b,
        x_f,
        y_f,
        mc,
        mp,
        ic,
        ip,
        ia,
        ..
    } = *params;
    let (sa, ca) = q[2].sin_cos();
    let (st, ct) = chassis_heading(q).sin_cos();

    // chassis and platform first-moment terms
    let gc = mc * (y_b * ct + x_b * st);
    let hc = mc * (x_b * ct - y_b * st);
    let gp = mp * (y_f * ca + x_f * sa);
    let hp = mp * (x_f * ca - y_f * sa);
    let jc = mc * (x_b * x_b + y_b * y_b) + ic;
    let jp = mp * (x_f * x_f + y_f * y_f) + ip;
    let m = mc + mp;

    #[rustfmt::skip]
    let mm = Mat6::new(
        m,          0.0,        -gp - gc,  0.0, 0.0,  gc,
        0.0,        m,           hp + hc,  0.0, 0.0, -hc,
        -gp - gc,   hp + hc,     jc + jp,  0.0, 0.0, -jc,
        0.0,        0.0,         0.0,      ia,  0.0,  0.0,
        0.0,        0.0,         0.0,      0.0, ia,   0.0,
        gc,         -hc,         -jc,      0.0, 0.0,  jc,
    );
    mm
}

/// Coriolis/centrifugal matrix `C(q, q_dot)` (Christoffel form, linear in `q_dot`).
pub fn coriolis_matrix(params: &RobotParams, q: &Vec6, qdot: &Vec6) -> Mat6 {
    let RobotParams {
        x_b,
        y_b,
        x_f,
        y_f,
        mc,
        mp,
        ..
    } = *params;
    let (sa, ca) = q[2].sin_cos();
    let (st, ct) = chassis_heading(q).sin_cos();
    let ad = qdot[2];
    let td = qdot[2] - qdot[5];

    let hc = mc * (x_b * ct - y_b * st);
    let gc = mc * (y_b * ct + x_b * st);
    let hp = mp * (x_f * ca - y_f * sa);
    let gp = mp * (y_f * ca + x_f * sa);

    let mut c = Mat6::zeros();
    c[(0, 2)] = -td * hc - ad * hp;
    c[(0, 5)] = td * hc;
    c[(1, 2)] = -td * gc - ad * gp;
    c[(1, 5)] = td * gc;
    c
}

/// Viscous friction matrix `E_f` with `Q_f = E_f q_dot` (non-positive diagonal).
pub fn friction_matrix(params: &RobotParams) -> Mat6 {
    Mat6::from_diagonal(&Vec6::new(
        0.0, 0.0, 0.0, -params.bw, -params.bw, -params.bp,
    ))
}

/// Actuation selector `E` with `Q_a = E u`.
pub fn actuation_selector() -> Mat6x3 {
    let mut e = Mat6x3::zeros();
    e[(3, 0)] = 1.0;
    e[(4, 1)] = 1.0;
    e[(5, 2)] = 1.0;
    e
}

/// Forward instantaneous kinematics: platform twist from motor speeds.
pub fn fik_matrix(params: &RobotParams, q: &Vec6) -> Mat3 {
    let (s, c) = chassis_heading(q).sin_cos();
    let RobotParams { l1, l2, r, .. } = *params;
    let k = r / (2.0 * l2);
    #[rustfmt::skip]
    let m = Mat3::new(
        l2 * c - l1 * s,  l2 * c + l1 * s, 0.0,
        l1 * c + l2 * s, -l1 * c + l2 * s, 0.0,
        1.0,             -1.0,             2.0 * l2 / r,
    ) * k;
    m
}

/// Inverse instantaneous kinematics, closed form. Exists at every `q` because
/// `det(fik_matrix) = -l1 r^2 / (2 l2)` never vanishes.
pub fn iik_matrix(params: &RobotParams, q: &Vec6) -> Mat3 {
    let (s, c) = chassis_heading(q).sin_cos();
    let RobotParams { l1, l2, r, .. } = *params;
    #[rustfmt::skip]
    let m = Mat3::new(
        l1 * c - l2 * s,  l2 * c + l1 * s, 0.0,
        l1 * c + l2 * s, -l2 * c + l1 * s, 0.0,
        r * s,           -r * c,           r * l1,
    ) / (r * l1);
    m
}

/// Time derivative of [`iik_matrix`] along `qdot`.
pub fn iik_matrix_dot(params: &RobotParams, q: &Vec6, qdot: &Vec6) -> Mat3 {
    let (s, c) = chassis_heading(q).sin_cos();
    let td = qdot[2] - qdot[5];
    let RobotParams { l1, l2, r, .. } = *params;
    #[rustfmt::skip]
    let m = Mat3::new(
        -l1 * s - l2 * c, -l2 * s + l1 * c, 0.0,
        -l1 * s + l2 * c,  l2 * s + l1 * c, 0.0,
        r * c,             r * s,           0.0,
    ) * (td / (r * l1));
    m
}

/// Velocity parameterizations `(Lambda, Delta)`: `q_dot = Lambda p_dot = Delta phi_dot`.
pub fn lambda_delta(params: &RobotParams, q: &Vec6) -> (Mat6x3, Mat6x3) {
    let mut lambda = Mat6x3::zeros();
    lambda.fixed_view_mut::<3, 3>(0, 0).fill_with_identity();
    lambda
        .fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&iik_matrix(params, q));

    let mut delta = Mat6x3::zeros();
    delta
        .fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&fik_matrix(params, q));
    delta.fixed_view_mut::<3, 3>(3, 0).fill_with_identity();
    (lambda, delta)
}

/// Time derivative of `Lambda`: zeros over `d/dt M_IIK`.
pub fn lambda_dot(params: &RobotParams, q: &Vec6, qdot: &Vec6) -> Mat6x3 {
    let mut ld = Mat6x3::zeros();
    ld.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&iik_matrix_dot(params, q, qdot));
    ld
}

/// Left-hand side of the integrated pivot/wheel constraint,
/// `alpha - k phi_r + k phi_l - phi_p - K0` with `k = r / (2 l2)` and `K0`
/// taken from the reference configuration `q0`.
pub fn holonomic_residual(params: &RobotParams, q: &Vec6, q0: &Vec6) -> f64 {
    let k = params.r / (2.0 * params.l2);
    let h = |q: &Vec6| q[2] - k * q[3] + k * q[4] - q[5];
    h(q) - h(q0)
}

/// Total kinetic energy `0.5 q_dot^T M q_dot`.
pub fn kinetic_energy(params: &RobotParams, q: &Vec6, qdot: &Vec6) -> f64 {
    0.5 * qdot.dot(&(mass_matrix(params, q) * qdot))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn q_with(alpha: f64, phi_p: f64) -> Vec6 {
        Vec6::new(0.3, -1.2, alpha, 4.0, -7.0, phi_p)
    }

    #[test]
    fn jacobian_nominal_at_zero() {
        let j = constraint_jacobian(&RobotParams::nominal(), &Vec6::zeros());
        let row3: Vec<f64> = j.row(2).iter().copied().collect();
        assert_eq!(row3, vec![0.0, 0.0, 1.0, -0.25, 0.25, -1.0]);
    }

    #[test]
    fn jacobian_aligned_heading() {
        let p = RobotParams::nominal();
        let j = constraint_jacobian(&p, &q_with(0.7, 0.7));
        assert_eq!(j[(0, 2)], 0.0);
        assert_eq!(j[(0, 3)], -p.r / 2.0);
    }

    #[test]
    fn jacobian_dot_vanishes_without_heading_rate() {
        let p = RobotParams::nominal();
        let q = q_with(0.4, -1.1);
        assert_eq!(
            jacobian_time_derivative(&p, &q, &Vec6::zeros()),
            Mat3x6::zeros()
        );
        let qd = Vec6::new(1.0, 2.0, 0.5, -3.0, 4.0, 0.5);
        assert_eq!(jacobian_time_derivative(&p, &q, &qd), Mat3x6::zeros());
    }

    #[test]
    fn mass_matrix_nominal_entries() {
        let p = RobotParams::nominal();
        let m = mass_matrix(&p, &q_with(0.3, 1.0));
        assert_relative_eq!(m[(0, 0)], 131.09, epsilon = 1e-12);
        assert_eq!(m[(1, 1)], m[(0, 0)]);
        assert_eq!(m[(3, 3)], p.ia);
        assert_eq!(m[(4, 4)], p.ia);
        assert_eq!(m, m.transpose());
    }

    #[test]
    fn mass_matrix_without_offsets() {
        let p = RobotParams {
            x_b: 0.0,
            y_b: 0.0,
            x_f: 0.0,
            y_f: 0.0,
            ..RobotParams::nominal()
        };
        let m = mass_matrix(&p, &q_with(1.3, -0.2));
        for k in 2..6 {
            assert_eq!(m[(0, k)], 0.0);
            assert_eq!(m[(1, k)], 0.0);
        }
        assert_eq!(m[(2, 5)], -p.ic);
    }

    #[test]
    fn coriolis_zero_at_rest() {
        let p = RobotParams::nominal();
        assert_eq!(
            coriolis_matrix(&p, &q_with(0.2, 0.9), &Vec6::zeros()),
            Mat6::zeros()
        );
    }

    #[test]
    fn fik_determinant_nominal() {
        let p = RobotParams::nominal();
        let det = fik_matrix(&p, &q_with(2.0, -0.3)).determinant();
        assert_relative_eq!(det, -6.25e-3, epsilon = 1e-15);
    }

    #[test]
    fn kinematic_read_offs_at_aligned_heading() {
        let p = RobotParams::nominal();
        let q = q_with(-0.6, -0.6);
        let f = fik_matrix(&p, &q);
        assert_eq!(f[(2, 2)], 1.0);
        assert_eq!(f[(0, 2)], 0.0);
        let i = iik_matrix(&p, &q);
        assert_eq!(i[(2, 0)], 0.0);
        assert_eq!(i[(2, 2)], 1.0);
    }

    #[test]
    fn pure_platform_spin_maps_to_unit_pivot_rate() {
        let p = RobotParams::nominal();
        let phid = iik_matrix(&p, &Vec6::zeros()) * Vec3::new(0.0, 0.0, 1.0);
        assert_eq!(phid[2], 1.0);
        // wheels stay still: the chassis does not need to move
        assert_eq!(phid[0], 0.0);
        assert_eq!(phid[1], 0.0);
    }

    #[test]
    fn holonomic_residual_read_offs() {
        let p = RobotParams::nominal();
        let q0 = q_with(0.1, 0.2);
        assert_eq!(holonomic_residual(&p, &q0, &q0), 0.0);
        let mut q = q0;
        q[2] += 1.0;
        q[5] += 1.0;
        assert_relative_eq!(holonomic_residual(&p, &q, &q0), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn chassis_pose_relations() {
        let p = RobotParams::nominal();
        let s = RobotState::new(q_with(1.0, 0.25), Vec6::new(0.0, 0.0, 0.0, 2.0, 4.0, 0.0));
        let cp = chassis_pose(&p, &s);
        assert_eq!(cp.theta, 0.75);
        assert_relative_eq!(cp.v, 0.3, epsilon = 1e-15);
        assert_relative_eq!((cp.a - s.q[0]).hypot(cp.b - s.q[1]), p.l1, epsilon = 1e-15);
    }

    #[test]
    fn clamp_limits_each_motor() {
        let u = ControlInput::new(80.0, -80.0, 3.0).clamped(&Vec3::new(50.0, 50.0, 50.0));
        assert_eq!(u, ControlInput::new(50.0, -50.0, 3.0));
    }
}
