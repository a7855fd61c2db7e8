//! Integrator accuracy, zero-order hold, drift and sensor determinism.

use otbot::identification::EXCITATION;
use otbot::model::{self, Vec6};
use otbot::sensors::{sample_sensors, SensorModel};
use otbot::simulator::{
    integrate, ControlSequence, DisturbanceSchedule, SimOptions, SimTrajectory,
};
use otbot::{ControlInput, RobotParams, RobotState};

fn excitation(dt: f64, duration: f64) -> ControlSequence {
    ControlSequence::constant(EXCITATION, 0.0, dt, duration).unwrap()
}

fn run(params: &RobotParams, controls: &ControlSequence, t_end: f64, rtol: f64) -> SimTrajectory {
    let opts = SimOptions::with_tol(rtol, rtol * 1e-3);
    integrate(
        params,
        &RobotState::at_rest(Vec6::zeros()),
        controls,
        t_end,
        &opts,
        &DisturbanceSchedule::none(),
    )
    .unwrap()
}

fn end_error(a: &SimTrajectory, b: &SimTrajectory) -> f64 {
    (a.last().to_vector() - b.last().to_vector()).amax()
}

#[test]
fn error_tracks_tolerance() {
    let p = RobotParams::nominal();
    // one held sample: no cuts, so the step size is set by the error control alone
    let u = excitation(3.0, 3.0);
    let reference = run(&p, &u, 3.0, 1e-12);
    let errs: Vec<f64> = [1e-6, 1e-7, 1e-8, 1e-9]
        .iter()
        .map(|&tol| end_error(&run(&p, &u, 3.0, tol), &reference))
        .collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((8.0..=40.0).contains(&ratio), "errors {errs:?}");
    }
}

#[test]
fn zoh_is_exact_under_oversampling() {
    let p = RobotParams::nominal();
    // a varying input so the hold actually matters
    let coarse: Vec<ControlInput> = (0..300)
        .map(|k| {
            let t = k as f64 * 0.01;
            ControlInput::new(
                6.0 * (2.0 * t).sin(),
                -10.0 + 3.0 * t,
                6.0 * (t * 5.0).cos(),
            )
        })
        .collect();
    let fine: Vec<ControlInput> = coarse
        .iter()
        .flat_map(|u| std::iter::repeat_n(*u, 10))
        .collect();
    let a = run(
        &p,
        &ControlSequence::new(0.0, 0.01, coarse).unwrap(),
        3.0,
        1e-10,
    );
    let b = run(
        &p,
        &ControlSequence::new(0.0, 0.001, fine).unwrap(),
        3.0,
        1e-10,
    );
    assert!(end_error(&a, &b) < 1e-8, "{}", end_error(&a, &b));
}

#[test]
fn constraint_and_holonomic_drift_stay_small() {
    let p = RobotParams::nominal();
    let traj = run(&p, &excitation(0.01, 18.0), 18.0, 1e-9);
    let d = traj.drift(&p);
    assert!(d.velocity <= 1e-6 && d.holonomic <= 1e-6, "{d:?}");
    for s in &traj.states {
        assert!((model::constraint_jacobian(&p, &s.q) * s.qdot).amax() <= 1e-6);
    }
}

#[test]
fn excitation_end_pose_regression() {
    let p = RobotParams::nominal();
    let traj = run(&p, &excitation(0.01, 3.0), 3.0, 1e-10);
    let end = traj.last();
    // pivot moves along a curve and the platform turns
    let (x, y, alpha) = (end.q[0], end.q[1], end.q[2]);
    assert!(x.hypot(y) > 0.05, "{x} {y}");
    assert!(alpha.abs() > 0.1);
    let again = run(&p, &excitation(0.01, 3.0), 3.0, 1e-10);
    assert_eq!(again.last(), end);
}

#[test]
fn sensor_records_are_deterministic() {
    let p = RobotParams::nominal();
    let traj = run(&p, &excitation(0.01, 1.0), 1.0, 1e-9);
    let none = DisturbanceSchedule::none();
    let a = sample_sensors(&traj, &SensorModel::imu(7), &p, &none).unwrap();
    let b = sample_sensors(&traj, &SensorModel::imu(7), &p, &none).unwrap();
    let c = sample_sensors(&traj, &SensorModel::imu(8), &p, &none).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.outputs, c.outputs);
    let clean = sample_sensors(&traj, &SensorModel::imu(7).noise_free(), &p, &none).unwrap();
    // noise statistics: unbiased with the configured sigma
    let res: Vec<f64> = a
        .outputs
        .iter()
        .zip(&clean.outputs)
        .flat_map(|(r, c)| r.iter().zip(c).map(|(x, y)| x - y).collect::<Vec<_>>())
        .collect();
    let n = res.len() as f64;
    let mean = res.iter().sum::<f64>() / n;
    let sd = (res.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    let sigma = SensorModel::imu(7).sigma;
    assert!(mean.abs() < 4.0 * sigma / n.sqrt());
    assert!((sd / sigma - 1.0).abs() < 0.1, "{sd} vs {sigma}");
}
