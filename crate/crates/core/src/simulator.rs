//! Time-domain simulation under zero-order-hold inputs.
//!
//! The horizon is cut at every event (control sample, disturbance edge, output
//! sample) and each piece is integrated with a frozen input, so the adaptive
//! integrator never straddles a discontinuity.

use std::io::Write;
use std::path::Path;

use nalgebra::SVector;

use crate::dynamics::{self, PlanarForce};
use crate::error::{Error, Result};
use crate::model::{self, ControlInput, RobotState, Vec12, Vec6};
use crate::ode::{self, OdeOptions, OdeStats};
use crate::params::RobotParams;

/// Times closer than this are treated as the same event.
pub const TIME_EPS: f64 = 1e-12;

/// Piecewise-constant input sequence: `u(t) = samples[k]` for `t_k <= t < t_{k+1}`.
///
/// Past the last sample the last value is held.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSequence {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<ControlInput>,
}

impl ControlSequence {
    pub fn new(t0: f64, dt: f64, samples: Vec<ControlInput>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() || !t0.is_finite() {
            return Err(Error::InvalidInput(format!(
                "control period must be > 0, got {dt}"
            )));
        }
        if samples.is_empty() {
            return Err(Error::InvalidInput("empty control sequence".into()));
        }
        if let Some(k) = samples.iter().position(|u| !u.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "control sample {k} is not finite"
            )));
        }
        Ok(ControlSequence { t0, dt, samples })
    }

    /// One held value over `[t0, t0 + duration)` sampled every `dt`.
    pub fn constant(u: ControlInput, t0: f64, dt: f64, duration: f64) -> Result<Self> {
        let n = ((duration / dt).round() as usize).max(1);
        Self::new(t0, dt, vec![u; n])
    }

    /// Sample time `t_k`.
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn index_at(&self, t: f64) -> usize {
        let s = (t - self.t0) / self.dt;
        // snap times that sit on a boundary up to rounding
        let k = (s + 1e-9).floor();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.samples.len() - 1)
        }
    }

    pub fn at(&self, t: f64) -> ControlInput {
        self.samples[self.index_at(t)]
    }

    /// End of the last hold interval.
    pub fn end(&self) -> f64 {
        self.time(self.samples.len())
    }
}

/// A planar force on the pivot, active on `[t_on, t_off)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisturbancePulse {
    pub t_on: f64,
    pub t_off: f64,
    pub force: PlanarForce,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DisturbanceSchedule {
    pub pulses: Vec<DisturbancePulse>,
}

impl DisturbanceSchedule {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(pulses: Vec<DisturbancePulse>) -> Result<Self> {
        for p in &pulses {
            if !(p.t_off > p.t_on) || !p.force.iter().all(|f| f.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "bad disturbance pulse [{}, {})",
                    p.t_on, p.t_off
                )));
            }
        }
        Ok(DisturbanceSchedule { pulses })
    }

    pub fn force_at(&self, t: f64) -> Option<PlanarForce> {
        let mut acc: Option<PlanarForce> = None;
        for p in &self.pulses {
            if t >= p.t_on - TIME_EPS && t < p.t_off - TIME_EPS {
                *acc.get_or_insert_with(PlanarForce::zeros) += p.force;
            }
        }
        acc
    }

    pub fn edges(&self) -> impl Iterator<Item = f64> + '_ {
        self.pulses.iter().flat_map(|p| [p.t_on, p.t_off])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimOptions {
    pub ode: OdeOptions,
    /// Output sample period; `None` uses the control period.
    pub output_dt: Option<f64>,
}

impl SimOptions {
    pub fn with_tol(rtol: f64, atol: f64) -> Self {
        SimOptions {
            ode: OdeOptions::with_tol(rtol, atol),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<RobotState>,
    /// Input held from each sample time onwards.
    pub inputs: Vec<ControlInput>,
    pub stats: OdeStats,
}

/// Largest `|J(q) q_dot|` and holonomic residual seen along a trajectory.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Drift {
    pub velocity: f64,
    pub holonomic: f64,
}

impl SimTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &RobotState {
        self.states
            .last()
            .expect("trajectory has at least one sample")
    }

    /// Index of the sample at time `t`, if there is one.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let i = self.times.partition_point(|&s| s < t - 1e-9);
        (i < self.times.len() && (self.times[i] - t).abs() <= 1e-9).then_some(i)
    }

    pub fn drift(&self, params: &RobotParams) -> Drift {
        let q0 = self.states[0].q;
        self.states.iter().fold(Drift::default(), |d, s| Drift {
            velocity: d
                .velocity
                .max((model::constraint_jacobian(params, &s.q) * s.qdot).amax()),
            holonomic: d
                .holonomic
                .max(model::holonomic_residual(params, &s.q, &q0).abs()),
        })
    }

    pub const CSV_HEADER: [&'static str; 16] = [
        "t", "x", "y", "alpha", "phi_r", "phi_l", "phi_p", "dx", "dy", "dalpha", "dphi_r",
        "dphi_l", "dphi_p", "tau_r", "tau_l", "tau_p",
    ];

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(Self::CSV_HEADER)?;
        for i in 0..self.len() {
            let s = &self.states[i];
            let u = self.inputs[i];
            let mut row = Vec::with_capacity(16);
            row.push(fmt_f64(self.times[i]));
            row.extend(s.q.iter().chain(s.qdot.iter()).map(|v| fmt_f64(*v)));
            row.extend([u.tau_r, u.tau_l, u.tau_p].map(fmt_f64));
            wr.write_record(&row)?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Parse the format written by [`SimTrajectory::write_csv`].
    /// Errors name the offending data row (1-based, header excluded).
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(r);
        let header = rd.headers()?.clone();
        if header.len() != 16 || header.iter().zip(Self::CSV_HEADER).any(|(a, b)| a != b) {
            return Err(Error::Plan {
                row: 0,
                msg: format!("expected header `{}`", Self::CSV_HEADER.join(",")),
            });
        }
        let mut traj = SimTrajectory {
            times: vec![],
            states: vec![],
            inputs: vec![],
            stats: OdeStats::default(),
        };
        for (i, rec) in rd.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| Error::Plan {
                row,
                msg: e.to_string(),
            })?;
            if rec.len() != 16 {
                return Err(Error::Plan {
                    row,
                    msg: format!("expected 16 fields, found {}", rec.len()),
                });
            }
            let mut v = [0.0; 16];
            for (j, f) in rec.iter().enumerate() {
                v[j] = f
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::Plan {
                        row,
                        msg: format!(
                            "column `{}`: `{f}` is not a finite number",
                            Self::CSV_HEADER[j]
                        ),
                    })?;
            }
            if let Some(&prev) = traj.times.last() {
                if v[0] <= prev {
                    return Err(Error::Plan {
                        row,
                        msg: format!("time {} does not increase", v[0]),
                    });
                }
            }
            traj.times.push(v[0]);
            traj.states.push(RobotState::new(
                Vec6::from_row_slice(&v[1..7]),
                Vec6::from_row_slice(&v[7..13]),
            ));
            traj.inputs.push(ControlInput::new(v[13], v[14], v[15]));
        }
        if traj.is_empty() {
            return Err(Error::Plan {
                row: 1,
                msg: "no data rows".into(),
            });
        }
        Ok(traj)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Merge event times, dropping near-duplicates. Input need not be sorted.
pub(crate) fn event_grid(mut ts: Vec<f64>, t0: f64, t_end: f64) -> Vec<f64> {
    ts.retain(|t| *t > t0 + TIME_EPS && *t < t_end - TIME_EPS);
    ts.push(t0);
    ts.push(t_end);
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|a, b| (*a - *b).abs() <= TIME_EPS);
    ts
}

fn uniform_grid(t0: f64, dt: f64, t_end: f64) -> Vec<f64> {
    let n = ((t_end - t0) / dt + 1e-9).floor() as usize;
    (0..=n).map(|k| t0 + k as f64 * dt).collect()
}

/// Integrate `x' = f(x, u(t), fp(t))` from `x0` over `[controls.t0, t_end]`.
///
/// Samples are stored at every control boundary (or every `opts.output_dt`)
/// and at `t_end`.
pub fn integrate(
    params: &RobotParams,
    x0: &RobotState,
    controls: &ControlSequence,
    t_end: f64,
    opts: &SimOptions,
    disturbances: &DisturbanceSchedule,
) -> Result<SimTrajectory> {
    params.validate()?;
    if !x0.is_finite() {
        return Err(Error::InvalidInput("initial state is not finite".into()));
    }
    if !(opts.ode.rtol > 0.0 && opts.ode.atol > 0.0) {
        return Err(Error::InvalidInput("tolerances must be > 0".into()));
    }
    let t0 = controls.t0;
    if !(t_end > t0) {
        return Err(Error::InvalidInput(format!(
            "t_end = {t_end} is not after t0 = {t0}"
        )));
    }
    let out_dt = opts.output_dt.unwrap_or(controls.dt);
    let outputs = uniform_grid(t0, out_dt, t_end);
    let mut events: Vec<f64> = uniform_grid(t0, controls.dt, t_end);
    events.extend(outputs.iter().copied());
    events.extend(disturbances.edges());
    let events = event_grid(events, t0, t_end);

    let mut traj = SimTrajectory {
        times: Vec::with_capacity(outputs.len() + 1),
        states: Vec::with_capacity(outputs.len() + 1),
        inputs: Vec::with_capacity(outputs.len() + 1),
        stats: OdeStats::default(),
    };
    let mut next_out = 0usize;
    let mut record = |traj: &mut SimTrajectory, t: f64, y: &Vec12, force: bool| {
        while next_out < outputs.len() && outputs[next_out] < t - TIME_EPS {
            next_out += 1;
        }
        let hit = next_out < outputs.len() && (outputs[next_out] - t).abs() <= TIME_EPS;
        if hit || force {
            if hit {
                next_out += 1;
            }
            traj.times.push(t);
            traj.states.push(RobotState::from_vector(y));
            traj.inputs.push(controls.at(t));
        }
    };

    let mut y = x0.to_vector();
    let mut h = 0.0;
    record(&mut traj, t0, &y, true);
    for w in events.windows(2) {
        let (ta, tb) = (w[0], w[1]);
        let u = controls.at(ta);
        let fp = disturbances.force_at(ta);
        y = ode::integrate(
            |_t, x: &Vec12| dynamics::state_derivative(params, &RobotState::from_vector(x), &u, fp),
            ta,
            y,
            tb,
            &opts.ode,
            &mut h,
            &mut traj.stats,
            |_, _| Ok(()),
        )?;
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { t: tb });
        }
        let last = tb >= t_end - TIME_EPS;
        let force = last && traj.times.last() != Some(&tb);
        record(&mut traj, tb, &y, force);
    }
    Ok(traj)
}

/// Which single shaft a reduced one-degree-of-freedom model describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shaft {
    RightWheel,
    LeftWheel,
    Pivot,
}

impl Shaft {
    /// Position of the shaft angle in `q`.
    pub fn q_index(self) -> usize {
        match self {
            Shaft::RightWheel => 3,
            Shaft::LeftWheel => 4,
            Shaft::Pivot => 5,
        }
    }

    pub fn torque(self, u: &ControlInput) -> f64 {
        match self {
            Shaft::RightWheel => u.tau_r,
            Shaft::LeftWheel => u.tau_l,
            Shaft::Pivot => u.tau_p,
        }
    }

    /// `(inertia, friction)` of this shaft in `params`.
    pub fn coefficients(self, params: &RobotParams) -> (f64, f64) {
        match self {
            Shaft::RightWheel | Shaft::LeftWheel => (params.ia, params.bw),
            Shaft::Pivot => (params.ip, params.bp),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Shaft::RightWheel => "right-wheel",
            Shaft::LeftWheel => "left-wheel",
            Shaft::Pivot => "pivot",
        }
    }
}

/// Spin a single isolated shaft, `I phi_ddot = u - b phi_dot`.
///
/// The result is laid out as a [`SimTrajectory`] with only that shaft's angle
/// and rate populated, so the sensor models apply unchanged.
pub fn integrate_shaft(
    params: &RobotParams,
    shaft: Shaft,
    x0: &RobotState,
    controls: &ControlSequence,
    t_end: f64,
    opts: &SimOptions,
) -> Result<SimTrajectory> {
    let (inertia, friction) = shaft.coefficients(params);
    if !(inertia > 0.0) || !(friction >= 0.0) {
        return Err(Error::InvalidParam {
            name: "shaft",
            value: inertia,
            reason: "inertia must be > 0 and friction >= 0",
        });
    }
    let t0 = controls.t0;
    if !(t_end > t0) {
        return Err(Error::InvalidInput(format!(
            "t_end = {t_end} is not after t0 = {t0}"
        )));
    }
    let idx = shaft.q_index();
    let out_dt = opts.output_dt.unwrap_or(controls.dt);
    let outputs = uniform_grid(t0, out_dt, t_end);
    let mut events = uniform_grid(t0, controls.dt, t_end);
    events.extend(outputs.iter().copied());
    let events = event_grid(events, t0, t_end);

    let mut traj = SimTrajectory {
        times: vec![],
        states: vec![],
        inputs: vec![],
        stats: OdeStats::default(),
    };
    let mut y = SVector::<f64, 2>::new(x0.q[idx], x0.qdot[idx]);
    let push = |traj: &mut SimTrajectory, t: f64, y: &SVector<f64, 2>| {
        let mut s = RobotState::at_rest(Vec6::zeros());
        s.q[idx] = y[0];
        s.qdot[idx] = y[1];
        traj.times.push(t);
        traj.states.push(s);
        traj.inputs.push(controls.at(t));
    };
    push(&mut traj, t0, &y);
    let mut h = 0.0;
    let mut next_out = 1usize;
    for w in events.windows(2) {
        let (ta, tb) = (w[0], w[1]);
        let tau = shaft.torque(&controls.at(ta));
        y = ode::integrate(
            |_t, x: &SVector<f64, 2>| {
                Ok(SVector::<f64, 2>::new(
                    x[1],
                    (tau - friction * x[1]) / inertia,
                ))
            },
            ta,
            y,
            tb,
            &opts.ode,
            &mut h,
            &mut traj.stats,
            |_, _| Ok(()),
        )?;
        while next_out < outputs.len() && outputs[next_out] < tb - TIME_EPS {
            next_out += 1;
        }
        let hit = next_out < outputs.len() && (outputs[next_out] - tb).abs() <= TIME_EPS;
        if hit {
            next_out += 1;
        }
        if hit || tb >= t_end - TIME_EPS && traj.times.last() != Some(&tb) {
            push(&mut traj, tb, &y);
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rest_stays_at_rest() {
        let p = RobotParams::nominal();
        let x0 = RobotState::at_rest(Vec6::new(1.0, 2.0, 0.3, 0.0, 0.5, -0.1));
        let u = ControlSequence::constant(ControlInput::ZERO, 0.0, 0.01, 1.0).unwrap();
        let tr = integrate(
            &p,
            &x0,
            &u,
            1.0,
            &SimOptions::default(),
            &DisturbanceSchedule::none(),
        )
        .unwrap();
        assert_eq!(tr.len(), 101);
        assert_eq!(*tr.last(), x0);
    }

    #[test]
    fn zoh_lookup() {
        let u = ControlSequence::new(
            0.0,
            0.1,
            vec![
                ControlInput::new(1.0, 0.0, 0.0),
                ControlInput::new(2.0, 0.0, 0.0),
            ],
        )
        .unwrap();
        assert_eq!(u.at(0.0).tau_r, 1.0);
        assert_eq!(u.at(0.0999).tau_r, 1.0);
        assert_eq!(u.at(0.1).tau_r, 2.0);
        assert_eq!(u.at(0.3).tau_r, 2.0);
        assert_eq!(u.at(-1.0).tau_r, 1.0);
        assert!(ControlSequence::new(0.0, 0.0, vec![ControlInput::ZERO]).is_err());
    }

    #[test]
    fn disturbance_window_is_half_open() {
        let d = DisturbanceSchedule::new(vec![DisturbancePulse {
            t_on: 4.0,
            t_off: 5.0,
            force: PlanarForce::new(0.0, -150.0),
        }])
        .unwrap();
        assert!(d.force_at(3.99).is_none());
        assert_eq!(d.force_at(4.0).unwrap().y, -150.0);
        assert!(d.force_at(5.0).is_none());
    }

    #[test]
    fn shaft_matches_closed_form() {
        let p = RobotParams::nominal();
        let u =
            ControlSequence::constant(ControlInput::new(0.0, 0.0, 6.0), 0.0, 0.01, 1.5).unwrap();
        let tr = integrate_shaft(
            &p,
            Shaft::Pivot,
            &RobotState::at_rest(Vec6::zeros()),
            &u,
            1.5,
            &SimOptions::default(),
        )
        .unwrap();
        for (t, s) in tr.times.iter().zip(&tr.states) {
            let exact = 6.0 / p.bp * (1.0 - (-p.bp * t / p.ip).exp());
            assert!(
                (s.qdot[5] - exact).abs() <= 1e-8 * exact.abs().max(1e-3),
                "t={t}"
            );
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let p = RobotParams::nominal();
        let u =
            ControlSequence::constant(ControlInput::new(6.0, -10.0, 6.0), 0.0, 0.05, 0.5).unwrap();
        let tr = integrate(
            &p,
            &RobotState::at_rest(Vec6::zeros()),
            &u,
            0.5,
            &SimOptions::default(),
            &DisturbanceSchedule::none(),
        )
        .unwrap();
        let mut buf = vec![];
        tr.write_csv(&mut buf).unwrap();
        let back = SimTrajectory::read_csv(&buf[..]).unwrap();
        assert_eq!(back.times, tr.times);
        assert_eq!(back.states, tr.states);
        assert_eq!(back.inputs, tr.inputs);
    }

    #[test]
    fn csv_errors_name_the_row() {
        let text = format!(
            "{}\n0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0\n0.1,0,0,x,0,0,0,0,0,0,0,0,0,0,0,0\n",
            SimTrajectory::CSV_HEADER.join(",")
        );
        let e = SimTrajectory::read_csv(text.as_bytes())
            .unwrap_err()
            .to_string();
        assert!(e.starts_with("plan file row 2"), "{e}");
    }
}
