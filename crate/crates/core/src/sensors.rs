//! Encoder and IMU models with additive white Gaussian noise.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dynamics;
use crate::error::{Error, Result};
use crate::model::{ControlInput, RobotState};
use crate::params::RobotParams;
use crate::simulator::{fmt_f64, DisturbanceSchedule, Shaft, SimTrajectory};

/// Standard deviation of an IMU channel from its noise density and sample rate.
pub fn sigma_imu(noise_density: f64, sample_rate: f64) -> f64 {
    noise_density * sample_rate.sqrt()
}

/// Noise density of the simulated IMU [unit/sqrt(Hz)].
pub const IMU_NOISE_DENSITY: f64 = 1.37e-3;
/// Encoder rate noise used in the basic-parameter experiments [rad/s].
pub const ENCODER_SIGMA: f64 = 0.01;
pub const DEFAULT_SAMPLE_RATE: f64 = 100.0;

/// One scalar sensor output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    /// Shaft rate from an encoder [rad/s].
    Encoder(Shaft),
    /// Pivot acceleration along the platform x axis [m/s^2].
    AccelX,
    /// Pivot acceleration along the platform y axis [m/s^2].
    AccelY,
    /// Platform yaw rate [rad/s].
    Gyro,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Encoder(Shaft::RightWheel) => "enc_r",
            Channel::Encoder(Shaft::LeftWheel) => "enc_l",
            Channel::Encoder(Shaft::Pivot) => "enc_p",
            Channel::AccelX => "acc_x",
            Channel::AccelY => "acc_y",
            Channel::Gyro => "gyro",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensorKind {
    Encoder(Shaft),
    Imu,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    pub kind: SensorKind,
    pub sample_rate: f64,
    /// Same deviation on every channel of the sensor.
    pub sigma: f64,
    pub seed: u64,
}

impl SensorModel {
    pub fn encoder(shaft: Shaft, sigma: f64, seed: u64) -> Self {
        SensorModel {
            kind: SensorKind::Encoder(shaft),
            sample_rate: DEFAULT_SAMPLE_RATE,
            sigma,
            seed,
        }
    }

    /// IMU at 100 Hz with the deviation implied by [`IMU_NOISE_DENSITY`].
    pub fn imu(seed: u64) -> Self {
        SensorModel {
            kind: SensorKind::Imu,
            sample_rate: DEFAULT_SAMPLE_RATE,
            sigma: sigma_imu(IMU_NOISE_DENSITY, DEFAULT_SAMPLE_RATE),
            seed,
        }
    }

    pub fn noise_free(mut self) -> Self {
        self.sigma = 0.0;
        self
    }

    pub fn channels(&self) -> Vec<Channel> {
        match self.kind {
            SensorKind::Encoder(s) => vec![Channel::Encoder(s)],
            SensorKind::Imu => vec![Channel::AccelX, Channel::AccelY, Channel::Gyro],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidInput(format!(
                "sensor sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        if !(self.sample_rate > 0.0) || !self.sample_rate.is_finite() {
            return Err(Error::InvalidInput(format!(
                "sensor sample rate must be > 0, got {}",
                self.sample_rate
            )));
        }
        Ok(())
    }

    /// Sample instants covering `[t0, t0 + duration]`.
    pub fn sample_times(&self, t0: f64, duration: f64) -> Vec<f64> {
        let n = (duration * self.sample_rate + 1e-9).floor() as usize;
        (0..=n).map(|k| t0 + k as f64 / self.sample_rate).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorRecord {
    pub channels: Vec<Channel>,
    pub times: Vec<f64>,
    /// One row per sample, one entry per channel.
    pub outputs: Vec<Vec<f64>>,
}

impl SensorRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Column of one channel.
    pub fn channel(&self, c: Channel) -> Option<Vec<f64>> {
        let j = self.channels.iter().position(|x| *x == c)?;
        Some(self.outputs.iter().map(|row| row[j]).collect())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t"];
        header.extend(self.channels.iter().map(|c| c.name()));
        wr.write_record(&header)?;
        for (t, row) in self.times.iter().zip(&self.outputs) {
            let mut rec = vec![fmt_f64(*t)];
            rec.extend(row.iter().map(|v| fmt_f64(*v)));
            wr.write_record(&rec)?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Noise-free value of `channel` for the state `s` under input `u`.
///
/// Accelerometer readings come from the forward dynamics at that instant, with
/// the world-frame pivot acceleration rotated by `-alpha` into the platform
/// frame.
pub fn channel_value(
    params: &RobotParams,
    s: &RobotState,
    u: &ControlInput,
    disturbance: &DisturbanceSchedule,
    t: f64,
    channel: Channel,
    qddot_cache: &mut Option<crate::model::Vec6>,
) -> Result<f64> {
    Ok(match channel {
        Channel::Encoder(sh) => s.qdot[sh.q_index()],
        Channel::Gyro => s.qdot[2],
        Channel::AccelX | Channel::AccelY => {
            let qdd = match qddot_cache {
                Some(v) => *v,
                None => {
                    let v = dynamics::forward_dynamics(
                        params,
                        &s.q,
                        &s.qdot,
                        u,
                        disturbance.force_at(t),
                    )?;
                    *qddot_cache = Some(v);
                    v
                }
            };
            let (sa, ca) = s.q[2].sin_cos();
            if channel == Channel::AccelX {
                ca * qdd[0] + sa * qdd[1]
            } else {
                -sa * qdd[0] + ca * qdd[1]
            }
        }
    })
}

/// Ground-truth outputs on the sensor grid, without noise.
pub fn ideal_outputs(
    traj: &SimTrajectory,
    params: &RobotParams,
    disturbance: &DisturbanceSchedule,
    times: &[f64],
    channels: &[Channel],
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(times.len());
    let mut cursor = 0usize;
    for &t in times {
        let i = traj.times[cursor..]
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9)
            .map(|i| i + cursor)
            .ok_or_else(|| {
                Error::InvalidInput(format!("trajectory has no sample at sensor time {t}"))
            })?;
        cursor = i;
        let mut cache = None;
        let row = channels
            .iter()
            .map(|&c| {
                channel_value(
                    params,
                    &traj.states[i],
                    &traj.inputs[i],
                    disturbance,
                    t,
                    c,
                    &mut cache,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(row);
    }
    Ok(out)
}

/// Read the sensor along a simulated trajectory.
///
/// The trajectory must hold a sample at each sensor instant (simulate with an
/// output period equal to, or dividing, the sensor period).
pub fn sample_sensors(
    traj: &SimTrajectory,
    model: &SensorModel,
    params: &RobotParams,
    disturbance: &DisturbanceSchedule,
) -> Result<SensorRecord> {
    model.validate()?;
    let t0 = traj.times[0];
    let duration = traj.times[traj.len() - 1] - t0;
    let times = model.sample_times(t0, duration);
    let channels = model.channels();
    let mut outputs = ideal_outputs(traj, params, disturbance, &times, &channels)?;
    add_noise(&mut outputs, model.sigma, model.seed);
    Ok(SensorRecord {
        channels,
        times,
        outputs,
    })
}

/// Add i.i.d. `N(0, sigma^2)` noise, sample by sample then channel by channel.
pub fn add_noise(rows: &mut [Vec<f64>], sigma: f64, seed: u64) {
    if sigma == 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    for row in rows {
        for v in row {
            *v += normal.sample(&mut rng);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Vec6;
    use crate::simulator::{integrate, ControlSequence, SimOptions};

    #[test]
    fn sigma_formula() {
        assert!((sigma_imu(1.37e-3, 100.0) - 13.7e-3).abs() < 1e-15);
        assert_eq!(sigma_imu(0.0, 100.0), 0.0);
        assert_eq!(sigma_imu(0.25, 1.0), 0.25);
    }

    fn run(seed: u64, sigma: f64) -> SensorRecord {
        let p = RobotParams::nominal();
        let u =
            ControlSequence::constant(ControlInput::new(6.0, -10.0, 6.0), 0.0, 0.01, 0.5).unwrap();
        let tr = integrate(
            &p,
            &RobotState::at_rest(Vec6::zeros()),
            &u,
            0.5,
            &SimOptions::default(),
            &DisturbanceSchedule::none(),
        )
        .unwrap();
        let mut m = SensorModel::imu(seed);
        m.sigma = sigma;
        sample_sensors(&tr, &m, &p, &DisturbanceSchedule::none()).unwrap()
    }

    #[test]
    fn record_size_and_determinism() {
        let a = run(7, 0.01);
        assert_eq!(a.len(), 51);
        assert_eq!(a.outputs[0].len(), 3);
        assert_eq!(a, run(7, 0.01));
        assert_ne!(a, run(8, 0.01));
    }

    #[test]
    fn zero_sigma_is_ground_truth() {
        let a = run(1, 0.0);
        let b = run(2, 0.0);
        assert_eq!(a, b);
        // at rest with torque applied the gyro reads exactly zero at t = 0
        assert_eq!(a.outputs[0][2], 0.0);
    }

    #[test]
    fn accelerometer_rotation() {
        // world acceleration (1, 0) seen from a platform at alpha = pi/2
        let p = RobotParams::nominal();
        let s = RobotState::at_rest(Vec6::new(
            0.0,
            0.0,
            std::f64::consts::FRAC_PI_2,
            0.0,
            0.0,
            0.0,
        ));
        let mut cache = Some(Vec6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0));
        let none = DisturbanceSchedule::none();
        let ax = channel_value(
            &p,
            &s,
            &ControlInput::ZERO,
            &none,
            0.0,
            Channel::AccelX,
            &mut cache,
        )
        .unwrap();
        let ay = channel_value(
            &p,
            &s,
            &ControlInput::ZERO,
            &none,
            0.0,
            Channel::AccelY,
            &mut cache,
        )
        .unwrap();
        assert!(ax.abs() < 1e-15);
        assert!((ay + 1.0).abs() < 1e-15);
    }
}
