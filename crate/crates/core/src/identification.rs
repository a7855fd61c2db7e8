//! Grey-box parameter identification by prediction-error minimisation.
//!
//! An [`Experiment`] pairs an input sequence with a recorded sensor trace. A
//! candidate parameter vector is scored by re-simulating the experiment and
//! summing squared differences between predicted and recorded outputs; the
//! trust-region solver in [`crate::lsq`] minimises that score.
//!
//! The three-stage procedure: shaft friction and inertia from single-shaft
//! spin-ups, then chassis mass properties with the platform unloaded, then
//! platform mass properties with everything else fixed.

use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::lsq::{self, Bounds, FitReport, TrustRegionOptions};
use crate::model::{ControlInput, RobotState, Vec6};
use crate::par::{self, Execution};
use crate::params::{ParamId, RobotParams};
use crate::sensors::{self, Channel, SensorModel, SensorRecord, ENCODER_SIGMA};
use crate::simulator::{
    self, fmt_f64, ControlSequence, DisturbanceSchedule, Shaft, SimOptions, SimTrajectory,
};

/// Dynamic model an experiment is simulated with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantModel {
    /// One isolated shaft, `I phi_ddot = u - b phi_dot`.
    Shaft(Shaft),
    /// The full constrained robot.
    Robot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub name: String,
    pub plant: PlantModel,
    pub x0: RobotState,
    pub controls: ControlSequence,
    pub duration: f64,
    pub record: SensorRecord,
    pub sensor: SensorModel,
    /// Outputs entering the loss, a subset of the record's channels.
    pub outputs: Vec<Channel>,
}

/// Simulate `plant` with outputs on the sensor grid.
pub fn simulate_plant(
    plant: PlantModel,
    params: &RobotParams,
    x0: &RobotState,
    controls: &ControlSequence,
    duration: f64,
    sample_rate: f64,
    rtol: f64,
) -> Result<SimTrajectory> {
    let mut opts = SimOptions::with_tol(rtol, rtol * 1e-3);
    opts.output_dt = Some(1.0 / sample_rate);
    let t_end = controls.t0 + duration;
    match plant {
        PlantModel::Shaft(s) => simulator::integrate_shaft(params, s, x0, controls, t_end, &opts),
        PlantModel::Robot => simulator::integrate(
            params,
            x0,
            controls,
            t_end,
            &opts,
            &DisturbanceSchedule::none(),
        ),
    }
}

/// Integration tolerance used to generate recorded data.
pub const TRUTH_RTOL: f64 = 1e-9;

impl Experiment {
    /// Simulate `truth` and record its sensor outputs, noise included.
    pub fn synthesize(
        name: impl Into<String>,
        plant: PlantModel,
        truth: &RobotParams,
        x0: RobotState,
        controls: ControlSequence,
        duration: f64,
        sensor: SensorModel,
    ) -> Result<Self> {
        sensor.validate()?;
        let traj = simulate_plant(
            plant,
            truth,
            &x0,
            &controls,
            duration,
            sensor.sample_rate,
            TRUTH_RTOL,
        )?;
        let record = sensors::sample_sensors(&traj, &sensor, truth, &DisturbanceSchedule::none())?;
        Ok(Experiment {
            name: name.into(),
            plant,
            x0,
            controls,
            duration,
            outputs: record.channels.clone(),
            record,
            sensor,
        })
    }

    /// Restrict the loss to `outputs`.
    pub fn with_outputs(mut self, outputs: Vec<Channel>) -> Result<Self> {
        if outputs.is_empty() || outputs.iter().any(|c| !self.record.channels.contains(c)) {
            return Err(Error::InvalidInput(format!(
                "experiment `{}` does not record all of {:?}",
                self.name, outputs
            )));
        }
        self.outputs = outputs;
        Ok(self)
    }

    /// Noise-free outputs predicted by `params`, one row per sample.
    pub fn predict(&self, params: &RobotParams, rtol: f64) -> Result<Vec<Vec<f64>>> {
        let traj = simulate_plant(
            self.plant,
            params,
            &self.x0,
            &self.controls,
            self.duration,
            self.sensor.sample_rate,
            rtol,
        )?;
        sensors::ideal_outputs(
            &traj,
            params,
            &DisturbanceSchedule::none(),
            &self.record.times,
            &self.outputs,
        )
    }

    /// Recorded values of the selected outputs, flattened sample by sample.
    pub fn measured(&self) -> Vec<f64> {
        let idx: Vec<usize> = self
            .outputs
            .iter()
            .map(|c| {
                self.record
                    .channels
                    .iter()
                    .position(|x| x == c)
                    .expect("checked in with_outputs")
            })
            .collect();
        self.record
            .outputs
            .iter()
            .flat_map(|row| idx.iter().map(move |&j| row[j]))
            .collect()
    }

    /// Expected loss of the true parameters: samples x outputs x sigma^2.
    pub fn noise_floor(&self) -> f64 {
        (self.record.len() * self.outputs.len()) as f64 * self.sensor.sigma.powi(2)
    }

    /// Residual vector `predicted - measured`.
    pub fn residuals(&self, params: &RobotParams, rtol: f64) -> Result<Vec<f64>> {
        let pred = self.predict(params, rtol)?;
        Ok(pred
            .into_iter()
            .flatten()
            .zip(self.measured())
            .map(|(p, m)| p - m)
            .collect())
    }

    /// CSV with time, then measured and predicted columns for each output.
    pub fn write_fit_csv<W: Write>(&self, params: &RobotParams, w: W) -> Result<()> {
        let pred = self.predict(params, TRUTH_RTOL)?;
        let meas = self.measured();
        let m = self.outputs.len();
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        for c in &self.outputs {
            header.push(format!("{}_measured", c.name()));
            header.push(format!("{}_predicted", c.name()));
        }
        wr.write_record(&header)?;
        for (k, t) in self.record.times.iter().enumerate() {
            let mut row = vec![fmt_f64(*t)];
            for j in 0..m {
                row.push(fmt_f64(meas[k * m + j]));
                row.push(fmt_f64(pred[k][j]));
            }
            wr.write_record(&row)?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Right-wheel spin-up: 6 N m for 0.5 s, encoder at 100 Hz.
pub fn wheel_experiment(truth: &RobotParams, sigma: f64, seed: u64) -> Result<Experiment> {
    let u = ControlSequence::constant(ControlInput::new(6.0, 0.0, 0.0), 0.0, 0.01, 0.5)?;
    Experiment::synthesize(
        "wheel-spin",
        PlantModel::Shaft(Shaft::RightWheel),
        truth,
        RobotState::at_rest(Vec6::zeros()),
        u,
        0.5,
        SensorModel::encoder(Shaft::RightWheel, sigma, seed),
    )
}

/// Platform spin-up: 6 N m for 1.5 s, encoder at 100 Hz.
pub fn platform_spin_experiment(truth: &RobotParams, sigma: f64, seed: u64) -> Result<Experiment> {
    let u = ControlSequence::constant(ControlInput::new(0.0, 0.0, 6.0), 0.0, 0.01, 1.5)?;
    Experiment::synthesize(
        "platform-spin",
        PlantModel::Shaft(Shaft::Pivot),
        truth,
        RobotState::at_rest(Vec6::zeros()),
        u,
        1.5,
        SensorModel::encoder(Shaft::Pivot, sigma, seed),
    )
}

/// Torques applied to all three motors in the chassis and platform steps.
pub const EXCITATION: ControlInput = ControlInput {
    tau_r: 6.0,
    tau_l: -10.0,
    tau_p: 6.0,
};

/// Constant excitation of the full robot from rest, IMU at 100 Hz.
pub fn excitation_experiment(
    name: &str,
    truth: &RobotParams,
    duration: f64,
    sigma: f64,
    seed: u64,
) -> Result<Experiment> {
    let u = ControlSequence::constant(EXCITATION, 0.0, 0.01, duration)?;
    let mut sensor = SensorModel::imu(seed);
    sensor.sigma = sigma;
    Experiment::synthesize(
        name,
        PlantModel::Robot,
        truth,
        RobotState::at_rest(Vec6::zeros()),
        u,
        duration,
        sensor,
    )
}

/// Search box for one parameter.
pub fn param_bounds(id: ParamId) -> (f64, f64) {
    match id {
        ParamId::Mc | ParamId::Mp => (1e-3, 1e4),
        ParamId::Ic | ParamId::Ip | ParamId::Ia => (1e-6, 1e4),
        ParamId::Bw | ParamId::Bp => (0.0, 1e3),
        ParamId::XB | ParamId::YB | ParamId::XF | ParamId::YF => (-1.0, 1.0),
        ParamId::L1 | ParamId::L2 | ParamId::R => (1e-3, 10.0),
    }
}

pub fn bounds_for(ids: &[ParamId]) -> Bounds {
    let (lo, hi) = ids.iter().map(|&id| param_bounds(id)).unzip();
    Bounds { lo, hi }
}

fn assemble(fixed: &RobotParams, ids: &[ParamId], values: &[f64]) -> RobotParams {
    let mut p = *fixed;
    for (&id, &v) in ids.iter().zip(values) {
        p.set(id, v);
    }
    p
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionError {
    /// Sum of squared residuals; `+inf` when the simulation failed.
    pub epsilon: f64,
    pub residuals: Vec<f64>,
    pub diagnostic: Option<String>,
}

/// Loss of a candidate over one experiment.
pub fn prediction_error(
    ids: &[ParamId],
    values: &[f64],
    fixed: &RobotParams,
    exp: &Experiment,
    rtol: f64,
) -> PredictionError {
    let params = assemble(fixed, ids, values);
    match params.validate().and_then(|_| exp.residuals(&params, rtol)) {
        Ok(r) => PredictionError {
            epsilon: r.iter().map(|v| v * v).sum(),
            residuals: r,
            diagnostic: None,
        },
        Err(e) => PredictionError {
            epsilon: f64::INFINITY,
            residuals: vec![],
            diagnostic: Some(e.to_string()),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentOptions {
    pub solver: TrustRegionOptions,
    /// Integration tolerance during the main fit.
    pub fit_rtol: f64,
    /// Tighter tolerance for the closing refinement.
    pub polish_rtol: f64,
    pub polish_iters: usize,
}

impl Default for IdentOptions {
    fn default() -> Self {
        IdentOptions {
            solver: TrustRegionOptions::default(),
            fit_rtol: 1e-8,
            polish_rtol: 1e-10,
            polish_iters: 5,
        }
    }
}

impl IdentOptions {
    pub fn with_exec(mut self, exec: Execution) -> Self {
        self.solver.exec = exec;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEstimate {
    pub ids: Vec<ParamId>,
    pub values: Vec<f64>,
    pub loss: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: lsq::Termination,
    pub loss_history: Vec<f64>,
    /// Condition number of the residual Jacobian at the estimate.
    pub condition: f64,
}

impl ParamEstimate {
    pub fn get(&self, id: ParamId) -> Option<f64> {
        self.ids
            .iter()
            .position(|x| *x == id)
            .map(|i| self.values[i])
    }

    pub fn apply(&self, params: &RobotParams) -> RobotParams {
        assemble(params, &self.ids, &self.values)
    }

    pub fn abs_errors(&self, truth: &RobotParams) -> Vec<f64> {
        self.ids
            .iter()
            .zip(&self.values)
            .map(|(&id, v)| (v - truth.get(id)).abs())
            .collect()
    }
}

impl fmt::Display for ParamEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (id, v) in self.ids.iter().zip(&self.values) {
            write!(f, "{id} = {v:.6}  ")?;
        }
        write!(
            f,
            "(loss {:.4e}, {} iterations, {})",
            self.loss,
            self.iterations,
            if self.converged {
                "converged"
            } else {
                "not converged"
            }
        )
    }
}

/// Fit `ids` jointly over `experiments`, all other parameters from `fixed`.
pub fn identify(
    ids: &[ParamId],
    guess: &[f64],
    fixed: &RobotParams,
    experiments: &[&Experiment],
    opts: &IdentOptions,
) -> Result<ParamEstimate> {
    if ids.len() != guess.len() || ids.is_empty() {
        return Err(Error::Fit(
            "parameter list and guess differ in length".into(),
        ));
    }
    let bounds = bounds_for(ids);
    let residual_fn = |rtol: f64| {
        move |v: &[f64]| -> Result<Vec<f64>> {
            let params = assemble(fixed, ids, v);
            params.validate()?;
            let mut out = Vec::new();
            for e in experiments {
                out.extend(e.residuals(&params, rtol)?);
            }
            Ok(out)
        }
    };
    let main = lsq::fit_trust_region(residual_fn(opts.fit_rtol), guess, &bounds, &opts.solver)?;
    let polish_opts = TrustRegionOptions {
        max_iter: opts.polish_iters,
        ..opts.solver
    };
    let polish: FitReport = lsq::fit_trust_region(
        residual_fn(opts.polish_rtol),
        &main.params,
        &bounds,
        &polish_opts,
    )?;
    let mut history = main.loss_history.clone();
    history.extend(polish.loss_history.iter().skip(1));
    Ok(ParamEstimate {
        ids: ids.to_vec(),
        values: polish.params.clone(),
        loss: polish.loss,
        iterations: main.iterations + polish.iterations,
        converged: main.converged() || polish.converged(),
        termination: if polish.converged() {
            polish.termination
        } else {
            main.termination
        },
        loss_history: history,
        condition: lsq::condition_number(&polish.jacobian),
    })
}

/// Starting values for the shaft fits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasicGuess {
    pub bw: f64,
    pub ia: f64,
    pub bp: f64,
    pub ip0: f64,
}

impl Default for BasicGuess {
    fn default() -> Self {
        BasicGuess {
            bw: 0.09,
            ia: 0.01,
            bp: 0.12,
            ip0: 1.11,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasicEstimate {
    pub ia: f64,
    pub bw: f64,
    pub ip0: f64,
    pub bp: f64,
    pub wheel: ParamEstimate,
    pub platform: ParamEstimate,
}

/// Wheel `(Ia, bw)` and unloaded platform `(Ip0, bp)` from two spin-ups.
/// Both wheels are taken to be identical.
pub fn identify_basic(
    wheel_exp: &Experiment,
    platform_exp: &Experiment,
    guess: &BasicGuess,
    base: &RobotParams,
    opts: &IdentOptions,
) -> Result<BasicEstimate> {
    let wheel = identify(
        &[ParamId::Ia, ParamId::Bw],
        &[guess.ia, guess.bw],
        base,
        &[wheel_exp],
        opts,
    )?;
    let platform = identify(
        &[ParamId::Ip, ParamId::Bp],
        &[guess.ip0, guess.bp],
        base,
        &[platform_exp],
        opts,
    )?;
    Ok(BasicEstimate {
        ia: wheel.values[0],
        bw: wheel.values[1],
        ip0: platform.values[0],
        bp: platform.values[1],
        wheel,
        platform,
    })
}

pub const CHASSIS_IDS: [ParamId; 4] = [ParamId::Mc, ParamId::Ic, ParamId::XB, ParamId::YB];
pub const PLATFORM_IDS: [ParamId; 4] = [ParamId::Mp, ParamId::Ip, ParamId::XF, ParamId::YF];

/// `(mc, Ic, xB, yB)` with the platform unloaded and everything else in `known`.
pub fn identify_chassis(
    exp: &Experiment,
    known: &RobotParams,
    guess: [f64; 4],
    opts: &IdentOptions,
) -> Result<ParamEstimate> {
    identify(&CHASSIS_IDS, &guess, known, &[exp], opts)
}

/// `(mp, Ip, xF, yF)` with the chassis and shafts fixed from `known`.
pub fn identify_platform(
    exp: &Experiment,
    known: &RobotParams,
    guess: [f64; 4],
    opts: &IdentOptions,
) -> Result<ParamEstimate> {
    identify(&PLATFORM_IDS, &guess, known, &[exp], opts)
}

/// Largest load mass the platform guesses range over [kg].
pub const MAX_LOAD: f64 = 500.0;
/// Largest load offset from the pivot, per axis [m].
pub const MAX_OFFSET: f64 = 0.45;

/// Platform guess for a load deviation fraction `delta` of the extreme case.
/// The inertia follows from the parallel-axis theorem about the shifted
/// centre of mass.
pub fn platform_guess(delta: f64, unloaded: &RobotParams) -> [f64; 4] {
    let mp = unloaded.mp + delta * MAX_LOAD;
    let off = delta * MAX_OFFSET;
    let ip = unloaded.ip + mp * 2.0 * off * off;
    [mp, ip, off, off]
}

/// Where a parameter held fixed during a step came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Constant,
    Step(u8),
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Constant => f.write_str("constant"),
            Source::Step(k) => write!(f, "step {k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Robot with the platform unloaded (steps 1 and 2 data).
    pub truth_unloaded: RobotParams,
    /// Robot in its working configuration (step 3 data).
    pub truth_working: RobotParams,
    pub basic_guess: BasicGuess,
    pub chassis_guess: [f64; 4],
    pub platform_guess: [f64; 4],
    pub encoder_sigma: f64,
    pub imu_sigma: f64,
    pub chassis_duration: f64,
    pub platform_duration: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let nominal = RobotParams::nominal();
        PipelineConfig {
            truth_unloaded: nominal,
            truth_working: nominal,
            basic_guess: BasicGuess::default(),
            chassis_guess: [54.57, 0.65, -0.07, 0.25],
            platform_guess: [146.95, 5.94, 0.11, 0.11],
            encoder_sigma: ENCODER_SIGMA,
            imu_sigma: sensors::sigma_imu(sensors::IMU_NOISE_DENSITY, sensors::DEFAULT_SAMPLE_RATE),
            chassis_duration: 3.0,
            platform_duration: 1.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub estimate: ParamEstimate,
    /// Parameters held fixed and where each value came from.
    pub provenance: Vec<(ParamId, Source)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentPipelineResult {
    pub step1: BasicEstimate,
    pub step1_provenance: Vec<(ParamId, Source)>,
    pub step2: StepResult,
    pub step3: StepResult,
    pub experiments: Vec<Experiment>,
    /// Final identified parameter set.
    pub params: RobotParams,
}

fn provenance(fitted: &[ParamId], from_steps: &[(ParamId, u8)]) -> Vec<(ParamId, Source)> {
    ParamId::ALL
        .iter()
        .filter(|id| !fitted.contains(id))
        .map(|&id| {
            let src = from_steps
                .iter()
                .find(|(x, _)| *x == id)
                .map_or(Source::Constant, |(_, k)| Source::Step(*k));
            (id, src)
        })
        .collect()
}

pub fn run_step1(
    cfg: &PipelineConfig,
    opts: &IdentOptions,
) -> Result<(BasicEstimate, Vec<Experiment>)> {
    let wheel = wheel_experiment(&cfg.truth_unloaded, cfg.encoder_sigma, cfg.seed)?;
    let plat = platform_spin_experiment(
        &cfg.truth_unloaded,
        cfg.encoder_sigma,
        cfg.seed.wrapping_add(1),
    )?;
    let est = identify_basic(&wheel, &plat, &cfg.basic_guess, &cfg.truth_unloaded, opts)?;
    Ok((est, vec![wheel, plat]))
}

/// Known values for step 2: geometry and unloaded platform mass as
/// constants, shaft parameters from step 1.
pub fn step2_known(cfg: &PipelineConfig, basic: &BasicEstimate) -> RobotParams {
    RobotParams {
        ia: basic.ia,
        bw: basic.bw,
        ip: basic.ip0,
        bp: basic.bp,
        x_f: 0.0,
        y_f: 0.0,
        ..cfg.truth_unloaded
    }
}

pub fn run_step2(
    cfg: &PipelineConfig,
    basic: &BasicEstimate,
    opts: &IdentOptions,
) -> Result<(StepResult, Experiment)> {
    let exp = excitation_experiment(
        "chassis-excitation",
        &cfg.truth_unloaded,
        cfg.chassis_duration,
        cfg.imu_sigma,
        cfg.seed.wrapping_add(2),
    )?;
    let known = step2_known(cfg, basic);
    let estimate = identify_chassis(&exp, &known, cfg.chassis_guess, opts)?;
    let prov = provenance(
        &CHASSIS_IDS,
        &[
            (ParamId::Ia, 1),
            (ParamId::Bw, 1),
            (ParamId::Ip, 1),
            (ParamId::Bp, 1),
        ],
    );
    Ok((
        StepResult {
            estimate,
            provenance: prov,
        },
        exp,
    ))
}

pub fn run_step3(
    cfg: &PipelineConfig,
    known: &RobotParams,
    opts: &IdentOptions,
) -> Result<(StepResult, Experiment)> {
    let exp = excitation_experiment(
        "platform-excitation",
        &cfg.truth_working,
        cfg.platform_duration,
        cfg.imu_sigma,
        cfg.seed.wrapping_add(3),
    )?;
    let estimate = identify_platform(&exp, known, cfg.platform_guess, opts)?;
    let prov = provenance(
        &PLATFORM_IDS,
        &[
            (ParamId::Ia, 1),
            (ParamId::Bw, 1),
            (ParamId::Bp, 1),
            (ParamId::Mc, 2),
            (ParamId::Ic, 2),
            (ParamId::XB, 2),
            (ParamId::YB, 2),
        ],
    );
    Ok((
        StepResult {
            estimate,
            provenance: prov,
        },
        exp,
    ))
}

/// All three steps, each using only constants and earlier estimates.
pub fn run_pipeline(cfg: &PipelineConfig, opts: &IdentOptions) -> Result<IdentPipelineResult> {
    let (step1, mut experiments) = run_step1(cfg, opts)?;
    let (step2, exp2) = run_step2(cfg, &step1, opts)?;
    let known3 = step2.estimate.apply(&step2_known(cfg, &step1));
    let (step3, exp3) = run_step3(cfg, &known3, opts)?;
    let params = step3.estimate.apply(&known3);
    experiments.push(exp2);
    experiments.push(exp3);
    Ok(IdentPipelineResult {
        step1_provenance: provenance(&[ParamId::Ia, ParamId::Bw, ParamId::Ip, ParamId::Bp], &[]),
        step1,
        step2,
        step3,
        experiments,
        params,
    })
}

/// A fit counts as having found the global basin when its loss is within
/// this factor of the noise floor; a spurious local minimum sits far above.
pub const BASIN_LOSS_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub deviation: f64,
    pub seed: u64,
    /// |error| on (mp, Ip, xF, yF).
    pub errors: [f64; 4],
    /// Solver converged with a loss consistent with noise alone.
    pub converged: bool,
}

/// Platform identification from guesses at increasing distance from the truth.
///
/// Every (deviation, seed) cell draws its own noise and runs independently;
/// a failed cell is recorded with infinite errors instead of aborting.
pub fn sensitivity_sweep(
    deviations: &[f64],
    seeds: &[u64],
    truth: &RobotParams,
    known: &RobotParams,
    duration: f64,
    sigma: f64,
    opts: &IdentOptions,
) -> Vec<SweepRow> {
    let cells: Vec<(f64, u64)> = deviations
        .iter()
        .flat_map(|&d| seeds.iter().map(move |&s| (d, s)))
        .collect();
    par::map_slice(opts.solver.exec, &cells, |&(deviation, seed)| {
        let fit = excitation_experiment("platform-excitation", truth, duration, sigma, seed)
            .and_then(|exp| {
                let est = identify_platform(&exp, known, platform_guess(deviation, truth), opts)?;
                Ok((est, exp.noise_floor()))
            });
        match fit {
            Ok((est, floor)) => {
                let e = est.abs_errors(truth);
                SweepRow {
                    deviation,
                    seed,
                    errors: [e[0], e[1], e[2], e[3]],
                    converged: est.converged && est.loss <= BASIN_LOSS_FACTOR * floor + 1e-12,
                }
            }
            Err(e) => {
                log::warn!("sweep cell deviation={deviation} seed={seed} failed: {e}");
                SweepRow {
                    deviation,
                    seed,
                    errors: [f64::INFINITY; 4],
                    converged: false,
                }
            }
        }
    })
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "deviation",
        "seed",
        "abs_err_mp",
        "abs_err_Ip",
        "abs_err_xF",
        "abs_err_yF",
        "converged",
    ])?;
    for r in rows {
        let mut rec = vec![fmt_f64(r.deviation), r.seed.to_string()];
        rec.extend(r.errors.iter().map(|v| fmt_f64(*v)));
        rec.push(r.converged.to_string());
        wr.write_record(&rec)?;
    }
    wr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_candidate_has_zero_loss() {
        let p = RobotParams::nominal();
        let exp = wheel_experiment(&p, 0.0, 1).unwrap();
        let pe = prediction_error(
            &[ParamId::Ia, ParamId::Bw],
            &[p.ia, p.bw],
            &p,
            &exp,
            TRUTH_RTOL,
        );
        assert!(pe.epsilon <= 1e-16, "{}", pe.epsilon);
        assert_eq!(pe.residuals.len(), 51);
    }

    #[test]
    fn invalid_candidate_gives_infinite_loss() {
        let p = RobotParams::nominal();
        let exp = wheel_experiment(&p, 0.0, 1).unwrap();
        let pe = prediction_error(&[ParamId::Ia], &[-1.0], &p, &exp, TRUTH_RTOL);
        assert_eq!(pe.epsilon, f64::INFINITY);
        assert!(pe.diagnostic.is_some());
    }

    #[test]
    fn steiner_guess() {
        let g = platform_guess(0.25, &RobotParams::nominal());
        assert!((g[0] - 146.95).abs() < 1e-9);
        assert!((g[1] - 5.94).abs() < 5e-3, "{}", g[1]);
        assert!((g[2] - 0.1125).abs() < 1e-12 && g[2] == g[3]);
        assert_eq!(
            platform_guess(0.0, &RobotParams::nominal()),
            [21.95, 2.22, 0.0, 0.0]
        );
    }

    #[test]
    fn provenance_lists_fixed_parameters() {
        let pr = provenance(&PLATFORM_IDS, &[(ParamId::Mc, 2)]);
        assert_eq!(pr.len(), 10);
        assert!(pr.contains(&(ParamId::Mc, Source::Step(2))));
        assert!(pr.contains(&(ParamId::L1, Source::Constant)));
        assert!(!pr.iter().any(|(id, _)| *id == ParamId::Mp));
    }

    #[test]
    fn noise_free_wheel_fit_is_exact() {
        let p = RobotParams::nominal();
        let exp = wheel_experiment(&p, 0.0, 1).unwrap();
        let est = identify(
            &[ParamId::Ia, ParamId::Bw],
            &[0.01, 0.09],
            &p,
            &[&exp],
            &IdentOptions::default(),
        )
        .unwrap();
        assert!(est.converged);
        assert!((est.values[0] - p.ia).abs() < 1e-9, "{:?}", est.values);
        assert!((est.values[1] - p.bw).abs() < 1e-9, "{:?}", est.values);
    }
}
