//! `simulate`: open-loop runs under held torques.

use std::path::PathBuf;
use std::time::Instant;

use otbot::config::parse_f64_list;
use otbot::model::Vec6;
use otbot::sensors::sample_sensors;
use otbot::simulator::{self, ControlSequence, DisturbanceSchedule, SimOptions};
use otbot::{ControlInput, RobotState};

use crate::failure::{input, numeric, CliResult, Failure};
use crate::output::{integrator_json, ConfigHash, Manifest, OutDir};
use crate::scenario::{load_params, Mode, ScenarioConfig};
use crate::{seed_override, SimulateArgs};

pub fn run(args: &SimulateArgs) -> CliResult<()> {
    let started = Instant::now();
    let cfg = match &args.scenario {
        Some(s) => Some(ScenarioConfig::resolve(s)?),
        None => None,
    };
    if let Some(c) = &cfg {
        if matches!(c.mode, Mode::Controller | Mode::Plan) {
            return Err(Failure::usage(format!(
                "scenario `{}` is a tracking scenario; use `control`",
                c.name
            )));
        }
    }
    let params = match (&args.params, &cfg) {
        (Some(p), _) => load_params(p)?,
        (None, Some(c)) => c.params.load()?,
        (None, None) => otbot::RobotParams::nominal(),
    };
    let torques = match (&args.torques, &cfg) {
        (Some(s), _) => {
            let v = parse_f64_list(s).map_err(|e| Failure::usage(format!("--torques: {e}")))?;
            <[f64; 3]>::try_from(v)
                .map_err(|_| Failure::usage("--torques needs three values `tau_r,tau_l,tau_p`"))?
        }
        (None, Some(c)) => c.torques.expect("validated"),
        (None, None) => return Err(Failure::usage("give --torques or --scenario")),
    };
    let duration = args
        .duration
        .or(cfg.as_ref().and_then(|c| c.horizon))
        .unwrap_or(3.0);
    let dt = args.dt.or(cfg.as_ref().map(|c| c.input_dt)).unwrap_or(0.01);
    if !(duration > 0.0 && dt > 0.0) {
        return Err(Failure::usage("--duration and --dt must be > 0"));
    }
    let mut opts = SimOptions {
        ode: cfg.as_ref().map(|c| c.ode).unwrap_or_default(),
        output_dt: None,
    };
    if let Some(r) = args.rtol {
        opts.ode.rtol = r;
        opts.ode.atol = r * 1e-3;
    }
    let mut sensor = cfg.as_ref().and_then(|c| c.sensor);
    let seed = seed_override(args.seed, cfg.as_ref().map_or(0, |c| c.seed))?;
    if let Some(s) = sensor.as_mut() {
        s.seed = seed;
        opts.output_dt = Some(1.0 / s.sample_rate);
    }
    let disturbances = cfg
        .as_ref()
        .map(|c| c.disturbances.clone())
        .unwrap_or_else(DisturbanceSchedule::none);

    let u = ControlInput::new(torques[0], torques[1], torques[2]);
    let controls = ControlSequence::constant(u, 0.0, dt, duration).map_err(input)?;
    let x0 = RobotState::at_rest(Vec6::zeros());
    let traj = match cfg.as_ref().map(|c| c.mode) {
        Some(Mode::Shaft(shaft)) => {
            simulator::integrate_shaft(&params, shaft, &x0, &controls, duration, &opts)
        }
        _ => simulator::integrate(&params, &x0, &controls, duration, &opts, &disturbances),
    }
    .map_err(numeric)?;

    let out_dir: PathBuf = args
        .out
        .clone()
        .or(cfg.as_ref().map(|c| c.output.clone()))
        .unwrap_or_else(|| PathBuf::from("runs/simulate"));
    let mut out = OutDir::create(&out_dir)?;
    out.csv("trajectory.csv", |w| traj.write_csv(w))?;
    if let Some(s) = &sensor {
        let record = sample_sensors(&traj, s, &params, &disturbances).map_err(numeric)?;
        out.csv("sensors.csv", |w| record.write_csv(w))?;
    }

    let mut hash = ConfigHash::default();
    if let Some(c) = &cfg {
        hash.add("scenario", &c.text);
    }
    hash.add("params", &params.to_ini());
    hash.add(
        "run",
        &format!("{torques:?} {duration:?} {dt:?} {:?} {seed}", opts.ode),
    );
    let end = traj.last();
    println!(
        "{} samples to {}; end pose x = {:.6} m, y = {:.6} m, alpha = {:.6} rad",
        traj.len(),
        out.root().join("trajectory.csv").display(),
        end.q[0],
        end.q[1],
        end.q[2]
    );
    Manifest {
        command: "simulate",
        scenario: cfg.map(|c| c.name),
        config_hash: hash.hex(),
        seeds: if sensor.is_some() { vec![seed] } else { vec![] },
        integrator: integrator_json(opts.ode.rtol, opts.ode.atol, &[("control_dt", dt)]),
        started,
    }
    .finish(&mut out)
}
