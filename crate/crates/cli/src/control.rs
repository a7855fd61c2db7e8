//! `control`: computed-torque tracking scenarios.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use otbot::control::plan::{position_drift, scale_inertia};
use otbot::control::scenarios::{
    disturbance_recovery, start_at_rest, start_on_reference, window_transients,
};
use otbot::control::{
    closed_loop_simulate, generate_plan, open_loop_replay, torque_feasibility,
    track_planned_trajectory, ClosedLoopOptions, ClosedLoopResult, Gains, ReferenceTrajectory,
    SampledReference, TorqueBounds,
};
use otbot::simulator::{fmt_f64, SimTrajectory};
use otbot::RobotParams;

use crate::failure::{input, numeric, CliResult, Failure, Kind};
use crate::output::{integrator_json, ConfigHash, Manifest, OutDir};
use crate::scenario::{load_gains, load_params, Mode, ScenarioConfig, Start};
use crate::ControlArgs;

/// Grid period of the torque-feasibility report [s].
pub const FEASIBILITY_DT: f64 = 0.05;
/// A transient counts as settled within the settling time plus this margin.
const SETTLE_MARGIN: f64 = 1.1;

/// Closed-loop error bounds on a planned trajectory: xy position [m], xy
/// velocity [m/s], alpha [rad], alpha rate [rad/s].
const PLAN_BOUNDS: [f64; 4] = [1e-3, 1e-2, 1e-3, 5e-3];

struct Checks(String, bool);

impl Checks {
    fn add(&mut self, ok: bool, name: &str, detail: String) {
        let _ = writeln!(
            self.0,
            "{} {name}: {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
        self.1 &= ok;
    }
}

fn list(v: &[f64]) -> String {
    let s: Vec<String> = v.iter().map(|x| format!("{x:.2}")).collect();
    format!("[{}]", s.join(", "))
}

/// Parameters and gains after command-line overrides, hashed as used.
pub struct Setup {
    pub cfg: ScenarioConfig,
    pub params: RobotParams,
    pub gains: Gains,
    pub hash: ConfigHash,
}

pub fn setup(
    scenario: &str,
    params: &Option<PathBuf>,
    gains: &Option<PathBuf>,
) -> CliResult<Setup> {
    let cfg = ScenarioConfig::resolve(scenario)?;
    if !matches!(cfg.mode, Mode::Controller | Mode::Plan) {
        return Err(Failure::usage(format!(
            "scenario `{}` is not a tracking scenario; use `simulate`",
            cfg.name
        )));
    }
    let params = match params {
        Some(p) => load_params(p)?,
        None => cfg.params.load()?,
    };
    let gains = match gains {
        Some(g) => load_gains(g)?,
        None => cfg.gains()?,
    };
    let mut hash = ConfigHash::default();
    hash.add("scenario", &cfg.text);
    hash.add("params", &params.to_ini());
    hash.add("gains", &format!("{:?}", gains.tstab.as_slice()));
    Ok(Setup {
        cfg,
        params,
        gains,
        hash,
    })
}

/// The plan from `file`, or a fresh one generated as the scenario says.
pub fn load_or_generate_plan(
    s: &Setup,
    file: Option<&PathBuf>,
) -> CliResult<(SimTrajectory, bool)> {
    match file.or(s.cfg.plan_file.as_ref()) {
        Some(path) => {
            let plan = SimTrajectory::load_csv(path)
                .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
            Ok((plan, false))
        }
        None => {
            let reference = s
                .cfg
                .reference
                .expect("plan scenarios carry a reference")
                .build(f64::INFINITY)?;
            let light = scale_inertia(&s.params, s.cfg.action_scale);
            let plan = generate_plan(&s.params, &light, reference.as_ref(), s.cfg.plan_dt)
                .map_err(numeric)?;
            Ok((plan, true))
        }
    }
}

/// The reference a tracking scenario follows.
pub fn scenario_reference(
    s: &Setup,
    plan: Option<&SimTrajectory>,
) -> CliResult<Box<dyn ReferenceTrajectory>> {
    match plan {
        Some(p) => Ok(Box::new(
            SampledReference::from_trajectory(p).map_err(input)?,
        )),
        None => s
            .cfg
            .reference
            .expect("validated")
            .build(s.cfg.horizon.expect("validated")),
    }
}

pub fn run(args: &ControlArgs) -> CliResult<()> {
    let started = Instant::now();
    let mut s = setup(&args.scenario, &args.params, &args.gains)?;
    let cfg = &s.cfg;
    let opts = ClosedLoopOptions {
        control_rate: cfg.control_rate,
        ode: cfg.ode,
        ..Default::default()
    };
    let mut out = OutDir::create(&args.out.clone().unwrap_or_else(|| cfg.output.clone()))?;
    let mut checks = Checks(format!("scenario {}\n", cfg.name), true);
    let settle_limit = SETTLE_MARGIN * s.gains.tstab.max();

    let (res, plan): (ClosedLoopResult, Option<SimTrajectory>) = if cfg.mode == Mode::Plan {
        let (plan, generated) = load_or_generate_plan(&s, args.plan.as_ref())?;
        if generated {
            out.csv("plan.csv", |w| plan.write_csv(w))?;
        } else {
            s.hash.add("plan", &format!("{:?}", plan.times.len()));
        }
        let replay = open_loop_replay(&s.params, &plan, &cfg.ode).map_err(numeric)?;
        let drift = position_drift(&plan, &replay);
        let mut text = String::from("t,drift\n");
        for (t, d) in plan.times.iter().zip(&drift) {
            let _ = writeln!(text, "{},{}", fmt_f64(*t), fmt_f64(*d));
        }
        out.write("replay_drift.csv", text.as_bytes())?;
        out.csv("replay.csv", |w| replay.write_csv(w))?;
        let res = track_planned_trajectory(&s.params, &plan, &s.gains, &opts).map_err(numeric)?;
        let (ep, ev) = res.errors.max_abs();
        let final_drift = drift.last().copied().unwrap_or(0.0);
        let _ = writeln!(
            checks.0,
            "open-loop replay drift at the end: {final_drift:.4} m"
        );
        let got = [ep[0].max(ep[1]), ev[0].max(ev[1]), ep[2], ev[2]];
        let ok = got.iter().zip(&PLAN_BOUNDS).all(|(g, b)| g < b);
        checks.add(
            ok,
            "closed-loop errors",
            format!(
                "xy {:.2e} m, {:.2e} m/s; alpha {:.2e} rad, {:.2e} rad/s (bounds {:?})",
                got[0], got[1], got[2], got[3], PLAN_BOUNDS
            ),
        );
        (res, Some(plan))
    } else {
        let reference = scenario_reference(&s, None)?;
        let x0 = match cfg.start {
            Start::Rest => start_at_rest(reference.as_ref()),
            Start::Reference => start_on_reference(&s.params, reference.as_ref()),
        };
        let horizon = cfg.horizon.expect("validated");
        if cfg.disturbances.pulses.is_empty() {
            let res = closed_loop_simulate(
                &s.params,
                &x0,
                reference.as_ref(),
                &s.gains,
                &opts,
                &cfg.disturbances,
                horizon,
            )
            .map_err(numeric)?;
            let mut cuts = vec![0.0];
            cuts.extend(reference.breakpoints());
            let w = window_transients(&res, &cuts);
            let vel: Vec<f64> = w.iter().map(|w| w.velocity.settle_from_start()).collect();
            let pos: Vec<f64> = w.iter().map(|w| w.position.settle_from_start()).collect();
            let alpha = res
                .errors
                .e_p
                .iter()
                .map(|e| e[2].abs())
                .fold(0.0, f64::max);
            checks.add(
                vel.iter().all(|t| *t <= settle_limit),
                "velocity transients settle",
                format!("{} s per segment (limit {settle_limit:.2} s)", list(&vel)),
            );
            let _ = writeln!(
                checks.0,
                "position settle per segment: {} s; max |e_alpha| {alpha:.2e} rad",
                list(&pos)
            );
            (res, None)
        } else {
            let (res, rec) = disturbance_recovery(
                &s.params,
                &x0,
                reference.as_ref(),
                &s.gains,
                &opts,
                &cfg.disturbances,
                horizon,
            )
            .map_err(numeric)?;
            let pos: Vec<f64> = rec.iter().map(|r| r.position_settle()).collect();
            let vel: Vec<f64> = rec.iter().map(|r| r.velocity_settle()).collect();
            checks.add(
                pos.iter().chain(&vel).all(|t| *t <= settle_limit),
                "recovery after each push",
                format!(
                    "position {} s, velocity {} s (limit {settle_limit:.2} s)",
                    list(&pos),
                    list(&vel)
                ),
            );
            (res, None)
        }
    };

    out.csv("trajectory.csv", |w| res.traj.write_csv(w))?;
    out.csv("errors.csv", |w| res.errors.write_csv(w))?;
    let reference = scenario_reference(&s, plan.as_ref())?;
    let rep = torque_feasibility(
        &s.params,
        reference.as_ref(),
        &s.gains,
        &TorqueBounds::default(),
        FEASIBILITY_DT,
    )
    .map_err(numeric)?;
    out.csv("feasibility.csv", |w| rep.write_csv(w))?;
    let peak = rep.peak();
    checks.add(
        rep.ok,
        "torque feasibility",
        format!(
            "peak bound ({:.2}, {:.2}, {:.2}) N m within ±{} N m; {} grid times outside",
            peak[0],
            peak[1],
            peak[2],
            otbot::control::feasibility::DEFAULT_TORQUE_LIMIT,
            rep.violations().len()
        ),
    );
    let _ = writeln!(
        checks.0,
        "constraint drift: max |J q_dot| {:.1e}, max |holonomic residual| {:.1e}",
        res.drift.velocity, res.drift.holonomic
    );
    out.write("summary.txt", checks.0.as_bytes())?;
    print!("{}", checks.0);

    let scenario = s.cfg.name.clone();
    let seed = s.cfg.seed;
    let passed = checks.1;
    Manifest {
        command: "control",
        scenario: Some(scenario.clone()),
        config_hash: s.hash.hex(),
        seeds: vec![seed],
        integrator: integrator_json(
            opts.ode.rtol,
            opts.ode.atol,
            &[("control_rate_hz", opts.control_rate)],
        ),
        started,
    }
    .finish(&mut out)?;
    if !passed {
        return Err(Failure::new(
            Kind::Check,
            format!("scenario `{scenario}` failed a check, see summary.txt"),
        ));
    }
    Ok(())
}
