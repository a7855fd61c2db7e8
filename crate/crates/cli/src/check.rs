//! `check-torques`: interval torque bounds along a scenario's reference.

use std::time::Instant;

use otbot::control::{torque_feasibility, TorqueBounds};
use otbot::model::Vec3;
use otbot::par::Execution;

use crate::control::{load_or_generate_plan, scenario_reference, setup};
use crate::failure::{input, numeric, CliResult, Failure, Kind};
use crate::output::{integrator_json, Manifest, OutDir};
use crate::scenario::Mode;
use crate::{seed_override, CheckArgs};

pub fn run(args: &CheckArgs) -> CliResult<()> {
    let started = Instant::now();
    let mut s = setup(&args.scenario, &args.params, &args.gains)?;
    if !(args.limit > 0.0 && args.ep >= 0.0 && args.ev >= 0.0 && args.dt > 0.0) {
        return Err(Failure::usage(
            "--limit and --dt must be > 0, --ep and --ev >= 0",
        ));
    }
    let bounds = TorqueBounds::symmetric(args.limit, Vec3::repeat(args.ep), Vec3::repeat(args.ev))
        .map_err(input)?;
    let plan = match s.cfg.mode {
        Mode::Plan => Some(load_or_generate_plan(&s, args.plan.as_ref())?.0),
        _ => None,
    };
    let reference = scenario_reference(&s, plan.as_ref())?;
    let rep = torque_feasibility(&s.params, reference.as_ref(), &s.gains, &bounds, args.dt)
        .map_err(numeric)?;
    let seed = seed_override(args.seed, s.cfg.seed)?;
    s.hash.add(
        "check",
        &format!(
            "{} {} {} {} {} {seed}",
            args.limit, args.ep, args.ev, args.dt, args.samples
        ),
    );

    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| s.cfg.output.join("torques"));
    let mut out = OutDir::create(&out_dir)?;
    out.csv("feasibility.csv", |w| rep.write_csv(w))?;
    let peak = rep.peak();
    let mut lines = vec![format!(
        "{} grid times on `{}`; peak bound ({:.3}, {:.3}, {:.3}) N m against ±{} N m; {} grid times outside",
        rep.times.len(),
        s.cfg.name,
        peak[0],
        peak[1],
        peak[2],
        args.limit,
        rep.violations().len()
    )];
    let mut outside = 0;
    if args.samples > 0 {
        outside = rep.sample_check(
            &s.params,
            reference.as_ref(),
            &s.gains,
            &bounds,
            args.samples,
            seed,
            Execution::Parallel,
        );
        lines.push(format!(
            "{} sampled torques per grid time, {outside} outside the intervals",
            args.samples
        ));
    }
    let text = lines.join("\n") + "\n";
    out.write("summary.txt", text.as_bytes())?;
    print!("{text}");
    Manifest {
        command: "check-torques",
        scenario: Some(s.cfg.name.clone()),
        config_hash: s.hash.hex(),
        seeds: if args.samples > 0 { vec![seed] } else { vec![] },
        integrator: integrator_json(s.cfg.ode.rtol, s.cfg.ode.atol, &[("grid_dt", args.dt)]),
        started,
    }
    .finish(&mut out)?;
    if outside > 0 {
        return Err(Failure::new(
            Kind::Check,
            format!("{outside} sampled torques fall outside the interval bounds"),
        ));
    }
    if !rep.ok {
        return Err(Failure::new(
            Kind::Check,
            format!(
                "torque bounds exceed ±{} N m at {} grid times",
                args.limit,
                rep.violations().len()
            ),
        ));
    }
    Ok(())
}
