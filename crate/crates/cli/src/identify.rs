//! `identify`: the three-step identification on synthetic records.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use otbot::config::IniDoc;
use otbot::identification::{
    run_step1, run_step2, run_step3, sensitivity_sweep, step2_known, write_sweep_csv,
    BasicEstimate, Experiment, IdentOptions, ParamEstimate, PipelineConfig, Source, CHASSIS_IDS,
    PLATFORM_IDS,
};
use otbot::simulator::fmt_f64;
use otbot::{ParamId, RobotParams};

use crate::failure::{input, numeric, CliResult, Failure};
use crate::output::{integrator_json, ConfigHash, Manifest, OutDir};
use crate::scenario::load_params;
use crate::{seed_override, IdentifyArgs, Step};

/// Deviations of the platform-step guess tried by the sweep.
const SWEEP_DEVIATIONS: [f64; 5] = [0.05, 0.10, 0.15, 0.20, 0.25];

fn read_guess(path: &Path, cfg: &mut PipelineConfig) -> CliResult<String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let doc = IniDoc::parse(&text, path).map_err(input)?;
    for e in &doc.entries {
        let v = doc.parse_f64(e).map_err(input)?;
        let slot = match (e.section.as_str(), e.key.as_str()) {
            ("step1", "bw") => &mut cfg.basic_guess.bw,
            ("step1", "Ia") => &mut cfg.basic_guess.ia,
            ("step1", "bp") => &mut cfg.basic_guess.bp,
            ("step1", "Ip0") => &mut cfg.basic_guess.ip0,
            ("step2", k) => match CHASSIS_IDS.iter().position(|id| id.key() == k) {
                Some(i) => &mut cfg.chassis_guess[i],
                None => return Err(input(doc.err(e, format!("unknown step 2 parameter `{k}`")))),
            },
            ("step3", k) => match PLATFORM_IDS.iter().position(|id| id.key() == k) {
                Some(i) => &mut cfg.platform_guess[i],
                None => return Err(input(doc.err(e, format!("unknown step 3 parameter `{k}`")))),
            },
            (s, k) => return Err(input(doc.err(e, format!("unexpected `{k}` in [{s}]")))),
        };
        *slot = v;
    }
    Ok(text)
}

struct Row {
    step: u8,
    name: &'static str,
    guess: f64,
    estimate: f64,
    truth: f64,
}

fn estimate_rows(step: u8, est: &ParamEstimate, guess: &[f64], truth: &RobotParams) -> Vec<Row> {
    est.ids
        .iter()
        .zip(&est.values)
        .zip(guess)
        .map(|((&id, &v), &g)| Row {
            step,
            name: id.key(),
            guess: g,
            estimate: v,
            truth: truth.get(id),
        })
        .collect()
}

fn step1_rows(b: &BasicEstimate, cfg: &PipelineConfig) -> Vec<Row> {
    let t = &cfg.truth_unloaded;
    let g = &cfg.basic_guess;
    vec![
        Row {
            step: 1,
            name: "bw",
            guess: g.bw,
            estimate: b.bw,
            truth: t.bw,
        },
        Row {
            step: 1,
            name: "Ia",
            guess: g.ia,
            estimate: b.ia,
            truth: t.ia,
        },
        Row {
            step: 1,
            name: "bp",
            guess: g.bp,
            estimate: b.bp,
            truth: t.bp,
        },
        Row {
            step: 1,
            name: "Ip0",
            guess: g.ip0,
            estimate: b.ip0,
            truth: t.ip,
        },
    ]
}

fn report_step(
    report: &mut String,
    title: &str,
    rows: &[Row],
    fits: &[&ParamEstimate],
    provenance: &[(ParamId, Source)],
) {
    let _ = writeln!(report, "{title}");
    for r in rows {
        let _ = writeln!(
            report,
            "  {:<4} guess {:>10.6}  estimate {:>12.8}  truth {:>10.6}  |error| {:.3e}",
            r.name,
            r.guess,
            r.estimate,
            r.truth,
            (r.estimate - r.truth).abs()
        );
    }
    for f in fits {
        let _ = writeln!(
            report,
            "  loss {:.6e}, {} iterations, {:?}, Jacobian condition {:.3e}",
            f.loss, f.iterations, f.termination, f.condition
        );
    }
    if !provenance.is_empty() {
        let held: Vec<String> = provenance
            .iter()
            .map(|(id, s)| format!("{id} ({s})"))
            .collect();
        let _ = writeln!(report, "  held fixed: {}", held.join(", "));
    }
    let _ = writeln!(report);
}

pub fn run(args: &IdentifyArgs) -> CliResult<()> {
    let started = Instant::now();
    let mut cfg = PipelineConfig::default();
    let mut hash = ConfigHash::default();
    if let Some(p) = &args.params {
        let truth = load_params(p)?;
        cfg.truth_unloaded = truth;
        cfg.truth_working = truth;
    }
    hash.add("params", &cfg.truth_working.to_ini());
    if let Some(g) = &args.guess {
        let text = read_guess(g, &mut cfg)?;
        hash.add("guess", &text);
    }
    cfg.seed = seed_override(args.seed, cfg.seed)?;
    hash.add(
        "run",
        &format!(
            "{:?} {} {} {}",
            args.step, cfg.seed, args.sweep, args.sweep_seeds
        ),
    );
    let opts = IdentOptions::default();
    let last = match args.step {
        Step::One => 1,
        Step::Two => 2,
        Step::Three | Step::All => 3,
    };

    let mut out = OutDir::create(&args.out)?;
    let mut rows: Vec<Row> = Vec::new();
    let mut report = format!("identification, seed {}\n\n", cfg.seed);
    let mut experiments: Vec<(Experiment, RobotParams)> = Vec::new();

    let (basic, exps) = run_step1(&cfg, &opts).map_err(numeric)?;
    let r1 = step1_rows(&basic, &cfg);
    let step1_fit = basic
        .wheel
        .apply(&basic.platform.apply(&cfg.truth_unloaded));
    report_step(
        &mut report,
        "step 1: wheel and platform shafts",
        &r1,
        &[&basic.wheel, &basic.platform],
        &[],
    );
    rows.extend(r1);
    experiments.extend(exps.into_iter().map(|e| (e, step1_fit)));
    let mut identified = step1_fit;

    if last >= 2 {
        let (s2, exp) = run_step2(&cfg, &basic, &opts).map_err(numeric)?;
        let known = step2_known(&cfg, &basic);
        let r2 = estimate_rows(2, &s2.estimate, &cfg.chassis_guess, &cfg.truth_unloaded);
        report_step(
            &mut report,
            "step 2: chassis",
            &r2,
            &[&s2.estimate],
            &s2.provenance,
        );
        rows.extend(r2);
        let fitted = s2.estimate.apply(&known);
        experiments.push((exp, fitted));
        identified = fitted;
        if last >= 3 {
            let (s3, exp) = run_step3(&cfg, &fitted, &opts).map_err(numeric)?;
            let r3 = estimate_rows(3, &s3.estimate, &cfg.platform_guess, &cfg.truth_working);
            report_step(
                &mut report,
                "step 3: loaded platform",
                &r3,
                &[&s3.estimate],
                &s3.provenance,
            );
            rows.extend(r3);
            identified = s3.estimate.apply(&fitted);
            experiments.push((exp, identified));
        }
    }

    let mut csv = String::from("step,param,guess,estimate,truth,abs_error\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.step,
            r.name,
            fmt_f64(r.guess),
            fmt_f64(r.estimate),
            fmt_f64(r.truth),
            fmt_f64((r.estimate - r.truth).abs())
        );
    }
    out.write("estimates.csv", csv.as_bytes())?;
    for (exp, fitted) in &experiments {
        out.csv(&format!("fit_{}.csv", exp.name), |w| {
            exp.write_fit_csv(fitted, w)
        })?;
    }
    out.write("identified.cfg", identified.to_ini().as_bytes())?;

    // each experiment draws its noise from seed + k
    let mut seeds: Vec<u64> = (0..=last as u64)
        .map(|k| cfg.seed.wrapping_add(k))
        .collect();
    if args.sweep {
        let sweep_seeds: Vec<u64> = (0..args.sweep_seeds).collect();
        let sweep = sensitivity_sweep(
            &SWEEP_DEVIATIONS,
            &sweep_seeds,
            &cfg.truth_working,
            &cfg.truth_working,
            cfg.platform_duration,
            cfg.imu_sigma,
            &opts,
        );
        out.csv("sweep.csv", |w| write_sweep_csv(&sweep, w))?;
        let _ = writeln!(report, "guess sweep: convergence per deviation");
        for d in SWEEP_DEVIATIONS {
            let cells: Vec<_> = sweep.iter().filter(|r| r.deviation == d).collect();
            let ok = cells.iter().filter(|r| r.converged).count();
            let _ = writeln!(
                report,
                "  {:>4.0} %: {ok}/{} converged",
                d * 100.0,
                cells.len()
            );
        }
        seeds.extend(sweep_seeds);
    }
    out.write("report.txt", report.as_bytes())?;
    print!("{report}");
    Manifest {
        command: "identify",
        scenario: None,
        config_hash: hash.hex(),
        seeds,
        integrator: integrator_json(
            opts.fit_rtol,
            opts.fit_rtol * 1e-3,
            &[("polish_rtol", opts.polish_rtol)],
        ),
        started,
    }
    .finish(&mut out)
}
