//! Sequential against rayon-parallel execution on the workloads that fan out:
//! finite-difference Jacobians inside a fit, a guess sweep, and batches of
//! independent closed-loop runs.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use otbot::control::plan::initial_configuration;
use otbot::control::{
    closed_loop_simulate, ClosedLoopOptions, Gains, ReferenceTrajectory, SlalomReference,
};
use otbot::identification::{
    excitation_experiment, identify_chassis, sensitivity_sweep, IdentOptions,
};
use otbot::model::Vec3;
use otbot::par::{map_range, Execution};
use otbot::simulator::DisturbanceSchedule;
use otbot::{RobotParams, RobotState};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn chassis_fit(c: &mut Criterion) {
    let p = RobotParams::nominal();
    let exp = excitation_experiment("c", &p, 3.0, 13.7e-3, 0).unwrap();
    let mut g = c.benchmark_group("chassis_fit");
    g.sample_size(10);
    for (name, mode) in MODES {
        let opts = IdentOptions::default().with_exec(mode);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| identify_chassis(&exp, &p, [54.57, 0.65, -0.07, 0.25], &opts).unwrap())
        });
    }
    g.finish();
}

fn guess_sweep(c: &mut Criterion) {
    let p = RobotParams::nominal();
    let mut g = c.benchmark_group("guess_sweep");
    g.sample_size(10);
    for (name, mode) in MODES {
        let opts = IdentOptions::default().with_exec(mode);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sensitivity_sweep(&[0.05, 0.15], &[0, 1, 2, 3], &p, &p, 1.0, 13.7e-3, &opts))
        });
    }
    g.finish();
}

fn closed_loop_batch(c: &mut Criterion) {
    let p = RobotParams::nominal();
    let gains = Gains::uniform(3.0).unwrap();
    let reference = SlalomReference::standard();
    let r0 = reference.sample(0.0);
    let opts = ClosedLoopOptions::default();
    let run = |k: usize| {
        let offset = Vec3::new(0.05 * k as f64, -0.03, 0.02);
        let x0 = RobotState::from_twist(&p, initial_configuration(&(r0.p + offset)), r0.pd);
        closed_loop_simulate(
            &p,
            &x0,
            &reference,
            &gains,
            &opts,
            &DisturbanceSchedule::none(),
            2.0,
        )
        .unwrap()
    };
    let mut g = c.benchmark_group("closed_loop_batch");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| map_range(mode, 8, run))
        });
    }
    g.finish();
}

criterion_group!(benches, chassis_fit, guess_sweep, closed_loop_batch);
criterion_main!(benches);
