use std::path::Path;
use std::process::{Command, Output};

fn otbot(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otbot"))
        .current_dir(dir)
        .env_remove("OTBOT_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn lists_the_bundled_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let o = otbot(dir.path(), &["scenarios"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let names: Vec<&str> = text
        .lines()
        .map(|l| l.split_whitespace().next().unwrap())
        .collect();
    assert_eq!(
        names,
        [
            "wheel-spin",
            "platform-spin",
            "chassis-excitation",
            "corridor",
            "plan-tracking",
            "figure8"
        ]
    );
}

#[test]
fn missing_params_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = otbot(
        dir.path(),
        &["simulate", "--params", "absent.cfg", "--torques", "1,1,1"],
    );
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("absent.cfg"), "{err}");
    assert_eq!(err.trim().lines().count(), 1);
}

#[test]
fn bad_arguments_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["simulate", "--torques", "1,2"][..],
        &["simulate", "--torques", "1,x,3"],
        &["simulate", "--scenario", "no-such-thing"],
        &["control", "--scenario", "wheel-spin"],
        &["frobnicate"],
    ] {
        let o = otbot(dir.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(
            stderr(&o).starts_with("error[usage]"),
            "{args:?}: {}",
            stderr(&o)
        );
    }
}

#[test]
fn simulate_writes_trajectory_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = otbot(
        dir.path(),
        &[
            "simulate",
            "--torques",
            "0.5,-0.5,0.2",
            "--duration",
            "0.5",
            "--out",
            "run",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = read(dir.path().join("run/trajectory.csv"));
    assert_eq!(csv.lines().count(), 1 + 51);
    let m: serde_json::Value =
        serde_json::from_str(&read(dir.path().join("run/manifest.json"))).unwrap();
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(m["files"], serde_json::json!(["trajectory.csv"]));
    assert!(m["integrator"]["rtol"].as_f64().unwrap() > 0.0);
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = otbot(
            dir.path(),
            &[
                "simulate",
                "--scenario",
                "chassis-excitation",
                "--duration",
                "1",
                "--out",
                out,
            ],
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["trajectory.csv", "sensors.csv"] {
        assert_eq!(
            read(dir.path().join("a").join(f)),
            read(dir.path().join("b").join(f)),
            "{f}"
        );
    }
}

#[test]
fn seed_from_environment_changes_noise_only() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["simulate", "--scenario", "wheel-spin", "--duration", "0.5"];
    let o = otbot(dir.path(), &[&base[..], &["--out", "a"]].concat());
    assert!(o.status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_otbot"))
        .current_dir(dir.path())
        .env("OTBOT_SEED", "77")
        .args(base)
        .args(["--out", "b"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let d = dir.path();
    assert_eq!(
        read(d.join("a/trajectory.csv")),
        read(d.join("b/trajectory.csv"))
    );
    assert_ne!(read(d.join("a/sensors.csv")), read(d.join("b/sensors.csv")));
    let m: serde_json::Value = serde_json::from_str(&read(d.join("b/manifest.json"))).unwrap();
    assert_eq!(m["seeds"], serde_json::json!([77]));

    let o = Command::new(env!("CARGO_BIN_EXE_otbot"))
        .current_dir(d)
        .env("OTBOT_SEED", "seven")
        .args(base)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn torque_check_passes_nominal_and_fails_tight_limits() {
    let dir = tempfile::tempdir().unwrap();
    let o = otbot(
        dir.path(),
        &["check-torques", "--samples", "5", "--out", "ok"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("ok/feasibility.csv").exists());

    let o = otbot(
        dir.path(),
        &["check-torques", "--limit", "1", "--out", "tight"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[check]"));
    // the report is still written
    assert!(dir.path().join("tight/manifest.json").exists());
}

#[test]
fn corridor_tracking_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = otbot(
        dir.path(),
        &["control", "--scenario", "corridor", "--out", "c"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = read(dir.path().join("c/summary.txt"));
    assert!(
        summary.contains("PASS velocity transients settle"),
        "{summary}"
    );
    assert!(!summary.contains("FAIL"), "{summary}");
    for f in [
        "trajectory.csv",
        "errors.csv",
        "feasibility.csv",
        "manifest.json",
    ] {
        assert!(dir.path().join("c").join(f).exists(), "{f}");
    }
}

#[test]
fn control_reports_failed_checks() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("slow.cfg"), "[gains]\ntstab = 30\n").unwrap();
    let o = otbot(
        dir.path(),
        &[
            "control",
            "--scenario",
            "corridor",
            "--gains",
            "slow.cfg",
            "--out",
            "c",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(read(dir.path().join("c/summary.txt")).contains("FAIL"));
}

#[test]
fn identify_step_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = otbot(dir.path(), &["identify", "--step", "1", "--out", "id"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = read(dir.path().join("id/estimates.csv"));
    assert_eq!(csv.lines().count(), 1 + 4);
    let bw: f64 = csv
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(3)
        .unwrap()
        .parse()
        .unwrap();
    assert!((bw - 0.18).abs() < 1e-3, "{bw}");
}
