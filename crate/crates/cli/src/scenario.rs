//! Scenario files: which robot, how it is driven, what is recorded.

use std::path::{Path, PathBuf};

use otbot::config::{parse_f64_list, IniDoc};
use otbot::control::{
    FigureEightReference, Gains, PolylineReference, ReferenceTrajectory, SlalomReference,
};
use otbot::dynamics::PlanarForce;
use otbot::ode::OdeOptions;
use otbot::sensors::{self, SensorModel};
use otbot::simulator::{DisturbancePulse, DisturbanceSchedule, Shaft};
use otbot::RobotParams;

use crate::failure::{input, CliResult, Failure};

/// Bundled scenarios: stable name, file contents.
pub const BUNDLED: [(&str, &str); 6] = [
    (
        "wheel-spin",
        include_str!("../../../scenarios/wheel-spin.cfg"),
    ),
    (
        "platform-spin",
        include_str!("../../../scenarios/platform-spin.cfg"),
    ),
    (
        "chassis-excitation",
        include_str!("../../../scenarios/chassis-excitation.cfg"),
    ),
    ("corridor", include_str!("../../../scenarios/corridor.cfg")),
    (
        "plan-tracking",
        include_str!("../../../scenarios/plan-tracking.cfg"),
    ),
    ("figure8", include_str!("../../../scenarios/figure8.cfg")),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Shaft(Shaft),
    OpenLoop,
    Controller,
    Plan,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RefKind {
    Corridor,
    FigureEight {
        radius: f64,
        centre: f64,
        period: f64,
    },
    Slalom,
}

impl RefKind {
    pub fn build(&self, horizon: f64) -> CliResult<Box<dyn ReferenceTrajectory>> {
        Ok(match *self {
            RefKind::Corridor => Box::new(PolylineReference::corridor()),
            RefKind::FigureEight {
                radius,
                centre,
                period,
            } => {
                Box::new(FigureEightReference::new(radius, centre, period, horizon).map_err(input)?)
            }
            RefKind::Slalom => Box::new(SlalomReference::standard()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Start {
    Rest,
    Reference,
}

/// Where the robot parameters come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamSource {
    Nominal,
    Frictionless,
    File(PathBuf),
}

impl ParamSource {
    pub fn parse(s: &str) -> Self {
        match s {
            "nominal" => ParamSource::Nominal,
            "nominal-frictionless" => ParamSource::Frictionless,
            path => ParamSource::File(PathBuf::from(path)),
        }
    }

    pub fn load(&self) -> CliResult<RobotParams> {
        match self {
            ParamSource::Nominal => Ok(RobotParams::nominal()),
            ParamSource::Frictionless => Ok(RobotParams::nominal_frictionless()),
            ParamSource::File(p) => load_params(p),
        }
    }
}

pub fn load_params(path: &Path) -> CliResult<RobotParams> {
    RobotParams::load(path).map_err(input)
}

pub fn load_gains(path: &Path) -> CliResult<Gains> {
    Gains::load(path).map_err(input)
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub name: String,
    pub description: String,
    /// File it was read from, or `<bundled>/name.cfg`.
    pub source: PathBuf,
    /// Raw text, hashed into the manifest.
    pub text: String,
    pub mode: Mode,
    pub params: ParamSource,
    pub horizon: Option<f64>,
    pub seed: u64,
    pub output: PathBuf,
    pub torques: Option<[f64; 3]>,
    pub input_dt: f64,
    pub sensor: Option<SensorModel>,
    pub reference: Option<RefKind>,
    pub start: Start,
    pub tstab: Option<f64>,
    pub control_rate: f64,
    pub disturbances: DisturbanceSchedule,
    pub plan_dt: f64,
    pub action_scale: f64,
    pub plan_file: Option<PathBuf>,
    pub ode: OdeOptions,
}

impl ScenarioConfig {
    /// A bundled name or a path to a scenario file.
    pub fn resolve(name_or_path: &str) -> CliResult<Self> {
        let name = if name_or_path == "plan" {
            "plan-tracking"
        } else {
            name_or_path
        };
        if let Some((n, text)) = BUNDLED.iter().find(|(n, _)| *n == name) {
            return Self::parse(text, PathBuf::from(format!("<bundled>/{n}.cfg")));
        }
        let path = Path::new(name_or_path);
        if path.extension().is_some() || path.exists() {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
            return Self::parse(&text, path.to_path_buf());
        }
        let known: Vec<&str> = BUNDLED.iter().map(|(n, _)| *n).collect();
        Err(Failure::usage(format!(
            "unknown scenario `{name_or_path}` (bundled: {})",
            known.join(", ")
        )))
    }

    pub fn parse(text: &str, source: PathBuf) -> CliResult<Self> {
        let doc = IniDoc::parse(text, &source).map_err(input)?;
        let missing = |sec: &str, key: &str| {
            Failure::config(format!("{}: missing `{key}` in [{sec}]", source.display()))
        };
        let str_of = |sec: &str, key: &str| doc.get(sec, key).map(|e| e.value.clone());
        let f64_of = |sec: &str, key: &str| doc.get_f64(sec, key).map_err(input);
        let bad = |sec: &str, key: &str, msg: String| -> Failure {
            match doc.get(sec, key) {
                Some(e) => input(doc.err(e, msg)),
                None => Failure::config(format!("{}: {msg}", source.display())),
            }
        };

        let name = str_of("scenario", "name").ok_or_else(|| missing("scenario", "name"))?;
        let mode = match str_of("scenario", "mode")
            .ok_or_else(|| missing("scenario", "mode"))?
            .as_str()
        {
            "shaft" => {
                let s = str_of("scenario", "shaft").ok_or_else(|| missing("scenario", "shaft"))?;
                Mode::Shaft(match s.as_str() {
                    "right-wheel" => Shaft::RightWheel,
                    "left-wheel" => Shaft::LeftWheel,
                    "pivot" => Shaft::Pivot,
                    other => {
                        return Err(bad("scenario", "shaft", format!("unknown shaft `{other}`")))
                    }
                })
            }
            "open-loop" => Mode::OpenLoop,
            "controller" => Mode::Controller,
            "plan" => Mode::Plan,
            other => return Err(bad("scenario", "mode", format!("unknown mode `{other}`"))),
        };
        let horizon = f64_of("scenario", "horizon")?;
        if let Some(h) = horizon {
            if !(h > 0.0) {
                return Err(bad(
                    "scenario",
                    "horizon",
                    format!("horizon must be > 0, got {h}"),
                ));
            }
        }
        let seed = match doc.get("scenario", "seed") {
            Some(e) => e
                .value
                .parse::<u64>()
                .map_err(|_| input(doc.err(e, "seed must be a non-negative integer")))?,
            None => 0,
        };

        let torques = match doc.get("input", "torques") {
            Some(e) => {
                let v =
                    parse_f64_list(&e.value).map_err(|err| input(doc.err(e, err.to_string())))?;
                let arr: [f64; 3] = v.try_into().map_err(|_| {
                    input(doc.err(e, "expected three torques `tau_r, tau_l, tau_p`"))
                })?;
                Some(arr)
            }
            None => None,
        };

        let sensor = match str_of("sensor", "kind").as_deref() {
            None => None,
            Some(kind) => {
                let mut m = match (kind, mode) {
                    ("encoder", Mode::Shaft(s)) => {
                        SensorModel::encoder(s, sensors::ENCODER_SIGMA, seed)
                    }
                    ("imu", _) => SensorModel::imu(seed),
                    ("encoder", _) => {
                        return Err(bad("sensor", "kind", "an encoder needs shaft mode".into()))
                    }
                    (other, _) => {
                        return Err(bad("sensor", "kind", format!("unknown sensor `{other}`")))
                    }
                };
                if let Some(r) = f64_of("sensor", "rate")? {
                    m.sample_rate = r;
                    if kind == "imu" {
                        m.sigma = sensors::sigma_imu(sensors::IMU_NOISE_DENSITY, r);
                    }
                }
                if let Some(s) = f64_of("sensor", "sigma")? {
                    m.sigma = s;
                }
                m.validate()
                    .map_err(|e| bad("sensor", "kind", e.to_string()))?;
                Some(m)
            }
        };

        let reference = match str_of("reference", "kind").as_deref() {
            None => None,
            Some("corridor") => Some(RefKind::Corridor),
            Some("slalom") => Some(RefKind::Slalom),
            Some("figure8") => Some(RefKind::FigureEight {
                radius: f64_of("reference", "radius")?.unwrap_or(2.0),
                centre: f64_of("reference", "centre")?.unwrap_or(4.0),
                period: f64_of("reference", "period")?.unwrap_or(18.0),
            }),
            Some(other) => {
                return Err(bad(
                    "reference",
                    "kind",
                    format!("unknown reference `{other}`"),
                ))
            }
        };
        let plan_reference = match str_of("plan", "reference").as_deref() {
            None | Some("slalom") => RefKind::Slalom,
            Some("corridor") => RefKind::Corridor,
            Some(other) => {
                return Err(bad(
                    "plan",
                    "reference",
                    format!("unknown plan reference `{other}`"),
                ))
            }
        };

        let start = match str_of("initial", "start").as_deref() {
            None | Some("rest") => Start::Rest,
            Some("reference") => Start::Reference,
            Some(other) => return Err(bad("initial", "start", format!("unknown start `{other}`"))),
        };

        let mut pulses = Vec::new();
        for e in doc.section("disturbances") {
            let v = parse_f64_list(&e.value).map_err(|err| input(doc.err(e, err.to_string())))?;
            let [t_on, t_off, fx, fy]: [f64; 4] = v
                .try_into()
                .map_err(|_| input(doc.err(e, "expected `t_on, t_off, fx, fy`")))?;
            pulses.push(DisturbancePulse {
                t_on,
                t_off,
                force: PlanarForce::new(fx, fy),
            });
        }
        let disturbances = DisturbanceSchedule::new(pulses).map_err(input)?;

        let rtol = f64_of("integrator", "rtol")?.unwrap_or(OdeOptions::default().rtol);
        let atol = f64_of("integrator", "atol")?.unwrap_or(OdeOptions::default().atol);

        let cfg = ScenarioConfig {
            description: str_of("scenario", "description").unwrap_or_default(),
            output: PathBuf::from(
                str_of("scenario", "output").unwrap_or_else(|| format!("runs/{name}")),
            ),
            params: ParamSource::parse(
                &str_of("scenario", "params").unwrap_or_else(|| "nominal".into()),
            ),
            name,
            source: source.clone(),
            text: text.to_string(),
            mode,
            horizon,
            seed,
            torques,
            input_dt: f64_of("input", "dt")?.unwrap_or(0.01),
            sensor,
            reference: if mode == Mode::Plan {
                Some(plan_reference)
            } else {
                reference
            },
            start,
            tstab: f64_of("gains", "tstab")?,
            control_rate: f64_of("control", "rate")?.unwrap_or(1000.0),
            disturbances,
            plan_dt: f64_of("plan", "dt")?.unwrap_or(otbot::control::plan::PLAN_DT),
            action_scale: f64_of("plan", "action_scale")?
                .unwrap_or(otbot::control::plan::LIGHT_MODEL_SCALE),
            plan_file: str_of("plan", "file")
                .filter(|s| !s.is_empty())
                .map(PathBuf::from),
            ode: OdeOptions::with_tol(rtol, atol),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sections the mode needs are present and referenced files exist.
    pub fn validate(&self) -> CliResult<()> {
        let src = self.source.display();
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Failure::config(format!("{src}: {what}")))
            }
        };
        match self.mode {
            Mode::Shaft(_) | Mode::OpenLoop => {
                need(self.torques.is_some(), "missing `torques` in [input]")?;
                need(self.horizon.is_some(), "missing `horizon` in [scenario]")?;
                need(self.input_dt > 0.0, "[input] dt must be > 0")?;
            }
            Mode::Controller => {
                need(self.reference.is_some(), "missing [reference] section")?;
                need(self.horizon.is_some(), "missing `horizon` in [scenario]")?;
            }
            Mode::Plan => {}
        }
        if matches!(self.mode, Mode::Controller | Mode::Plan) {
            need(self.tstab.is_some(), "missing `tstab` in [gains]")?;
            need(self.control_rate > 0.0, "[control] rate must be > 0")?;
        }
        need(
            self.plan_dt > 0.0 && self.action_scale > 0.0,
            "[plan] dt and action_scale must be > 0",
        )?;
        need(
            self.ode.rtol > 0.0 && self.ode.atol > 0.0,
            "[integrator] rtol and atol must be > 0",
        )?;
        if let ParamSource::File(p) = &self.params {
            need(
                p.is_file(),
                &format!("params file `{}` not found", p.display()),
            )?;
        }
        if let Some(p) = &self.plan_file {
            need(
                p.is_file(),
                &format!("plan file `{}` not found", p.display()),
            )?;
        }
        Ok(())
    }

    pub fn gains(&self) -> CliResult<Gains> {
        Gains::uniform(self.tstab.unwrap_or(3.0)).map_err(input)
    }
}
