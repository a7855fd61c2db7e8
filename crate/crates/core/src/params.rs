//! Geometric, inertial and friction constants of the robot.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::IniDoc;
use crate::error::{Error, Result};

/// All constants of the model, SI units.
///
/// Fields are public so that identification can assemble candidates cheaply;
/// anything coming from outside the crate should go through [`RobotParams::validate`]
/// (the config loader and the constructors do this).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotParams {
    /// Pivot offset from the wheel axis [m].
    pub l1: f64,
    /// Half wheel separation [m].
    pub l2: f64,
    /// Wheel radius [m].
    pub r: f64,
    /// Chassis centre of mass in the chassis frame [m].
    pub x_b: f64,
    pub y_b: f64,
    /// Platform centre of mass in the platform frame [m].
    pub x_f: f64,
    pub y_f: f64,
    /// Chassis mass including wheels [kg].
    pub mc: f64,
    /// Platform mass (working value) [kg].
    pub mp: f64,
    /// Chassis vertical moment of inertia at its centre of mass [kg m^2].
    pub ic: f64,
    /// Platform vertical moment of inertia at its centre of mass [kg m^2].
    pub ip: f64,
    /// Wheel axial moment of inertia [kg m^2].
    pub ia: f64,
    /// Wheel shaft viscous friction [kg m^2/s].
    pub bw: f64,
    /// Pivot shaft viscous friction [kg m^2/s].
    pub bp: f64,
}

/// Names of the scalar parameters, matching the config file keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamId {
    L1,
    L2,
    R,
    XB,
    YB,
    XF,
    YF,
    Mc,
    Mp,
    Ic,
    Ip,
    Ia,
    Bw,
    Bp,
}

impl ParamId {
    pub const ALL: [ParamId; 14] = [
        ParamId::L1,
        ParamId::L2,
        ParamId::R,
        ParamId::XB,
        ParamId::YB,
        ParamId::XF,
        ParamId::YF,
        ParamId::Mc,
        ParamId::Mp,
        ParamId::Ic,
        ParamId::Ip,
        ParamId::Ia,
        ParamId::Bw,
        ParamId::Bp,
    ];

    pub fn key(self) -> &'static str {
        match self {
            ParamId::L1 => "l1",
            ParamId::L2 => "l2",
            ParamId::R => "r",
            ParamId::XB => "xB",
            ParamId::YB => "yB",
            ParamId::XF => "xF",
            ParamId::YF => "yF",
            ParamId::Mc => "mc",
            ParamId::Mp => "mp",
            ParamId::Ic => "Ic",
            ParamId::Ip => "Ip",
            ParamId::Ia => "Ia",
            ParamId::Bw => "bw",
            ParamId::Bp => "bp",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.key() == key)
    }
}

impl std::fmt::Display for ParamId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.key())
    }
}

impl RobotParams {
    /// Nominal values of the simulated prototype, unloaded platform.
    pub fn nominal() -> Self {
        RobotParams {
            l1: 0.25,
            l2: 0.20,
            r: 0.10,
            x_b: -0.13,
            y_b: 0.0,
            x_f: 0.0,
            y_f: 0.0,
            mc: 109.14,
            mp: 21.95,
            ic: 1.30,
            ip: 2.22,
            ia: 1.04e-2,
            bw: 0.18,
            bp: 0.24,
        }
    }

    /// Nominal values with both viscous friction coefficients set to zero,
    /// as used by the tracking-control scenarios.
    pub fn nominal_frictionless() -> Self {
        RobotParams {
            bw: 0.0,
            bp: 0.0,
            ..Self::nominal()
        }
    }

    pub fn get(&self, id: ParamId) -> f64 {
        match id {
            ParamId::L1 => self.l1,
            ParamId::L2 => self.l2,
            ParamId::R => self.r,
            ParamId::XB => self.x_b,
            ParamId::YB => self.y_b,
            ParamId::XF => self.x_f,
            ParamId::YF => self.y_f,
            ParamId::Mc => self.mc,
            ParamId::Mp => self.mp,
            ParamId::Ic => self.ic,
            ParamId::Ip => self.ip,
            ParamId::Ia => self.ia,
            ParamId::Bw => self.bw,
            ParamId::Bp => self.bp,
        }
    }

    pub fn set(&mut self, id: ParamId, value: f64) {
        let slot = match id {
            ParamId::L1 => &mut self.l1,
            ParamId::L2 => &mut self.l2,
            ParamId::R => &mut self.r,
            ParamId::XB => &mut self.x_b,
            ParamId::YB => &mut self.y_b,
            ParamId::XF => &mut self.x_f,
            ParamId::YF => &mut self.y_f,
            ParamId::Mc => &mut self.mc,
            ParamId::Mp => &mut self.mp,
            ParamId::Ic => &mut self.ic,
            ParamId::Ip => &mut self.ip,
            ParamId::Ia => &mut self.ia,
            ParamId::Bw => &mut self.bw,
            ParamId::Bp => &mut self.bp,
        };
        *slot = value;
    }

    pub fn with(mut self, id: ParamId, value: f64) -> Self {
        self.set(id, value);
        self
    }

    pub fn validate(&self) -> Result<()> {
        for id in ParamId::ALL {
            let v = self.get(id);
            if !v.is_finite() {
                return Err(Error::InvalidParam {
                    name: id.key(),
                    value: v,
                    reason: "must be finite",
                });
            }
            let positive = matches!(
                id,
                ParamId::L1
                    | ParamId::L2
                    | ParamId::R
                    | ParamId::Mc
                    | ParamId::Mp
                    | ParamId::Ic
                    | ParamId::Ip
                    | ParamId::Ia
            );
            if positive && v <= 0.0 {
                return Err(Error::InvalidParam {
                    name: id.key(),
                    value: v,
                    reason: "must be > 0",
                });
            }
            if matches!(id, ParamId::Bw | ParamId::Bp) && v < 0.0 {
                return Err(Error::InvalidParam {
                    name: id.key(),
                    value: v,
                    reason: "must be >= 0",
                });
            }
        }
        Ok(())
    }

    /// Read a parameter file. Keys may sit at top level or under `[params]`;
    /// every field is required.
    pub fn from_ini(doc: &IniDoc) -> Result<Self> {
        let section = if doc.has_section("params") {
            "params"
        } else {
            ""
        };
        let mut p = RobotParams::nominal();
        let mut seen = [false; 14];
        for e in doc.section(section) {
            let id = ParamId::from_key(&e.key)
                .ok_or_else(|| doc.err(e, format!("unknown parameter `{}`", e.key)))?;
            p.set(id, doc.parse_f64(e)?);
            seen[ParamId::ALL.iter().position(|x| *x == id).unwrap()] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Config {
                path: doc.path.clone(),
                line: 0,
                msg: format!("missing parameter `{}`", ParamId::ALL[i].key()),
            });
        }
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_ini(&IniDoc::load(path)?)
    }

    pub fn to_ini(&self) -> String {
        let mut s = String::from("[params]\n");
        for id in ParamId::ALL {
            let _ = writeln!(s, "{} = {}", id.key(), self.get(id));
        }
        s
    }
}

impl Default for RobotParams {
    fn default() -> Self {
        Self::nominal()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nominal_is_valid() {
        RobotParams::nominal().validate().unwrap();
        RobotParams::nominal_frictionless().validate().unwrap();
    }

    #[test]
    fn rejects_degenerate_geometry() {
        let p = RobotParams::nominal().with(ParamId::L1, 0.0);
        assert!(matches!(
            p.validate(),
            Err(Error::InvalidParam { name: "l1", .. })
        ));
        assert!(RobotParams::nominal()
            .with(ParamId::Bw, -1e-3)
            .validate()
            .is_err());
        assert!(RobotParams::nominal()
            .with(ParamId::Mp, f64::NAN)
            .validate()
            .is_err());
        // negative c.o.m. coordinates are fine
        RobotParams::nominal()
            .with(ParamId::YF, -0.3)
            .validate()
            .unwrap();
    }

    #[test]
    fn ini_round_trip() {
        let p = RobotParams::nominal().with(ParamId::XF, 0.1125);
        let doc = IniDoc::parse(&p.to_ini(), "mem").unwrap();
        assert_eq!(RobotParams::from_ini(&doc).unwrap(), p);
    }

    #[test]
    fn ini_missing_and_unknown_keys() {
        let doc = IniDoc::parse("l1 = 0.25\n", "partial.cfg").unwrap();
        let msg = RobotParams::from_ini(&doc).unwrap_err().to_string();
        assert!(msg.contains("missing parameter `l2`"), "{msg}");

        let text = RobotParams::nominal().to_ini() + "foo = 1\n";
        let doc = IniDoc::parse(&text, "extra.cfg").unwrap();
        let msg = RobotParams::from_ini(&doc).unwrap_err().to_string();
        assert!(msg.starts_with("extra.cfg:16:"), "{msg}");
    }
}
