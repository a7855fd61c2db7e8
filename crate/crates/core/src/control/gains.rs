//! PD gains by pole placement on the decoupled error dynamics
//! `e_ddot + kv e_dot + kp e = 0`.

use nalgebra::Matrix2;

use crate::config::IniDoc;
use crate::error::{Error, Result};
use crate::model::Vec3;

/// Ratio between the fast and the slow pole.
pub const FAST_POLE_RATIO: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    /// Diagonal of Kp, per (x, y, alpha).
    pub kp: Vec3,
    /// Diagonal of Kv.
    pub kv: Vec3,
    /// Slow pole per axis.
    pub s1: Vec3,
    /// Fast pole per axis.
    pub s2: Vec3,
    /// Settling time per axis [s].
    pub tstab: Vec3,
}

/// Place the slow pole at `-4 / Tstab` (so `e^(s1 Tstab) ~ 2 %`) and the fast
/// one ten times further left.
pub fn tune_gains(tstab: [f64; 3]) -> Result<Gains> {
    let mut g = Gains {
        kp: Vec3::zeros(),
        kv: Vec3::zeros(),
        s1: Vec3::zeros(),
        s2: Vec3::zeros(),
        tstab: Vec3::from(tstab),
    };
    for (i, &t) in tstab.iter().enumerate() {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidInput(format!(
                "settling time must be > 0, got {t}"
            )));
        }
        let s1 = -4.0 / t;
        let s2 = FAST_POLE_RATIO * s1;
        g.s1[i] = s1;
        g.s2[i] = s2;
        g.kp[i] = s1 * s2;
        g.kv[i] = -(s1 + s2);
    }
    Ok(g)
}

impl Gains {
    pub fn uniform(tstab: f64) -> Result<Self> {
        tune_gains([tstab; 3])
    }

    /// Companion matrix of one axis' error dynamics, state `(e, e_dot)`.
    pub fn error_matrix(&self, axis: usize) -> Matrix2<f64> {
        Matrix2::new(0.0, 1.0, -self.kp[axis], -self.kv[axis])
    }

    /// Roots of `l^2 + kv l + kp`, smaller magnitude first.
    pub fn eigenvalues(&self, axis: usize) -> (f64, f64) {
        let (kp, kv) = (self.kp[axis], self.kv[axis]);
        let disc = (kv * kv - 4.0 * kp).max(0.0).sqrt();
        // numerically stable pair
        let big = -0.5 * (kv + disc);
        let small = kp / big;
        (small, big)
    }

    /// Settling times from a `[gains]` section: `tstab = 3` for all axes or
    /// `tstab_x`, `tstab_y`, `tstab_alpha` individually.
    pub fn from_ini(doc: &IniDoc) -> Result<Self> {
        let sec = if doc.has_section("gains") {
            "gains"
        } else {
            ""
        };
        let all = doc.get_f64(sec, "tstab")?;
        let mut t = [0.0; 3];
        for (i, key) in ["tstab_x", "tstab_y", "tstab_alpha"].iter().enumerate() {
            t[i] = match (doc.get_f64(sec, key)?, all) {
                (Some(v), _) | (None, Some(v)) => v,
                (None, None) => {
                    return Err(Error::Config {
                        path: doc.path.clone(),
                        line: 0,
                        msg: format!("missing `tstab` or `{key}`"),
                    })
                }
            };
        }
        for e in doc.section(sec) {
            if !["tstab", "tstab_x", "tstab_y", "tstab_alpha"].contains(&e.key.as_str()) {
                return Err(doc.err(e, format!("unknown gain key `{}`", e.key)));
            }
        }
        tune_gains(t)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_ini(&IniDoc::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recipe_values() {
        let g = Gains::uniform(4.0).unwrap();
        assert!((g.kp[0] - 10.0).abs() < 1e-12 && (g.kv[0] - 11.0).abs() < 1e-12);
        let g = Gains::uniform(3.0).unwrap();
        assert!((g.kp[1] - 17.778).abs() < 5e-4);
        assert!((g.kv[2] - 14.667).abs() < 5e-4);
    }

    #[test]
    fn eigenvalues_are_the_placed_poles() {
        let g = tune_gains([3.0, 2.0, 5.0]).unwrap();
        for i in 0..3 {
            let (a, b) = g.eigenvalues(i);
            assert!((a - g.s1[i]).abs() < 1e-12 && (b - g.s2[i]).abs() < 1e-12);
            let ev = g.error_matrix(i).eigenvalues().unwrap();
            let mut ev = [ev[0], ev[1]];
            ev.sort_by(|x, y| y.partial_cmp(x).unwrap());
            assert!((ev[0] - g.s1[i]).abs() < 1e-10 && (ev[1] - g.s2[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_nonpositive_time() {
        assert!(tune_gains([3.0, 0.0, 3.0]).is_err());
    }

    #[test]
    fn from_config() {
        let doc = IniDoc::parse("[gains]\ntstab = 3\ntstab_alpha = 4\n", "g.cfg").unwrap();
        let g = Gains::from_ini(&doc).unwrap();
        assert_eq!(g.tstab, Vec3::new(3.0, 3.0, 4.0));
        let doc = IniDoc::parse("[gains]\nkp = 3\n", "g.cfg").unwrap();
        assert!(Gains::from_ini(&doc).is_err());
    }
}
