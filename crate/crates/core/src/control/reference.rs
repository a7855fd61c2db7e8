//! Desired platform trajectories `p_d(t) = (x, y, alpha)` with first and
//! second derivatives.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::Vec3;
use crate::simulator::SimTrajectory;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefSample {
    pub p: Vec3,
    pub pd: Vec3,
    pub pdd: Vec3,
}

impl RefSample {
    pub fn at_rest(p: Vec3) -> Self {
        RefSample {
            p,
            pd: Vec3::zeros(),
            pdd: Vec3::zeros(),
        }
    }
}

pub trait ReferenceTrajectory: Send + Sync {
    fn sample(&self, t: f64) -> RefSample;

    /// End of the interval on which the reference is defined.
    fn horizon(&self) -> f64;

    /// Instants where the velocity or acceleration jumps.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Straight segments at constant speed through a list of waypoints, then a
/// hold at the last one. Velocity switches abruptly at each waypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct PolylineReference {
    pub waypoints: Vec<[f64; 2]>,
    pub speed: f64,
    pub alpha: f64,
    pub horizon: f64,
    /// Arrival time at each waypoint.
    times: Vec<f64>,
}

impl PolylineReference {
    pub fn new(waypoints: Vec<[f64; 2]>, speed: f64, alpha: f64, horizon: f64) -> Result<Self> {
        if waypoints.len() < 2 || !(speed > 0.0) {
            return Err(Error::InvalidInput(
                "a polyline reference needs two waypoints and a positive speed".into(),
            ));
        }
        let mut times = vec![0.0];
        for w in waypoints.windows(2) {
            let len = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
            times.push(times.last().unwrap() + len / speed);
        }
        Ok(PolylineReference {
            waypoints,
            speed,
            alpha,
            horizon,
            times,
        })
    }

    /// Five 3 m legs at 0.6 m/s through a zig-zag corridor, then 5 s of hold.
    pub fn corridor() -> Self {
        let wp = vec![
            [0.0, 0.0],
            [3.0, 0.0],
            [3.0, 3.0],
            [6.0, 3.0],
            [6.0, 0.0],
            [9.0, 0.0],
        ];
        Self::new(wp, 0.6, 0.0, 30.0).expect("valid corridor")
    }
}

impl ReferenceTrajectory for PolylineReference {
    fn sample(&self, t: f64) -> RefSample {
        let n = self.times.len();
        if t >= self.times[n - 1] {
            let w = self.waypoints[n - 1];
            return RefSample::at_rest(Vec3::new(w[0], w[1], self.alpha));
        }
        let t = t.max(0.0);
        // segment k covers [times[k], times[k+1])
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let (a, b) = (self.waypoints[k], self.waypoints[k + 1]);
        let len = self.times[k + 1] - self.times[k];
        let dir = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
        let tau = t - self.times[k];
        RefSample {
            p: Vec3::new(a[0] + dir[0] * tau, a[1] + dir[1] * tau, self.alpha),
            pd: Vec3::new(dir[0], dir[1], 0.0),
            pdd: Vec3::zeros(),
        }
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.times[1..].to_vec()
    }
}

/// Figure-eight of two tangent-joined circles traversed at constant speed.
///
/// Circles of radius `r` centred at `(+-c, 0)`; the straight legs cross at
/// the origin. Starting at the origin the path runs up-right, clockwise
/// round the right circle, back through the origin, anticlockwise round the
/// left circle and home.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureEightReference {
    pub radius: f64,
    pub centre: f64,
    pub period: f64,
    pub alpha: f64,
    pub horizon: f64,
}

struct Piece {
    len: f64,
    kind: PieceKind,
}

enum PieceKind {
    Line {
        from: [f64; 2],
        dir: [f64; 2],
    },
    /// Centre, start angle, turning sense (+1 anticlockwise).
    Arc {
        c: [f64; 2],
        a0: f64,
        sense: f64,
    },
}

impl FigureEightReference {
    pub fn new(radius: f64, centre: f64, period: f64, horizon: f64) -> Result<Self> {
        if !(radius > 0.0 && centre > radius && period > 0.0) {
            return Err(Error::InvalidInput(
                "figure-eight needs 0 < radius < centre and period > 0".into(),
            ));
        }
        Ok(FigureEightReference {
            radius,
            centre,
            period,
            alpha: 0.0,
            horizon,
        })
    }

    pub fn standard() -> Self {
        Self::new(2.0, 4.0, 18.0, 18.0).expect("valid figure-eight")
    }

    fn pieces(&self) -> [Piece; 6] {
        let (r, c) = (self.radius, self.centre);
        let beta = (r / c).asin();
        let tl = (c * c - r * r).sqrt();
        let (sb, cb) = beta.sin_cos();
        let sweep_len = (PI + 2.0 * beta) * r;
        [
            Piece {
                len: tl,
                kind: PieceKind::Line {
                    from: [0.0, 0.0],
                    dir: [cb, sb],
                },
            },
            Piece {
                len: sweep_len,
                kind: PieceKind::Arc {
                    c: [c, 0.0],
                    a0: PI / 2.0 + beta,
                    sense: -1.0,
                },
            },
            Piece {
                len: tl,
                kind: PieceKind::Line {
                    from: [tl * cb, -tl * sb],
                    dir: [-cb, sb],
                },
            },
            Piece {
                len: tl,
                kind: PieceKind::Line {
                    from: [0.0, 0.0],
                    dir: [-cb, sb],
                },
            },
            Piece {
                len: sweep_len,
                kind: PieceKind::Arc {
                    c: [-c, 0.0],
                    a0: PI / 2.0 - beta,
                    sense: 1.0,
                },
            },
            Piece {
                len: tl,
                kind: PieceKind::Line {
                    from: [-tl * cb, -tl * sb],
                    dir: [cb, sb],
                },
            },
        ]
    }

    pub fn length(&self) -> f64 {
        self.pieces().iter().map(|p| p.len).sum()
    }

    pub fn speed(&self) -> f64 {
        self.length() / self.period
    }
}

impl ReferenceTrajectory for FigureEightReference {
    fn sample(&self, t: f64) -> RefSample {
        let v = self.speed();
        let pieces = self.pieces();
        let total = self.length();
        let mut s = (v * t.max(0.0)).rem_euclid(total);
        for piece in &pieces {
            if s < piece.len || std::ptr::eq(piece, pieces.last().unwrap()) {
                return match piece.kind {
                    PieceKind::Line { from, dir } => RefSample {
                        p: Vec3::new(from[0] + dir[0] * s, from[1] + dir[1] * s, self.alpha),
                        pd: Vec3::new(v * dir[0], v * dir[1], 0.0),
                        pdd: Vec3::zeros(),
                    },
                    PieceKind::Arc { c, a0, sense } => {
                        let r = self.radius;
                        let a = a0 + sense * s / r;
                        let w = sense * v / r;
                        let (sa, ca) = a.sin_cos();
                        RefSample {
                            p: Vec3::new(c[0] + r * ca, c[1] + r * sa, self.alpha),
                            pd: Vec3::new(-r * w * sa, r * w * ca, 0.0),
                            pdd: Vec3::new(-r * w * w * ca, -r * w * w * sa, 0.0),
                        }
                    }
                };
            }
            s -= piece.len;
        }
        unreachable!("loop returns on the last piece")
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn breakpoints(&self) -> Vec<f64> {
        let v = self.speed();
        let mut out = vec![];
        let mut s = 0.0;
        let mut lap = 0.0;
        while lap < self.horizon {
            for p in self.pieces() {
                s += p.len;
                let t = lap + s / v;
                if t < self.horizon {
                    out.push(t);
                }
            }
            s = 0.0;
            lap += self.period;
        }
        out
    }
}

/// Smooth sideways weave that starts and ends at rest.
///
/// `x` advances by `distance` along a raised-cosine speed profile; `y`
/// oscillates with `cycles` periods inside a `sin^2` envelope and the
/// platform turns through `alpha_amp` and back.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlalomReference {
    pub duration: f64,
    pub distance: f64,
    pub lateral: f64,
    pub cycles: f64,
    pub alpha_amp: f64,
}

impl SlalomReference {
    pub fn standard() -> Self {
        SlalomReference {
            duration: 12.0,
            distance: 8.0,
            lateral: 0.6,
            cycles: 2.0,
            alpha_amp: 0.5,
        }
    }
}

impl ReferenceTrajectory for SlalomReference {
    fn sample(&self, t: f64) -> RefSample {
        let tt = t.clamp(0.0, self.duration);
        let big_t = self.duration;
        let w = 2.0 * PI / big_t;
        // x: distance * (t/T - sin(w t)/(2 pi))
        let x = self.distance * (tt / big_t - (w * tt).sin() / (2.0 * PI));
        let xd = self.distance / big_t * (1.0 - (w * tt).cos());
        let xdd = self.distance / big_t * w * (w * tt).sin();
        // envelope e = sin^2(pi t / T) = (1 - cos w t) / 2
        let e = 0.5 * (1.0 - (w * tt).cos());
        let ed = 0.5 * w * (w * tt).sin();
        let edd = 0.5 * w * w * (w * tt).cos();
        let k = 2.0 * PI * self.cycles / big_t;
        let (sk, ck) = (k * tt).sin_cos();
        let y = self.lateral * e * sk;
        let yd = self.lateral * (ed * sk + e * k * ck);
        let ydd = self.lateral * (edd * sk + 2.0 * ed * k * ck - e * k * k * sk);
        let a = self.alpha_amp * e;
        let ad = self.alpha_amp * ed;
        let add = self.alpha_amp * edd;
        if t > self.duration {
            return RefSample::at_rest(Vec3::new(x, y, a));
        }
        RefSample {
            p: Vec3::new(x, y, a),
            pd: Vec3::new(xd, yd, ad),
            pdd: Vec3::new(xdd, ydd, add),
        }
    }

    fn horizon(&self) -> f64 {
        self.duration
    }
}

/// Reference rebuilt from a sampled pose sequence.
///
/// Velocities by central differences and accelerations by second central
/// differences (one-sided at the ends). Between samples the acceleration is
/// held and position and velocity follow from it, so `p_d` is continuous and
/// passes through every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledReference {
    pub times: Vec<f64>,
    pub p: Vec<Vec3>,
    pub v: Vec<Vec3>,
    pub a: Vec<Vec3>,
}

impl SampledReference {
    pub fn from_samples(times: Vec<f64>, p: Vec<Vec3>) -> Result<Self> {
        let n = times.len();
        if n < 3 || p.len() != n {
            return Err(Error::InvalidInput(
                "a sampled reference needs at least 3 samples".into(),
            ));
        }
        let h = times[1] - times[0];
        if !(h > 0.0)
            || times
                .windows(2)
                .any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0))
        {
            return Err(Error::InvalidInput(
                "sampled reference must be uniformly spaced".into(),
            ));
        }
        let mut v = vec![Vec3::zeros(); n];
        let mut a = vec![Vec3::zeros(); n];
        for k in 1..n - 1 {
            v[k] = (p[k + 1] - p[k - 1]) / (2.0 * h);
            a[k] = (p[k + 1] - 2.0 * p[k] + p[k - 1]) / (h * h);
        }
        v[0] = (-3.0 * p[0] + 4.0 * p[1] - p[2]) / (2.0 * h);
        v[n - 1] = (3.0 * p[n - 1] - 4.0 * p[n - 2] + p[n - 3]) / (2.0 * h);
        a[0] = a[1];
        a[n - 1] = a[n - 2];
        Ok(SampledReference { times, p, v, a })
    }

    pub fn from_trajectory(traj: &SimTrajectory) -> Result<Self> {
        Self::from_samples(
            traj.times.clone(),
            traj.states.iter().map(|s| s.pose()).collect(),
        )
    }
}

impl ReferenceTrajectory for SampledReference {
    fn sample(&self, t: f64) -> RefSample {
        let n = self.times.len();
        let h = self.times[1] - self.times[0];
        let k = (((t - self.times[0]) / h + 1e-9).floor().max(0.0) as usize).min(n - 1);
        let tau = (t - self.times[k]).max(0.0);
        let (a, v) = if k == n - 1 {
            (Vec3::zeros(), self.v[k])
        } else {
            (self.a[k], self.v[k])
        };
        RefSample {
            p: self.p[k] + v * tau + a * (0.5 * tau * tau),
            pd: v + a * tau,
            pdd: a,
        }
    }

    fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.times.clone()
    }
}
