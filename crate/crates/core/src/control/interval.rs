//! Closed real intervals with outward-rounded arithmetic.
//!
//! Only the operations the torque check needs: sums and products with a real
//! constant. An endpoint is moved one ulp outwards whenever its floating-point
//! evaluation was inexact, so the computed interval always contains the exact
//! real-arithmetic result.

use std::fmt;
use std::ops::{Add, Mul, Neg};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo <= hi {
            Ok(Interval { lo, hi })
        } else {
            Err(Error::InvalidInput(format!("empty interval [{lo}, {hi}]")))
        }
    }

    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    /// `[-r, r]`.
    pub fn symmetric(r: f64) -> Self {
        let r = r.abs();
        Interval { lo: -r, hi: r }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }
}

/// Round-to-nearest sum and whether it was exact (two-sum error term).
fn sum_exact(a: f64, b: f64) -> (f64, bool) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err == 0.0)
}

fn prod_exact(a: f64, b: f64) -> (f64, bool) {
    let p = a * b;
    (p, a.mul_add(b, -p) == 0.0)
}

fn down((v, exact): (f64, bool)) -> f64 {
    if exact {
        v
    } else {
        v.next_down()
    }
}

fn up((v, exact): (f64, bool)) -> f64 {
    if exact {
        v
    } else {
        v.next_up()
    }
}

impl Add for Interval {
    type Output = Interval;

    fn add(self, o: Interval) -> Interval {
        Interval {
            lo: down(sum_exact(self.lo, o.lo)),
            hi: up(sum_exact(self.hi, o.hi)),
        }
    }
}

/// `k * [a, b]`; the endpoints swap when `k < 0`.
impl Mul<Interval> for f64 {
    type Output = Interval;

    fn mul(self, x: Interval) -> Interval {
        let (a, b) = if self >= 0.0 {
            (x.lo, x.hi)
        } else {
            (x.hi, x.lo)
        };
        Interval {
            lo: down(prod_exact(self, a)),
            hi: up(prod_exact(self, b)),
        }
    }
}

impl Neg for Interval {
    type Output = Interval;

    fn neg(self) -> Interval {
        Interval {
            lo: -self.hi,
            hi: -self.lo,
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}
