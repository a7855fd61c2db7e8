//! Adaptive Dormand–Prince 5(4) integrator.
//!
//! The right-hand side is assumed smooth on `[t0, t1]`; callers split the
//! horizon at every discontinuity (zero-order-hold switch, disturbance edge)
//! and integrate piecewise, carrying the step size across pieces.

use nalgebra::SVector;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Smallest admissible step before reporting [`Error::StepUnderflow`].
    pub h_min: f64,
    /// Upper bound on the step size (`f64::INFINITY` for none).
    pub h_max: f64,
    /// Per-call cap on attempted steps.
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-9,
            atol: 1e-12,
            h_min: 1e-12,
            h_max: f64::INFINITY,
            max_steps: 1_000_000,
        }
    }
}

impl OdeOptions {
    pub fn with_tol(rtol: f64, atol: f64) -> Self {
        OdeOptions {
            rtol,
            atol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

impl OdeStats {
    pub fn merge(&mut self, o: &OdeStats) {
        self.accepted += o.accepted;
        self.rejected += o.rejected;
        self.evaluations += o.evaluations;
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// fifth minus fourth order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrate `y' = f(t, y)` from `t0` to `t1` (`t1 >= t0`), landing exactly
/// on `t1`.
///
/// `h` is the step-size guess on entry (non-positive asks for an automatic
/// initial step) and the last proposed step on exit. `on_step` sees every
/// accepted step `(t, y)`, including the final one at `t1`.
pub fn integrate<const N: usize, F, S>(
    mut f: F,
    t0: f64,
    y0: SVector<f64, N>,
    t1: f64,
    opts: &OdeOptions,
    h: &mut f64,
    stats: &mut OdeStats,
    mut on_step: S,
) -> Result<SVector<f64, N>>
where
    F: FnMut(f64, &SVector<f64, N>) -> Result<SVector<f64, N>>,
    S: FnMut(f64, &SVector<f64, N>) -> Result<()>,
{
    if !(t1 >= t0) {
        return Err(Error::InvalidInput(format!(
            "integration interval [{t0}, {t1}] is reversed"
        )));
    }
    if t1 == t0 {
        return Ok(y0);
    }
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y)?;
    stats.evaluations += 1;
    if *h <= 0.0 || !h.is_finite() {
        *h = initial_step(&mut f, t, &y, &k1, opts, stats)?;
    }
    let mut last_rejected = false;
    let mut steps = 0usize;
    loop {
        let remaining = t1 - t;
        let mut step = h.min(opts.h_max);
        // land on t1 exactly; also avoid leaving a sliver
        let last = step >= remaining * (1.0 - 1e-12);
        if last {
            step = remaining;
        }
        if step < opts.h_min && !last {
            return Err(Error::StepUnderflow { t, h: step });
        }
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::StepUnderflow { t, h: step });
        }

        let k2 = f(t + C2 * step, &(y + k1 * (step * A21)))?;
        let k3 = f(t + C3 * step, &(y + (k1 * A31 + k2 * A32) * step))?;
        let k4 = f(
            t + C4 * step,
            &(y + (k1 * A41 + k2 * A42 + k3 * A43) * step),
        )?;
        let k5 = f(
            t + C5 * step,
            &(y + (k1 * A51 + k2 * A52 + k3 * A53 + k4 * A54) * step),
        )?;
        let k6 = f(
            t + step,
            &(y + (k1 * A61 + k2 * A62 + k3 * A63 + k4 * A64 + k5 * A65) * step),
        )?;
        let y_new = y + (k1 * A71 + k3 * A73 + k4 * A74 + k5 * A75 + k6 * A76) * step;
        let k7 = f(t + step, &y_new)?;
        stats.evaluations += 6;

        let e = (k1 * E1 + k3 * E3 + k4 * E4 + k5 * E5 + k6 * E6 + k7 * E7) * step;
        let err = error_norm(&e, &y, &y_new, opts);

        if !err.is_finite() {
            if y_new.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { t });
            }
            // shrink hard and retry; a genuinely blown-up state ends in underflow
            stats.rejected += 1;
            last_rejected = true;
            *h = step * 0.1;
            if *h < opts.h_min {
                return Err(Error::NonFinite { t });
            }
            continue;
        }

        if err <= 1.0 {
            stats.accepted += 1;
            t = if last { t1 } else { t + step };
            y = y_new;
            k1 = k7;
            on_step(t, &y)?;
            let mut fac = 0.9 * err.powf(-0.2);
            fac = fac.clamp(0.2, if last_rejected { 1.0 } else { 10.0 });
            if !last || fac * step > *h {
                *h = step * fac;
            }
            last_rejected = false;
            if last {
                return Ok(y);
            }
        } else {
            stats.rejected += 1;
            last_rejected = true;
            let fac = (0.9 * err.powf(-0.2)).max(0.2);
            *h = step * fac;
            if *h < opts.h_min {
                return Err(Error::StepUnderflow { t, h: *h });
            }
        }
    }
}

fn error_norm<const N: usize>(
    e: &SVector<f64, N>,
    y0: &SVector<f64, N>,
    y1: &SVector<f64, N>,
    opts: &OdeOptions,
) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let sc = opts.atol + opts.rtol * y0[i].abs().max(y1[i].abs());
        acc += (e[i] / sc).powi(2);
    }
    (acc / N as f64).sqrt()
}

fn rms_scaled<const N: usize>(v: &SVector<f64, N>, y: &SVector<f64, N>, opts: &OdeOptions) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let sc = opts.atol + opts.rtol * y[i].abs();
        acc += (v[i] / sc).powi(2);
    }
    (acc / N as f64).sqrt()
}

/// Starting step from the local derivative scale.
fn initial_step<const N: usize, F>(
    f: &mut F,
    t: f64,
    y: &SVector<f64, N>,
    k1: &SVector<f64, N>,
    opts: &OdeOptions,
    stats: &mut OdeStats,
) -> Result<f64>
where
    F: FnMut(f64, &SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    let d0 = rms_scaled(y, y, opts);
    let d1 = rms_scaled(k1, y, opts);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let k2 = f(t + h0, &(y + k1 * h0))?;
    stats.evaluations += 1;
    let d2 = rms_scaled(&(k2 - k1), y, opts) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(opts.h_max))
}
