//! Bounded nonlinear least squares, `min 0.5 |r(p)|^2` with `lo <= p <= hi`.
//!
//! Gauss–Newton steps damped Levenberg–Marquardt style inside a scaled trust
//! region. The Jacobian is built by forward differences (backward next to an
//! upper bound); trial points that leave the box are reflected back in and
//! then clamped, so every evaluated point is feasible.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::par::{self, Execution};

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(n: usize) -> Self {
        Bounds {
            lo: vec![f64::NEG_INFINITY; n],
            hi: vec![f64::INFINITY; n],
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *v >= *l && *v <= *h)
    }

    fn reflect(&self, p: &mut [f64]) {
        for (i, v) in p.iter_mut().enumerate() {
            let (l, h) = (self.lo[i], self.hi[i]);
            if *v > h {
                *v = h - (*v - h);
            } else if *v < l {
                *v = l + (l - *v);
            }
            *v = v.clamp(l, h);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustRegionOptions {
    pub max_iter: usize,
    /// Stop when the relative loss decrease of an accepted step falls below this.
    pub ftol: f64,
    /// Stop when the scaled step is this small relative to the scaled iterate.
    pub xtol: f64,
    /// Stop when the scaled gradient is this small.
    pub gtol: f64,
    /// Relative finite-difference step.
    pub fd_step: f64,
    /// Absolute floor on the finite-difference step.
    pub fd_floor: f64,
    /// Initial radius as a multiple of the scaled initial point norm.
    pub initial_radius: f64,
    pub exec: Execution,
}

impl Default for TrustRegionOptions {
    fn default() -> Self {
        TrustRegionOptions {
            max_iter: 200,
            ftol: 1e-10,
            xtol: 1e-10,
            gtol: 1e-14,
            fd_step: 1e-6,
            fd_floor: 1e-8,
            initial_radius: 100.0,
            exec: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Ftol,
    Xtol,
    Gtol,
    ZeroResidual,
    MaxIter,
    /// The trust region collapsed without any acceptable step.
    Stalled,
}

impl Termination {
    pub fn converged(self) -> bool {
        !matches!(self, Termination::MaxIter | Termination::Stalled)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub params: Vec<f64>,
    /// Sum of squared residuals at `params`.
    pub loss: f64,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// Loss at the initial point and after every accepted step.
    pub loss_history: Vec<f64>,
    /// Residual Jacobian at the returned point.
    pub jacobian: DMatrix<f64>,
}

impl FitReport {
    pub fn converged(&self) -> bool {
        self.termination.converged()
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Forward-difference Jacobian of `f` at `p` (columns evaluated independently).
pub fn fd_jacobian<F>(
    f: &F,
    p: &[f64],
    r0: &[f64],
    bounds: &Bounds,
    opts: &TrustRegionOptions,
) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let n = p.len();
    let m = r0.len();
    let cols = par::map_range(opts.exec, n, |j| -> Result<Vec<f64>> {
        let mut h = (opts.fd_step * p[j].abs()).max(opts.fd_floor);
        if p[j] + h > bounds.hi[j] {
            h = -h;
        }
        let mut pp = p.to_vec();
        pp[j] += h;
        let h = pp[j] - p[j];
        let rj = f(&pp)?;
        if rj.len() != m {
            return Err(Error::Fit(
                "residual length changed between evaluations".into(),
            ));
        }
        Ok(rj.iter().zip(r0).map(|(a, b)| (a - b) / h).collect())
    });
    let mut jac = DMatrix::zeros(m, n);
    for (j, c) in cols.into_iter().enumerate() {
        let c = c?;
        for i in 0..m {
            jac[(i, j)] = c[i];
        }
    }
    Ok(jac)
}

/// Scaled trust-region step: minimise `|r + J d|` subject to `|D d| <= radius`.
fn tr_step(jac: &DMatrix<f64>, r: &DVector<f64>, diag: &DVector<f64>, radius: f64) -> DVector<f64> {
    let n = jac.ncols();
    let mut js = jac.clone();
    for j in 0..n {
        js.column_mut(j).scale_mut(1.0 / diag[j]);
    }
    let a = js.transpose() * &js;
    let b = js.transpose() * r;
    let eig = a.symmetric_eigen();
    let vb = eig.eigenvectors.transpose() * &b;
    let sig = eig.eigenvalues.map(|s| s.max(0.0));
    let smax = sig.max();
    let tiny = smax * 1e-14 + f64::MIN_POSITIVE;
    let z_norm = |lam: f64| -> f64 {
        (0..n)
            .map(|i| {
                let d = sig[i] + lam;
                if d <= tiny {
                    0.0
                } else {
                    (vb[i] / d).powi(2)
                }
            })
            .sum::<f64>()
            .sqrt()
    };
    let z_of = |lam: f64| -> DVector<f64> {
        let w = DVector::from_fn(n, |i, _| {
            let d = sig[i] + lam;
            if d <= tiny {
                0.0
            } else {
                -vb[i] / d
            }
        });
        &eig.eigenvectors * w
    };

    let lam = if z_norm(0.0) <= radius {
        0.0
    } else {
        // |z(lam)| decreases monotonically: bracket, then Newton on
        // 1/|z| - 1/radius with bisection as the safeguard.
        let mut lo = 0.0f64;
        let mut hi = b.norm() / radius;
        while z_norm(hi) > radius {
            hi *= 2.0;
        }
        let mut lam = hi;
        for _ in 0..200 {
            let phi = z_norm(lam) - radius;
            if phi.abs() <= 1e-10 * radius {
                break;
            }
            if phi > 0.0 {
                lo = lam;
            } else {
                hi = lam;
            }
            // Newton step on the secular equation
            let zn = z_norm(lam);
            let dz: f64 = -(0..n)
                .map(|i| {
                    let d = sig[i] + lam;
                    if d <= tiny {
                        0.0
                    } else {
                        vb[i] * vb[i] / d.powi(3)
                    }
                })
                .sum::<f64>()
                / zn.max(f64::MIN_POSITIVE);
            let next = lam - (1.0 / zn - 1.0 / radius) / (-dz / (zn * zn));
            lam = if next > lo && next < hi && next.is_finite() {
                next
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        lam
    };
    let z = z_of(lam);
    DVector::from_fn(n, |i, _| z[i] / diag[i])
}

/// Minimise `sum r_i(p)^2` over the box. `residual_fn` must be a pure function
/// of `p`; it may be called concurrently. An error from `residual_fn` at a
/// trial point rejects that step; an error at `p0` is returned.
pub fn fit_trust_region<F>(
    residual_fn: F,
    p0: &[f64],
    bounds: &Bounds,
    opts: &TrustRegionOptions,
) -> Result<FitReport>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let n = p0.len();
    if bounds.lo.len() != n || bounds.hi.len() != n {
        return Err(Error::Fit(
            "bounds and initial guess differ in length".into(),
        ));
    }
    if !bounds.contains(p0) {
        return Err(Error::Fit(format!("initial guess {p0:?} outside bounds")));
    }
    let mut p = p0.to_vec();
    let r0 = residual_fn(&p)?;
    if r0.is_empty() || !r0.iter().all(|v| v.is_finite()) {
        return Err(Error::Fit(
            "residuals at the initial guess are not finite".into(),
        ));
    }
    let mut r = DVector::from_vec(r0);
    let mut loss = r.norm_squared();
    let mut evaluations = 1;
    let mut jac = fd_jacobian(&residual_fn, &p, r.as_slice(), bounds, opts)?;
    evaluations += n;
    let col_norms = |j: &DMatrix<f64>| DVector::from_fn(n, |i, _| j.column(i).norm());
    let mut diag = col_norms(&jac).map(|v| if v > 0.0 { v } else { 1.0 });
    let pnorm = |p: &[f64], d: &DVector<f64>| {
        p.iter()
            .zip(d.iter())
            .map(|(a, b)| (a * b).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let mut radius = {
        let s = pnorm(&p, &diag);
        if s > 0.0 {
            opts.initial_radius * s
        } else {
            opts.initial_radius
        }
    };
    let mut history = vec![loss];
    let mut iterations = 0;
    let mut termination = Termination::MaxIter;

    while iterations < opts.max_iter {
        if loss == 0.0 {
            termination = Termination::ZeroResidual;
            break;
        }
        let g = jac.transpose() * &r;
        let gscaled = (0..n).map(|i| (g[i] / diag[i]).abs()).fold(0.0, f64::max);
        if gscaled <= opts.gtol * loss.sqrt() {
            termination = Termination::Gtol;
            break;
        }
        iterations += 1;
        let d = tr_step(&jac, &r, &diag, radius);
        let mut trial: Vec<f64> = p.iter().zip(d.iter()).map(|(a, b)| a + b).collect();
        bounds.reflect(&mut trial);
        let s = DVector::from_fn(n, |i, _| trial[i] - p[i]);
        let step_norm = (0..n).map(|i| (diag[i] * s[i]).powi(2)).sum::<f64>().sqrt();
        let predicted = loss - (&r + &jac * &s).norm_squared();
        let r_trial = residual_fn(&trial)
            .ok()
            .filter(|v| v.len() == r.len() && v.iter().all(|x| x.is_finite()));
        evaluations += 1;
        let new_loss = r_trial.as_ref().map_or(f64::INFINITY, |v| sum_sq(v));
        let actual = loss - new_loss;
        let rho = if predicted > 0.0 {
            actual / predicted
        } else {
            -1.0
        };

        if rho < 0.25 {
            radius = 0.25 * radius.min(step_norm.max(f64::MIN_POSITIVE));
        } else if rho > 0.75 && step_norm >= 0.99 * radius {
            radius = 2.0 * step_norm.max(radius);
        }

        let accepted = rho > 1e-4 && actual > 0.0;
        if accepted {
            let rel_decrease = actual / loss;
            p = trial;
            r = DVector::from_vec(r_trial.expect("accepted steps have residuals"));
            loss = new_loss;
            history.push(loss);
            jac = fd_jacobian(&residual_fn, &p, r.as_slice(), bounds, opts)?;
            evaluations += n;
            let cn = col_norms(&jac);
            for i in 0..n {
                diag[i] = diag[i].max(cn[i]);
            }
            if rel_decrease <= opts.ftol && predicted / (loss + actual) <= opts.ftol {
                termination = Termination::Ftol;
                break;
            }
        }
        if step_norm <= opts.xtol * (pnorm(&p, &diag) + opts.xtol) {
            termination = Termination::Xtol;
            break;
        }
        if radius <= f64::EPSILON * pnorm(&p, &diag).max(1e-300) {
            termination = if accepted {
                Termination::Xtol
            } else {
                Termination::Stalled
            };
            break;
        }
    }
    Ok(FitReport {
        params: p,
        loss,
        residuals: r.as_slice().to_vec(),
        iterations,
        evaluations,
        termination,
        loss_history: history,
        jacobian: jac,
    })
}

/// Ratio of extreme singular values of `jac` (infinite when rank deficient).
pub fn condition_number(jac: &DMatrix<f64>) -> f64 {
    let sv = jac.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> TrustRegionOptions {
        TrustRegionOptions {
            exec: Execution::Sequential,
            ..Default::default()
        }
    }

    #[test]
    fn linear_least_squares() {
        // overdetermined, exact solution (2, -3)
        let f = |p: &[f64]| -> Result<Vec<f64>> {
            Ok(vec![p[0] + p[1] + 1.0, p[0] - p[1] - 5.0, 2.0 * p[0] - 4.0])
        };
        let rep = fit_trust_region(f, &[0.0, 0.0], &Bounds::unbounded(2), &opts()).unwrap();
        assert!(rep.converged());
        assert!(rep.iterations <= 3, "{}", rep.iterations);
        assert!(
            (rep.params[0] - 2.0).abs() < 1e-8 && (rep.params[1] + 3.0).abs() < 1e-8,
            "{:?}",
            rep.params
        );
    }

    #[test]
    fn rosenbrock() {
        let f =
            |p: &[f64]| -> Result<Vec<f64>> { Ok(vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]]) };
        let rep = fit_trust_region(f, &[-1.2, 1.0], &Bounds::unbounded(2), &opts()).unwrap();
        assert!(rep.converged(), "{:?}", rep.termination);
        assert!(
            (rep.params[0] - 1.0).abs() < 1e-8 && (rep.params[1] - 1.0).abs() < 1e-8,
            "{:?}",
            rep.params
        );
        assert!(rep.loss_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn active_bound() {
        // unconstrained minimum at p = -1, box [0, 5]
        let f = |p: &[f64]| -> Result<Vec<f64>> { Ok(vec![p[0] + 1.0]) };
        let b = Bounds {
            lo: vec![0.0],
            hi: vec![5.0],
        };
        let rep = fit_trust_region(f, &[3.0], &b, &opts()).unwrap();
        assert!(
            rep.params[0] >= 0.0 && rep.params[0] < 1e-6,
            "{:?}",
            rep.params
        );
    }

    #[test]
    fn failure_at_guess_is_error() {
        let f = |_: &[f64]| -> Result<Vec<f64>> { Ok(vec![f64::NAN]) };
        assert!(fit_trust_region(f, &[1.0], &Bounds::unbounded(1), &opts()).is_err());
        let g = |p: &[f64]| -> Result<Vec<f64>> { Ok(vec![p[0]]) };
        let b = Bounds {
            lo: vec![0.0],
            hi: vec![1.0],
        };
        assert!(fit_trust_region(g, &[2.0], &b, &opts()).is_err());
    }

    #[test]
    fn failing_trial_points_are_rejected() {
        // residual undefined for p > 2; minimum at p = 1
        let f = |p: &[f64]| -> Result<Vec<f64>> {
            if p[0] > 2.0 {
                Err(Error::Fit("outside model domain".into()))
            } else {
                Ok(vec![(p[0] - 1.0) * 3.0, (p[0] - 1.0).powi(3)])
            }
        };
        let rep = fit_trust_region(f, &[-20.0], &Bounds::unbounded(1), &opts()).unwrap();
        assert!((rep.params[0] - 1.0).abs() < 1e-6, "{:?}", rep.params);
    }

    #[test]
    fn parallel_matches_sequential() {
        let f = |p: &[f64]| -> Result<Vec<f64>> {
            Ok((0..20)
                .map(|i| {
                    let t = i as f64 * 0.1;
                    p[0] * (-p[1] * t).exp() - 2.0 * (-0.7 * t).exp()
                })
                .collect())
        };
        let a = fit_trust_region(f, &[1.0, 0.1], &Bounds::unbounded(2), &opts()).unwrap();
        let b = fit_trust_region(
            f,
            &[1.0, 0.1],
            &Bounds::unbounded(2),
            &TrustRegionOptions::default(),
        )
        .unwrap();
        assert_eq!(a.params, b.params);
        assert!((a.params[1] - 0.7).abs() < 1e-8);
    }
}
