//! Descent on the mass sphere `{ ||u||_2^2 = c }` shared by both solvers.
//!
//! The iteration is a preconditioned nonlinear conjugate gradient
//! (Polak-Ribiere with nonnegative beta and restarts) in the tangent space of
//! the sphere, with the retraction `u -> sqrt(c / mass) u`. An optional
//! projection maps every retracted point onto an admissible subset (the
//! Pohozaev manifold in the supercritical case); the step is then measured
//! on the projected energy.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::Spectral;
use crate::grid::{Grid, RealField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    /// Stop once `||I'(u) - lambda u||_2 <= tol ||u||_2 max(1, |lambda|)`.
    pub tol: f64,
    pub max_iter: usize,
    /// First trial step length.
    pub step0: f64,
    /// Precondition the residual with `(shift - Delta)^{-1}`, where the
    /// shift is the larger of `precondition_shift` and `-lambda`.
    pub precondition: bool,
    pub precondition_shift: f64,
    /// Conjugate-gradient acceleration; plain preconditioned descent if false.
    pub conjugate: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 3000, step0: 1.0, precondition: true, precondition_shift: 1.0, conjugate: true }
    }
}

/// Outcome of a constrained solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub u: Option<RealField>,
    pub mass: f64,
    pub energy: f64,
    pub lambda: f64,
    pub pohozaev: f64,
    pub kinetic: f64,
    pub grad_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Energy after every accepted step, starting with the initial point.
    pub energy_trace: Vec<f64>,
    /// Fiber parameter used by each projection (supercritical solves).
    pub t_history: Vec<f64>,
}

impl SolveReport {
    pub fn field(&self) -> &RealField {
        self.u.as_ref().expect("report carries its field")
    }

    /// True if the energy trace never increases by more than `rel` relative.
    pub fn is_monotone(&self, rel: f64) -> bool {
        self.energy_trace.windows(2).all(|w| w[1] <= w[0] + rel * w[0].abs().max(1.0))
    }
}

/// Energy with gradient at an admissible point.
pub(crate) struct Point {
    pub u: Vec<f64>,
    pub energy: f64,
    pub grad: Vec<f64>,
    pub t: f64,
}

pub(crate) trait Objective {
    fn grid(&self) -> &Grid;
    fn spectral(&self) -> &Spectral;
    fn mass(&self) -> f64;
    /// Energy and gradient at `u`.
    fn evaluate(&self, u: &[f64]) -> Result<(f64, Vec<f64>)>;
    /// Maps a point of the sphere onto the admissible set, returning the
    /// projected point and the fiber parameter used (1 when trivial).
    fn admissible(&self, w: Vec<f64>) -> Result<(Vec<f64>, f64)> {
        Ok((w, 1.0))
    }
}

fn dot(a: &[f64], b: &[f64], hd: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * hd
}

pub(crate) fn point<O: Objective>(obj: &O, w: Vec<f64>) -> Result<Point> {
    let (u, t) = obj.admissible(w)?;
    let (energy, grad) = obj.evaluate(&u)?;
    Ok(Point { u, energy, grad, t })
}

/// Tangential residual `r = g - lambda u` with `lambda = <g, u> / c`.
pub(crate) fn residual(pt: &Point, c: f64, hd: f64) -> (Vec<f64>, f64) {
    let lambda = dot(&pt.grad, &pt.u, hd) / c;
    let r = pt.grad.iter().zip(&pt.u).map(|(g, u)| g - lambda * u).collect();
    (r, lambda)
}

fn retract(u: &[f64], p: &[f64], tau: f64, c: f64, hd: f64) -> Vec<f64> {
    let mut w: Vec<f64> = u.iter().zip(p).map(|(a, b)| a + tau * b).collect();
    let m = dot(&w, &w, hd);
    let s = (c / m).sqrt();
    w.iter_mut().for_each(|v| *v *= s);
    w
}

/// Preconditioned tangent direction `z = P r - mu P u` with `<z, u> = 0`.
fn precondition(spec: &Spectral, r: &[f64], u: &[f64], shift: f64, hd: f64) -> Vec<f64> {
    let packed: Vec<Complex64> = r.iter().zip(u).map(|(a, b)| Complex64::new(*a, *b)).collect();
    let mut hat = spec.forward(&packed);
    hat.iter_mut().zip(spec.k2()).for_each(|(v, k2)| *v /= shift + k2);
    let back = spec.inverse(hat);
    let pr: Vec<f64> = back.iter().map(|v| v.re).collect();
    let pu: Vec<f64> = back.iter().map(|v| v.im).collect();
    let mu = dot(&pr, u, hd) / dot(&pu, u, hd);
    pr.iter().zip(&pu).map(|(a, b)| a - mu * b).collect()
}

fn norm(v: &[f64], hd: f64) -> f64 {
    dot(v, v, hd).sqrt()
}

/// Backtracking search along the retraction of `p` with one quadratic
/// refinement. When the energy change is at round-off level the step is
/// judged by the decrease of the tangential residual instead.
#[allow(clippy::too_many_arguments)]
fn line_search<O: Objective>(
    obj: &O,
    cur: &Point,
    p: &[f64],
    slope: f64,
    res0: f64,
    tau0: f64,
    c: f64,
    hd: f64,
) -> Result<Option<(f64, Point)>> {
    let e0 = cur.energy;
    let noise = 1e-12 * e0.abs().max(1e-12);
    let trial_at = |tau: f64| -> Result<Option<Point>> {
        match point(obj, retract(&cur.u, p, tau, c, hd)) {
            Ok(pt) => Ok(Some(pt)),
            Err(Error::Bracket(_)) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let mut tau = tau0;
    for _ in 0..40 {
        let Some(trial) = trial_at(tau)? else {
            tau *= 0.5;
            continue;
        };
        let de = trial.energy - e0;
        if de.abs() <= noise {
            let (rt, _) = residual(&trial, c, hd);
            if norm(&rt, hd) < res0 {
                return Ok(Some((tau, trial)));
            }
            tau *= 0.5;
            continue;
        }
        let curv = (de - slope * tau) / (tau * tau);
        if de <= 1e-4 * tau * slope {
            if curv > 0.0 {
                let tq = (-slope / (2.0 * curv)).clamp(0.1 * tau, 10.0 * tau);
                if tq > 1.5 * tau || tq < 0.67 * tau {
                    if let Some(alt) = trial_at(tq)? {
                        if alt.energy < trial.energy && alt.energy - e0 <= 1e-4 * tq * slope {
                            return Ok(Some((tq, alt)));
                        }
                    }
                }
            }
            return Ok(Some((tau, trial)));
        }
        let tq = if curv > 0.0 { -slope / (2.0 * curv) } else { 0.5 * tau };
        tau = tq.clamp(0.1 * tau, 0.5 * tau);
    }
    Ok(None)
}

/// Runs the descent from a point of the sphere. Returns the final admissible
/// point and a report whose field and functional values are left for the
/// caller to fill in.
pub(crate) fn descend<O: Objective>(obj: &O, start: Vec<f64>, opts: &SolveOptions) -> Result<(Point, SolveReport)> {
    let c = obj.mass();
    let hd = obj.grid().cell_volume();
    let mut cur = point(obj, start)?;
    let mut t_history = vec![cur.t];
    let mut trace = vec![cur.energy];
    let (mut r, mut lambda) = residual(&cur, c, hd);
    let mut res = norm(&r, hd);
    // previous direction, <z, r> and residual for the conjugate update
    let mut prev: Option<(Vec<f64>, f64, Vec<f64>)> = None;
    let mut tau_prev = opts.step0;
    let mut slope_prev = 0.0;
    let mut iterations = 0;
    let mut since_restart = 0;
    let stop = |res: f64, lambda: f64| res <= opts.tol * c.sqrt() * lambda.abs().max(1.0);
    let mut converged = stop(res, lambda);

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let z = if opts.precondition {
            precondition(obj.spectral(), &r, &cur.u, opts.precondition_shift.max(-lambda), hd)
        } else {
            r.clone()
        };
        let zr = dot(&z, &r, hd);
        let mut p: Vec<f64> = z.iter().map(|v| -v).collect();
        let mut conjugate = false;
        if let (true, Some((p_old, zr_old, r_old))) = (opts.conjugate && since_restart < 50, &prev) {
            let beta = ((zr - dot(&z, r_old, hd)) / zr_old).max(0.0);
            if beta > 0.0 {
                // transport the old direction into the current tangent space
                let pu = dot(p_old, &cur.u, hd) / c;
                for i in 0..p.len() {
                    p[i] += beta * (p_old[i] - pu * cur.u[i]);
                }
                conjugate = true;
            }
        }
        let mut slope = dot(&r, &p, hd);
        if slope >= 0.0 {
            p = z.iter().map(|v| -v).collect();
            slope = -zr;
            conjugate = false;
        }
        if !conjugate {
            since_restart = 0;
        }
        let guess = if slope_prev < 0.0 { tau_prev * (slope_prev / slope).clamp(0.1, 10.0) } else { opts.step0 };
        let Some((tau, next)) = line_search(obj, &cur, &p, slope, res, guess.max(1e-12), c, hd)? else {
            if prev.is_some() {
                // restart from the preconditioned gradient before giving up
                prev = None;
                slope_prev = 0.0;
                tau_prev = opts.step0;
                continue;
            }
            break;
        };
        since_restart += 1;
        cur = next;
        let (r_new, l_new) = residual(&cur, c, hd);
        let r_old = std::mem::replace(&mut r, r_new);
        lambda = l_new;
        res = norm(&r, hd);
        trace.push(cur.energy);
        t_history.push(cur.t);
        prev = Some((p, zr, r_old));
        tau_prev = tau;
        slope_prev = slope;
        converged = stop(res, lambda);
    }
    let report = SolveReport {
        u: None,
        mass: dot(&cur.u, &cur.u, hd),
        energy: cur.energy,
        lambda,
        pohozaev: f64::NAN,
        kinetic: f64::NAN,
        grad_residual: res,
        iterations,
        converged,
        energy_trace: trace,
        t_history,
    };
    Ok((cur, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `E(u) = 1/2 ||u'||^2 + 1/2 int x^2 u^2`, whose minimizer at mass `c`
    /// is the Gaussian `exp(-x^2 / 2)` with `lambda = 1` and `E = c / 2`.
    struct Oscillator {
        spectral: Spectral,
        x2: Vec<f64>,
        c: f64,
    }

    impl Oscillator {
        fn new(c: f64) -> Self {
            let g = Grid::new(1, 10.0, 128).unwrap();
            Self { spectral: Spectral::new(g), x2: g.axis().iter().map(|x| x * x).collect(), c }
        }
    }

    impl Objective for Oscillator {
        fn grid(&self) -> &Grid {
            self.spectral.grid()
        }
        fn spectral(&self) -> &Spectral {
            &self.spectral
        }
        fn mass(&self) -> f64 {
            self.c
        }
        fn evaluate(&self, u: &[f64]) -> Result<(f64, Vec<f64>)> {
            let hd = self.grid().cell_volume();
            let lap = self.spectral.neg_laplacian(u);
            let grad: Vec<f64> = lap.iter().zip(u).zip(&self.x2).map(|((l, v), x2)| l + x2 * v).collect();
            Ok((0.5 * dot(&grad, u, hd), grad))
        }
    }

    fn start(obj: &Oscillator) -> Vec<f64> {
        let g = *obj.grid();
        let w: Vec<f64> = g.axis().iter().map(|x| (-(x - 1.0).powi(2) / 8.0).exp() * (1.0 + 0.3 * x.sin())).collect();
        let s = (obj.c / dot(&w, &w, g.cell_volume())).sqrt();
        w.iter().map(|v| v * s).collect()
    }

    #[test]
    fn finds_the_oscillator_ground_state() {
        for conjugate in [true, false] {
            let obj = Oscillator::new(2.0);
            let opts = SolveOptions { conjugate, tol: 1e-10, ..Default::default() };
            let (pt, rep) = descend(&obj, start(&obj), &opts).unwrap();
            assert!(rep.converged, "conjugate = {conjugate}: {} iterations", rep.iterations);
            assert!((rep.lambda - 1.0).abs() < 1e-9, "lambda {}", rep.lambda);
            assert!((rep.energy - 1.0).abs() < 1e-9, "energy {}", rep.energy);
            assert!(rep.is_monotone(1e-12));
            let hd = obj.grid().cell_volume();
            assert!((dot(&pt.u, &pt.u, hd) - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn stops_at_the_iteration_cap() {
        let obj = Oscillator::new(1.0);
        let opts =
            SolveOptions { max_iter: 2, tol: 1e-14, precondition: false, conjugate: false, ..Default::default() };
        let (_, rep) = descend(&obj, start(&obj), &opts).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 2);
        assert_eq!(rep.energy_trace.len(), 3);
    }
}
