//! Above the mass-critical exponent `I` is unbounded below on the sphere and
//! the ground level is `m(c) = inf I` over the Pohozaev manifold
//! `M(c) = { u in S(c) : J(u) = 0 }`. Every fiber `t -> u^t` crosses `M(c)`
//! exactly once; the solver keeps its iterate there by re-projecting along
//! the fiber after every step.

use std::cell::Cell;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coeff::log_space;
use crate::error::{Error, Result};
use crate::fft::Spectral;
use crate::functionals::{fiber_rescale, Discretization, Functional};
use crate::grid::{normalize_mass, Grid, RealField};
use crate::optim::{descend, Objective, SolveOptions, SolveReport};
use crate::problem::{ProblemSpec, Regime};
use crate::samples::random_mixture;
use crate::subcritical::{default_init, discretization_at, finish, warm_start, BoxScaling};

/// Iteration cap of the bracketed root search.
const ROOT_MAX_ITER: usize = 200;

/// `J(u^t) / t^2 = K - h(t, u)` as a function of `s = ln t`.
struct FiberEquation<'a> {
    f: &'a Functional,
    kinetic: f64,
    density: Vec<f64>,
    q: f64,
    p: f64,
}

impl<'a> FiberEquation<'a> {
    fn new(f: &'a Functional, u: &RealField) -> Result<Self> {
        f.spec().require(Regime::Supercritical)?;
        f.grid().check_same(&u.grid)?;
        let kinetic = f.kinetic(&u.values);
        let density = f.power_density(&u.values);
        if !(kinetic > 0.0) || density.iter().all(|&v| v == 0.0) {
            return Err(Error::Domain("fiber of the zero field has no Pohozaev point".into()));
        }
        Ok(Self { f, kinetic, density, q: f.spec().fiber_exponent(), p: f.spec().p })
    }

    fn h(&self, t: f64) -> f64 {
        let nl = self.f.fiber_nonlocal(&self.density, t);
        t.powf(self.q - 2.0) * nl.p / (2.0 * self.p)
    }

    fn eval(&self, s: f64) -> f64 {
        self.kinetic - self.h(s.exp())
    }

    /// Closed form, valid when both weights are constant.
    fn closed_form(&self) -> Option<f64> {
        let nl = self.f.fiber_nonlocal(&self.density, 1.0);
        (nl.p > 0.0).then(|| (2.0 * self.p * self.kinetic / nl.p).powf(1.0 / (self.q - 2.0)))
    }

    fn tolerance(&self) -> f64 {
        1e-10 * (1.0 + self.kinetic)
    }
}

/// Brent's method on a sign-changing bracket `[a, b]`, stopping once
/// `|g| <= ftol` or the bracket is at round-off width.
fn brent(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64, ftol: f64) -> Option<f64> {
    let (mut c, mut fc) = (a, fa);
    let (mut d, mut e) = (b - a, b - a);
    for _ in 0..ROOT_MAX_ITER {
        if fb.signum() == fc.signum() {
            (c, fc) = (a, fa);
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            (a, fa) = (b, fb);
            (b, fb) = (c, fc);
            (c, fc) = (a, fa);
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 1e-15;
        let m = 0.5 * (c - b);
        if fb.abs() <= ftol || m.abs() <= tol {
            return Some(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut num, mut den) = if a == c {
                (2.0 * m * s, 1.0 - s)
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                (s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0)), (qa - 1.0) * (r - 1.0) * (s - 1.0))
            };
            if num > 0.0 {
                den = -den;
            } else {
                num = -num;
            }
            if 2.0 * num < (3.0 * m * den - (tol * den).abs()).min((e * den).abs()) {
                e = d;
                d = num / den;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        (a, fa) = (b, fb);
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = g(b);
    }
    None
}

fn numeric_root(eq: &FiberEquation, guess: f64) -> Result<f64> {
    let g = |s: f64| eq.eval(s);
    let s0 = if guess > 0.0 && guess.is_finite() { guess.ln() } else { 0.0 };
    let f0 = g(s0);
    if f0.abs() * s0.exp().powi(2) <= eq.tolerance() {
        return Ok(s0.exp());
    }
    // J > 0 for small t and J < 0 for large t: walk toward the sign change
    let dir = if f0 > 0.0 { 1.0 } else { -1.0 };
    let (mut lo, mut flo) = (s0, f0);
    let mut step = std::f64::consts::LN_2;
    let mut bracket = None;
    for _ in 0..80 {
        let s = lo + dir * step;
        let fs = g(s);
        if !fs.is_finite() {
            break;
        }
        if fs.signum() != flo.signum() {
            bracket = Some((lo, flo, s, fs));
            break;
        }
        (lo, flo) = (s, fs);
        step *= 1.5;
    }
    let Some((a, fa, b, fb)) = bracket else {
        let probes: Vec<String> = [-8.0, -2.0, 0.0, 2.0, 8.0]
            .iter()
            .map(|&s: &f64| format!("t={:.3e}: J/t^2={:.3e}", s.exp(), g(s)))
            .collect();
        return Err(Error::Bracket(format!("no sign change of J(u^t) found; {}", probes.join(", "))));
    };
    // the tolerance is on J = t^2 (J / t^2); scale it at the bracket
    let t_scale = a.max(b).exp().powi(2);
    let s = brent(g, a, b, fa, fb, eq.tolerance() / t_scale)
        .ok_or_else(|| Error::Bracket("root search did not converge".into()))?;
    Ok(s.exp())
}

/// The unique `t_u > 0` with `J(u^{t_u}) = 0`. Closed form when both
/// weights are constant, bracketing plus Brent iteration otherwise.
pub fn fiber_root(f: &Functional, u: &RealField) -> Result<f64> {
    let eq = FiberEquation::new(f, u)?;
    let guess = eq.closed_form();
    let (wx, wy) = f.weights();
    if wx.is_constant() && wy.is_constant() {
        return guess.ok_or_else(|| Error::Bracket("nonlocal term vanishes, J(u^t) > 0 for all t".into()));
    }
    numeric_root(&eq, guess.unwrap_or(1.0))
}

/// `fiber_root` through the bracketed search even for constant weights.
pub fn fiber_root_numeric(f: &Functional, u: &RealField) -> Result<f64> {
    let eq = FiberEquation::new(f, u)?;
    numeric_root(&eq, 1.0)
}

/// `h(t, u)`, so that `J(u^t) = t^2 (||grad u||_2^2 - h(t, u))`.
pub fn fiber_h(f: &Functional, u: &RealField, t_values: &[f64]) -> Result<Vec<f64>> {
    let eq = FiberEquation::new(f, u)?;
    Ok(t_values.iter().map(|&t| eq.h(t)).collect())
}

/// `u^{t_u}` renormalized to the exact mass of `u`.
pub fn project_to_manifold(f: &Functional, u: &RealField) -> Result<RealField> {
    Ok(project_with_root(f, u)?.0)
}

/// Relative Pohozaev residual accepted after projection.
const PROJECTION_TOL: f64 = 1e-9;

/// Projects and repeats on the resampled field until `J` vanishes on the
/// grid; interpolation error of a large dilation needs a second pass, and a
/// field that stays off `M(c)` after a few passes is not representable.
fn project_with_root(f: &Functional, u: &RealField) -> Result<(RealField, f64)> {
    let c = u.mass();
    let mut v = u.clone();
    let mut t_total = 1.0;
    for _ in 0..6 {
        let t = fiber_root(f, &v)?;
        if t != 1.0 {
            v = normalize_mass(&fiber_rescale(&v, t)?, c)?;
            t_total *= t;
        }
        let terms = f.terms(&v)?;
        if terms.pohozaev.abs() <= PROJECTION_TOL * (1.0 + terms.kinetic) {
            return Ok((v, t_total));
        }
    }
    Err(Error::Bracket(format!("projection along the fiber is not resolved on {}", f.grid())))
}

struct Manifold<'a> {
    f: &'a Functional,
    /// Smallest `||grad u||_2` over all projected points.
    rho0: Cell<f64>,
}

impl Objective for Manifold<'_> {
    fn grid(&self) -> &Grid {
        self.f.grid()
    }
    fn spectral(&self) -> &Spectral {
        self.f.spectral()
    }
    fn mass(&self) -> f64 {
        self.f.spec().mass
    }
    fn evaluate(&self, u: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.f.energy_and_gradient(u)
    }
    fn admissible(&self, w: Vec<f64>) -> Result<(Vec<f64>, f64)> {
        let u = RealField::new(*self.f.grid(), w)?;
        let (v, t) = project_with_root(self.f, &u)?;
        self.rho0.set(self.rho0.get().min(self.f.kinetic(&v.values).sqrt()));
        Ok((v.values, t))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldReport {
    #[serde(flatten)]
    pub report: SolveReport,
    /// `I` at the minimizer found on `M(c)`.
    pub m_value: f64,
    /// Smallest `||grad u||_2` among the projected points visited.
    pub rho0_observed: f64,
}

impl ManifoldReport {
    pub fn field(&self) -> &RealField {
        self.report.field()
    }

    pub fn converged(&self) -> bool {
        self.report.converged
    }
}

/// Minimizes `I` over `M(c)` with `c = spec.mass` by projected descent.
pub fn minimize_m(f: &Functional, init: Option<&RealField>, opts: &SolveOptions) -> Result<ManifoldReport> {
    f.spec().require(Regime::Supercritical)?;
    let c = f.spec().mass;
    let start = match init {
        Some(u) => normalize_mass(u, c)?,
        None => default_init(f)?,
    };
    f.grid().check_same(&start.grid)?;
    let obj = Manifold { f, rho0: Cell::new(f64::INFINITY) };
    let (pt, report) = descend(&obj, start.values, opts)?;
    if !report.converged {
        warn!(
            "m solve at c = {c} stopped after {} iterations, residual {:.3e}",
            report.iterations, report.grad_residual
        );
    }
    let report = finish(f, pt.u, report)?;
    Ok(ManifoldReport { m_value: report.energy, rho0_observed: obj.rho0.get(), report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MPoint {
    pub c: f64,
    pub value: f64,
    pub half_width: f64,
    pub report: ManifoldReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCurve {
    pub spec_base: ProblemSpec,
    pub points: Vec<MPoint>,
    /// `m(c_i) - m(c_{i+1})` between consecutive converged masses.
    pub gaps: Vec<f64>,
    /// No converged value exceeds its converged predecessor by more than `1e-7`.
    pub nonincreasing: bool,
}

impl MCurve {
    pub fn m(&self, c: f64) -> Option<f64> {
        self.points.iter().find(|p| (p.c - c).abs() <= 1e-12 * c).map(|p| p.value)
    }
}

/// `m(c)` over increasing masses with warm starts and the monotonicity check.
pub fn m_curve(
    spec_base: &ProblemSpec,
    disc: &Discretization,
    scaling: BoxScaling,
    c_list: &[f64],
    opts: &SolveOptions,
) -> Result<MCurve> {
    spec_base.require(Regime::Supercritical)?;
    if c_list.iter().any(|&c| !(c > 0.0)) || c_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("masses must be positive and increasing".into()));
    }
    let mut points: Vec<MPoint> = Vec::with_capacity(c_list.len());
    let mut prev: Option<(f64, RealField)> = None;
    for &c in c_list {
        let spec = spec_base.with_mass(c)?;
        let dc = discretization_at(&spec, disc, scaling, c);
        let f = Functional::build(&spec, &dc)?;
        let init = match &prev {
            Some((c0, u)) => warm_start(&spec, u, *c0, c, f.grid())?,
            None => None,
        };
        let report = minimize_m(&f, init.as_ref(), opts)?;
        info!("m({c}) = {:.12e} after {} iterations", report.m_value, report.report.iterations);
        prev = Some((c, report.field().clone()));
        points.push(MPoint { c, value: report.m_value, half_width: dc.half_width, report });
    }
    let ok: Vec<&MPoint> = points
        .iter()
        .filter(|p| {
            if !p.report.converged() {
                warn!("m({}) did not converge and is left out of the monotonicity check", p.c);
            }
            p.report.converged()
        })
        .collect();
    let gaps: Vec<f64> = ok.windows(2).map(|w| w[0].value - w[1].value).collect();
    let nonincreasing = gaps.iter().all(|&g| g >= -1e-7);
    Ok(MCurve { spec_base: spec_base.clone(), points, gaps, nonincreasing })
}

/// Random mixtures of the solver's mass projected onto `M(c)`, drawn with
/// widths around `L/8`.
pub fn manifold_samples(f: &Functional, count: usize, seed: u64) -> Result<Vec<RealField>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = f.grid().half_width() / 8.0;
    (0..count)
        .map(|_| {
            let u = random_mixture(f.grid(), &mut rng, scale, f.spec().mass)?;
            project_to_manifold(f, &u)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rho0Report {
    pub c: f64,
    /// `||grad u||_2` of every sample.
    pub norms: Vec<f64>,
    pub rho0_observed: f64,
    /// `rho0^{q-2} c^{(2p-q)/2}` with `q = dp - 2d + mu`.
    pub c_emp: f64,
    pub pass: bool,
}

/// Lower bound of `||grad u||_2` over projected samples.
pub fn audit_rho0(f: &Functional, samples: &[RealField]) -> Result<Rho0Report> {
    f.spec().require(Regime::Supercritical)?;
    let norms: Vec<f64> = samples
        .iter()
        .map(|u| f.grid().check_same(&u.grid).map(|_| f.kinetic(&u.values).sqrt()))
        .collect::<Result<_>>()?;
    let rho0 = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let (c, p, q) = (f.spec().mass, f.spec().p, f.spec().fiber_exponent());
    let c_emp = rho0.powf(q - 2.0) * c.powf((2.0 * p - q) / 2.0);
    Ok(Rho0Report { c, norms, rho0_observed: rho0, c_emp, pass: rho0 > 0.0 && rho0.is_finite() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimaxEntry {
    pub t_root: f64,
    /// `max_t I(u^t)`, the larger of the grid maximum and the value at the root.
    pub fiber_max: f64,
    pub grid_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimaxReport {
    pub m_value: f64,
    pub entries: Vec<MinimaxEntry>,
    /// `min_u max_t I(u^t) - m`.
    pub worst_margin: f64,
    pub pass: bool,
}

/// Checks `max_t I(u^t) >= m - 1e-6` along every direction.
pub fn audit_minimax(f: &Functional, m_value: f64, directions: &[RealField], t_grid: &[f64]) -> Result<MinimaxReport> {
    let mut entries = Vec::with_capacity(directions.len());
    for u in directions {
        let scan = f.fiber_scan(u, t_grid)?;
        let grid_max = scan.energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let t_root = fiber_root(f, u)?;
        let at_root = f.fiber_terms(&u.values, t_root).energy;
        entries.push(MinimaxEntry { t_root, fiber_max: grid_max.max(at_root), grid_max });
    }
    let worst_margin = entries.iter().map(|e| e.fiber_max - m_value).fold(f64::INFINITY, f64::min);
    Ok(MinimaxReport { m_value, entries, worst_margin, pass: worst_margin >= -1e-6 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberShape {
    pub t_root: f64,
    /// Sign changes of `J(u^t)` on the log grid.
    pub sign_changes: usize,
    /// `I(u^t)` at `t = 1e-3`.
    pub zeta_small: f64,
    pub kinetic: f64,
    /// `I(u^t) > 0` at the first and `< 0` at the last grid point.
    pub positive_then_negative: bool,
    pub pass: bool,
}

/// Scans `t -> I(u^t)` on `points` log-spaced dilations spanning
/// `[t_u / 100, 100 t_u]`.
pub fn fiber_shape(f: &Functional, u: &RealField, points: usize) -> Result<FiberShape> {
    let t_root = fiber_root(f, u)?;
    let t_grid = log_space(t_root / 100.0, t_root * 100.0, points);
    let scan = f.fiber_scan(u, &t_grid)?;
    let sign_changes = scan.pohozaev.windows(2).filter(|w| (w[0] > 0.0) != (w[1] > 0.0)).count();
    let kinetic = f.kinetic(&u.values);
    let zeta_small = f.fiber_terms(&u.values, 1e-3).energy;
    let positive_then_negative = scan.energies[0] > 0.0 && scan.energies[points - 1] < 0.0;
    let pass = sign_changes == 1 && positive_then_negative && zeta_small.abs() <= 1e-6 * kinetic;
    Ok(FiberShape { t_root, sign_changes, zeta_small, kinetic, positive_then_negative, pass })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    /// `min_t [I(u) - I(u^t)]`.
    pub worst_margin: f64,
    /// Same minimum restricted to `|t - 1| >= 0.1`.
    pub worst_far_margin: f64,
    pub pass: bool,
}

/// For `u` on `M(c)`, checks `I(u) >= I(u^t)` on the sampled dilations, with
/// strict inequality by `1e-10` away from `t = 1`.
pub fn audit_dominance(f: &Functional, u: &RealField, t_values: &[f64]) -> Result<DominanceReport> {
    let scan = f.fiber_scan(u, t_values)?;
    let e = f.energy(u)?;
    let noise = 1e-10 * e.abs().max(1.0);
    let mut worst = f64::INFINITY;
    let mut worst_far = f64::INFINITY;
    for (&t, &et) in t_values.iter().zip(&scan.energies) {
        let margin = e - et;
        worst = worst.min(margin);
        if (t - 1.0).abs() >= 0.1 {
            worst_far = worst_far.min(margin);
        }
    }
    let pass = worst >= -noise && worst_far >= 1e-10;
    Ok(DominanceReport { worst_margin: worst, worst_far_margin: worst_far, pass })
}
