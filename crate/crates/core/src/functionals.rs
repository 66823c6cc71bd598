//! Energy `I`, Pohozaev functional `J`, the Euler-Lagrange gradient and the
//! two scaling maps, evaluated on a grid.
//!
//! The nonlocal term is written with a weight in each slot,
//! `D(u) = int int w_x(x) |u(x)|^p |x - y|^{-mu} w_y(y) |u(y)|^p`, so that
//! `I = 1/2 ||grad u||^2 - D/(2p)`. Both slots carry `A` for the standard
//! problem; the limit functional and the truncated comparison functional
//! only change the weights.
//!
//! Along the fiber `u^t(x) = t^{d/2} u(t x)` the change of variables
//! `x -> x/t` gives, with `q = dp - 2d + mu`,
//! `I(u^t) = t^2/2 ||grad u||^2 - t^q/(2p) D_t(u)` where `D_t` uses the
//! weights `w(x/t)`. Differentiating gives
//! `J(u^t) = t dI(u^t)/dt = t^2 ||grad u||^2 - t^q/(2p) P_t(u)` with
//! `P_t = q D_t - sum G_x(x/t) ... - sum ... G_y(y/t)` and `G = grad w . x`.
//! The kinetic term keeps its `t^2` factor here; dropping it is a common
//! misprint of this identity.

use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::coeff::Weight;
use crate::error::{Error, Result};
use crate::fft::Spectral;
use crate::grid::{Grid, RealField, MASS_UNDERFLOW};
use crate::problem::ProblemSpec;
use crate::riesz::{build_plan_with, RieszPlan, SelfCell};

/// Samples of a weight and of `grad w . x` at the grid points dilated by `1/t`.
#[derive(Debug, Clone)]
struct Slot {
    weight: Weight,
    value: Vec<f64>,
    gdotx: Vec<f64>,
}

impl Slot {
    fn new(weight: Weight, radii: &[f64], t: f64) -> Self {
        let value = radii.iter().map(|&r| weight.value_radial(r / t)).collect();
        let gdotx = radii.iter().map(|&r| weight.gdotx_radial(r / t)).collect();
        Self { weight, value, gdotx }
    }
}

/// Nonlocal pieces at one point of the fiber.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nonlocal {
    /// `D_t(u)`.
    pub d: f64,
    /// `q D_t - G_x - G_y`.
    pub p: f64,
}

/// Energy, Pohozaev value and the pieces they are built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Terms {
    pub kinetic: f64,
    pub nonlocal: f64,
    pub energy: f64,
    pub pohozaev: f64,
}

/// Sampled fiber map `t -> I(u^t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberScan {
    pub t_values: Vec<f64>,
    pub energies: Vec<f64>,
    pub derivatives: Vec<f64>,
    pub pohozaev: Vec<f64>,
}

/// Box size, resolution and kernel regularization for a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub half_width: f64,
    pub n: usize,
    #[serde(default)]
    pub self_cell: SelfCell,
}

impl Discretization {
    pub fn new(half_width: f64, n: usize) -> Self {
        Self { half_width, n, self_cell: SelfCell::default() }
    }

    pub fn grid(&self, d: usize) -> Result<Grid> {
        Grid::new(d, self.half_width, self.n)
    }

    pub fn with_half_width(&self, half_width: f64) -> Self {
        Self { half_width, ..*self }
    }

    /// Twice the points per axis on the same box.
    pub fn doubled(&self) -> Self {
        Self { n: 2 * self.n, ..*self }
    }
}

/// The functional for one problem on one grid.
#[derive(Debug, Clone)]
pub struct Functional {
    spec: ProblemSpec,
    plan: Arc<RieszPlan>,
    spectral: Arc<Spectral>,
    radii: Arc<Vec<f64>>,
    wx: Slot,
    wy: Slot,
    symmetric: bool,
}

impl Functional {
    /// `A` in both slots.
    pub fn new(spec: &ProblemSpec, plan: Arc<RieszPlan>) -> Result<Self> {
        let w = Weight::Coeff(spec.coeff.clone());
        Self::with_weights(spec, plan, w.clone(), w)
    }

    /// Builds the grid and Riesz plan from a discretization.
    pub fn build(spec: &ProblemSpec, disc: &Discretization) -> Result<Self> {
        let grid = disc.grid(spec.d)?;
        let plan = build_plan_with(&grid, spec.mu, disc.self_cell)?;
        Self::new(spec, Arc::new(plan))
    }

    /// The limit functional with `A` replaced by `A_inf`.
    pub fn limit(spec: &ProblemSpec, plan: Arc<RieszPlan>) -> Result<Self> {
        let w = Weight::Constant(spec.coeff.a_inf);
        Self::with_weights(spec, plan, w.clone(), w)
    }

    pub fn with_weights(spec: &ProblemSpec, plan: Arc<RieszPlan>, wx: Weight, wy: Weight) -> Result<Self> {
        let grid = *plan.grid();
        if grid.d() != spec.d {
            return Err(Error::InvalidInput(format!(
                "plan dimension {} differs from problem dimension {}",
                grid.d(),
                spec.d
            )));
        }
        if (plan.mu() - spec.mu).abs() > 0.0 {
            return Err(Error::InvalidInput(format!("plan mu {} differs from problem mu {}", plan.mu(), spec.mu)));
        }
        let radii: Vec<f64> = (0..grid.len()).map(|i| grid.radius(i)).collect();
        let symmetric = wx == wy;
        let sx = Slot::new(wx, &radii, 1.0);
        let sy = Slot::new(wy, &radii, 1.0);
        Ok(Self {
            spec: spec.clone(),
            plan,
            spectral: Arc::new(Spectral::new(grid)),
            radii: Arc::new(radii),
            wx: sx,
            wy: sy,
            symmetric,
        })
    }

    /// Same grid, plan and weights with a different problem (e.g. another mass).
    pub fn with_spec(&self, spec: &ProblemSpec) -> Result<Self> {
        if spec.d != self.spec.d || spec.mu != self.spec.mu {
            return Err(Error::InvalidInput("dimension and mu must match the plan".into()));
        }
        let mut f = self.clone();
        f.spec = spec.clone();
        if spec.coeff != self.spec.coeff {
            let w = Weight::Coeff(spec.coeff.clone());
            f.wx = Slot::new(w.clone(), &self.radii, 1.0);
            f.wy = Slot::new(w, &self.radii, 1.0);
            f.symmetric = true;
        }
        Ok(f)
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        self.plan.grid()
    }

    pub fn plan(&self) -> &Arc<RieszPlan> {
        &self.plan
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    pub fn weights(&self) -> (&Weight, &Weight) {
        (&self.wx.weight, &self.wy.weight)
    }

    /// Weights sampled at the grid, `(w_x, w_y)`.
    pub fn weight_samples(&self) -> (&[f64], &[f64]) {
        (&self.wx.value, &self.wy.value)
    }

    fn check(&self, u: &RealField) -> Result<()> {
        self.grid().check_same(&u.grid)
    }

    fn density(&self, u: &[f64]) -> Vec<f64> {
        let p = self.spec.p;
        if p == 2.0 {
            u.iter().map(|v| v * v).collect()
        } else {
            u.iter().map(|v| v.abs().powf(p)).collect()
        }
    }

    /// `||grad u||_2^2`.
    pub fn kinetic(&self, u: &[f64]) -> f64 {
        self.spectral.kinetic(u)
    }

    fn dilated(&self, t: f64) -> (Slot, Slot) {
        let sx = Slot::new(self.wx.weight.clone(), &self.radii, t);
        let sy = if self.symmetric { sx.clone() } else { Slot::new(self.wy.weight.clone(), &self.radii, t) };
        (sx, sy)
    }

    fn nonlocal_with(&self, f: &[f64], sx: &Slot, sy: &Slot, with_p: bool) -> Nonlocal {
        let hd = self.grid().cell_volume();
        let q = self.spec.fiber_exponent();
        let fy: Vec<f64> = f.iter().zip(&sy.value).map(|(a, b)| a * b).collect();
        let y_flat = sy.weight.is_constant();
        let (cy, cgy) = if with_p && !y_flat && !self.symmetric {
            let gy: Vec<f64> = f.iter().zip(&sy.gdotx).map(|(a, b)| a * b).collect();
            let (a, b) = self.plan.convolve_pair_slice(&fy, &gy);
            (a, Some(b))
        } else {
            (self.plan.convolve_slice(&fy), None)
        };
        let mut d = 0.0;
        let mut gx = 0.0;
        let mut gy = 0.0;
        for i in 0..f.len() {
            let fx = f[i] * cy[i];
            d += sx.value[i] * fx;
            gx += sx.gdotx[i] * fx;
            if let Some(c) = &cgy {
                gy += sx.value[i] * f[i] * c[i];
            }
        }
        if self.symmetric {
            gy = gx;
        }
        Nonlocal { d: d * hd, p: if with_p { (q * d - gx - gy) * hd } else { 0.0 } }
    }

    /// `D(u)`.
    pub fn nonlocal(&self, u: &[f64]) -> f64 {
        let f = self.density(u);
        self.nonlocal_with(&f, &self.wx, &self.wy, false).d
    }

    pub fn energy_slice(&self, u: &[f64]) -> f64 {
        0.5 * self.kinetic(u) - self.nonlocal(u) / (2.0 * self.spec.p)
    }

    pub fn energy(&self, u: &RealField) -> Result<f64> {
        self.check(u)?;
        Ok(self.energy_slice(&u.values))
    }

    /// `D` and `1/2 (w_x K*(w_y f) + w_y K*(w_x f))` for the density `f`.
    fn convolved(&self, f: &[f64]) -> (f64, Vec<f64>) {
        let hd = self.grid().cell_volume();
        let fy: Vec<f64> = f.iter().zip(&self.wy.value).map(|(a, b)| a * b).collect();
        if self.symmetric {
            let c = self.plan.convolve_slice(&fy);
            let d: f64 = fy.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>() * hd;
            let pot: Vec<f64> = c.iter().zip(&self.wx.value).map(|(a, b)| a * b).collect();
            (d, pot)
        } else {
            let fx: Vec<f64> = f.iter().zip(&self.wx.value).map(|(a, b)| a * b).collect();
            let (cy, cx) = self.plan.convolve_pair_slice(&fy, &fx);
            let d: f64 = fx.iter().zip(&cy).map(|(a, b)| a * b).sum::<f64>() * hd;
            let pot: Vec<f64> =
                (0..f.len()).map(|i| 0.5 * (self.wx.value[i] * cy[i] + self.wy.value[i] * cx[i])).collect();
            (d, pot)
        }
    }

    /// `D` and the real potential `V` of the nonlinear term for a field of
    /// modulus `m`, so that `I'(u) = -Delta u - V u`.
    pub fn potential(&self, modulus: &[f64]) -> (f64, Vec<f64>) {
        let p = self.spec.p;
        let (d, mut pot) = self.convolved(&self.density(modulus));
        if p != 2.0 {
            pot.iter_mut().zip(modulus).for_each(|(v, m)| *v *= m.abs().powf(p - 2.0));
        }
        (d, pot)
    }

    /// Energy and gradient from a single set of convolutions.
    pub fn energy_and_gradient(&self, u: &[f64]) -> Result<(f64, Vec<f64>)> {
        let p = self.spec.p;
        if p < 2.0 {
            return Err(Error::Domain(format!("gradient needs p >= 2, got {p}")));
        }
        let f = self.density(u);
        let (d, pot) = self.convolved(&f);
        let uhat = self.spectral.forward_real(u);
        let kinetic = self.spectral.kinetic_hat(&uhat);
        let mut lap = uhat;
        lap.iter_mut().zip(self.spectral.k2()).for_each(|(v, k2)| *v *= *k2);
        let lap = self.spectral.inverse_real(lap);
        let grad = (0..u.len())
            .map(|i| {
                let nl = if p == 2.0 { u[i] } else { u[i].abs().powf(p - 2.0) * u[i] };
                lap[i] - pot[i] * nl
            })
            .collect();
        Ok((0.5 * kinetic - d / (2.0 * p), grad))
    }

    /// `I'(u) = -Delta u - 1/2 (w_x K*(w_y |u|^p) + w_y K*(w_x |u|^p)) |u|^{p-2} u`.
    pub fn gradient(&self, u: &RealField) -> Result<RealField> {
        self.check(u)?;
        let (_, g) = self.energy_and_gradient(&u.values)?;
        RealField::new(u.grid, g)
    }

    /// `<I'(u), u> / ||u||_2^2`.
    pub fn lagrange_multiplier(&self, u: &RealField) -> Result<f64> {
        let m = u.mass();
        if !(m > MASS_UNDERFLOW) {
            return Err(Error::DegenerateField { mass: m });
        }
        let g = self.gradient(u)?;
        Ok(g.inner(u) / m)
    }

    /// `I`, `J` and their pieces at `u^t` using the dilated weights.
    pub fn fiber_terms(&self, u: &[f64], t: f64) -> Terms {
        let kin = self.kinetic(u);
        let f = self.density(u);
        self.fiber_terms_with(kin, &f, t)
    }

    fn fiber_terms_with(&self, kinetic: f64, f: &[f64], t: f64) -> Terms {
        let q = self.spec.fiber_exponent();
        let p = self.spec.p;
        let nl = if t == 1.0 {
            self.nonlocal_with(f, &self.wx, &self.wy, true)
        } else {
            let (sx, sy) = self.dilated(t);
            self.nonlocal_with(f, &sx, &sy, true)
        };
        let tq = t.powf(q);
        let t2 = t * t;
        Terms {
            kinetic: t2 * kinetic,
            nonlocal: tq * nl.d,
            energy: 0.5 * t2 * kinetic - tq * nl.d / (2.0 * p),
            pohozaev: t2 * kinetic - tq * nl.p / (2.0 * p),
        }
    }

    /// Nonlocal pieces of the dilated problem without the `t^q` factor, for
    /// callers that cache the kinetic term.
    pub fn fiber_nonlocal(&self, f: &[f64], t: f64) -> Nonlocal {
        if t == 1.0 {
            self.nonlocal_with(f, &self.wx, &self.wy, true)
        } else {
            let (sx, sy) = self.dilated(t);
            self.nonlocal_with(f, &sx, &sy, true)
        }
    }

    /// `|u|^p` for the current exponent.
    pub fn power_density(&self, u: &[f64]) -> Vec<f64> {
        self.density(u)
    }

    pub fn terms(&self, u: &RealField) -> Result<Terms> {
        self.check(u)?;
        Ok(self.fiber_terms(&u.values, 1.0))
    }

    /// `J(u) = dI(u^t)/dt` at `t = 1`.
    pub fn pohozaev(&self, u: &RealField) -> Result<f64> {
        Ok(self.terms(u)?.pohozaev)
    }

    /// `Psi(u) = I(u) - J(u)/2`.
    pub fn psi(&self, u: &RealField) -> Result<f64> {
        let t = self.terms(u)?;
        Ok(t.energy - 0.5 * t.pohozaev)
    }

    /// `I(u^t)`, `J(u^t)` and `dI(u^t)/dt = J(u^t)/t` on the given dilations.
    pub fn fiber_scan(&self, u: &RealField, t_values: &[f64]) -> Result<FiberScan> {
        self.check(u)?;
        if t_values.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::Domain("fiber scan needs positive dilations".into()));
        }
        let kin = self.kinetic(&u.values);
        let f = self.density(&u.values);
        let mut scan = FiberScan {
            t_values: t_values.to_vec(),
            energies: Vec::with_capacity(t_values.len()),
            derivatives: Vec::with_capacity(t_values.len()),
            pohozaev: Vec::with_capacity(t_values.len()),
        };
        for &t in t_values {
            let terms = self.fiber_terms_with(kin, &f, t);
            scan.energies.push(terms.energy);
            scan.pohozaev.push(terms.pohozaev);
            scan.derivatives.push(terms.pohozaev / t);
        }
        Ok(scan)
    }
}

pub fn energy(u: &RealField, spec: &ProblemSpec, plan: Arc<RieszPlan>) -> Result<f64> {
    Functional::new(spec, plan)?.energy(u)
}

pub fn energy_limit(u: &RealField, spec: &ProblemSpec, plan: Arc<RieszPlan>) -> Result<f64> {
    Functional::limit(spec, plan)?.energy(u)
}

pub fn el_gradient(u: &RealField, spec: &ProblemSpec, plan: Arc<RieszPlan>) -> Result<RealField> {
    Functional::new(spec, plan)?.gradient(u)
}

pub fn lagrange_multiplier(u: &RealField, spec: &ProblemSpec, plan: Arc<RieszPlan>) -> Result<f64> {
    Functional::new(spec, plan)?.lagrange_multiplier(u)
}

pub fn pohozaev(u: &RealField, spec: &ProblemSpec, plan: Arc<RieszPlan>) -> Result<f64> {
    Functional::new(spec, plan)?.pohozaev(u)
}

pub fn fiber_scan(u: &RealField, spec: &ProblemSpec, plan: Arc<RieszPlan>, t_values: &[f64]) -> Result<FiberScan> {
    Functional::new(spec, plan)?.fiber_scan(u, t_values)
}

/// Periodic band-limited interpolation weight for an axis of `n` samples:
/// `sin(n theta / 2) cot(theta / 2) / n`.
fn periodic_sinc(theta: f64, n: usize) -> f64 {
    let half = 0.5 * theta;
    let s = half.sin();
    if s.abs() < 1e-14 {
        // limit at theta = 0 (other multiples of 2 pi also give 1 for even n)
        return 1.0;
    }
    (n as f64 * half).sin() * half.cos() / (s * n as f64)
}

/// `v(x) = amplitude * u(factor * x)` by separable trigonometric
/// interpolation; points mapped outside the box read zero.
pub(crate) fn resample(u: &RealField, factor: f64, amplitude: f64) -> RealField {
    let g = u.grid;
    let (d, n) = (g.d(), g.n());
    let l = g.half_width();
    let x = g.axis();
    // interpolation matrix, row i evaluates the interpolant at factor * x_i
    let mut mat = vec![0.0; n * n];
    for i in 0..n {
        let y = factor * x[i];
        if y < -l || y >= l {
            continue;
        }
        for j in 0..n {
            let theta = std::f64::consts::PI * (y - x[j]) / l;
            mat[i * n + j] = periodic_sinc(theta, n);
        }
    }
    let mut cur = u.values.clone();
    let mut next = vec![0.0; cur.len()];
    for axis in 0..d {
        let stride = n.pow((d - 1 - axis) as u32);
        let outer = cur.len() / (n * stride);
        for o in 0..outer {
            for s in 0..stride {
                let base = o * n * stride + s;
                for i in 0..n {
                    let row = &mat[i * n..(i + 1) * n];
                    let mut acc = 0.0;
                    for (j, w) in row.iter().enumerate() {
                        acc += w * cur[base + j * stride];
                    }
                    next[base + i * stride] = acc;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur.iter_mut().for_each(|v| *v *= amplitude);
    RealField { grid: g, values: cur }
}

fn warn_if_aliased(u: &RealField, factor: f64) {
    if factor <= 1.0 {
        return;
    }
    let s = Spectral::new(u.grid);
    let uhat = s.forward_real(&u.values);
    let tail = s.tail_fraction_hat(&uhat, 1.0 / factor);
    if tail > 1e-12 {
        warn!("rescaling by {factor} moves a spectral fraction {tail:.2e} past the grid Nyquist frequency");
    }
}

/// `u^t(x) = t^{d/2} u(t x)`; preserves mass for resolved fields.
pub fn fiber_rescale(u: &RealField, t: f64) -> Result<RealField> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("dilation {t} must be positive")));
    }
    if t == 1.0 {
        return Ok(u.clone());
    }
    warn_if_aliased(u, t);
    Ok(resample(u, t, t.powf(u.grid.d() as f64 / 2.0)))
}

/// `k^{-b} u(x / k^a)`, the autonomous similarity map from mass `c` to mass `k c`.
pub fn similarity_rescale(u: &RealField, k: f64, a: f64, b: f64) -> Result<RealField> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Domain(format!("mass ratio {k} must be positive")));
    }
    if k == 1.0 {
        return Ok(u.clone());
    }
    let factor = k.powf(-a);
    warn_if_aliased(u, factor);
    Ok(resample(u, factor, k.powf(-b)))
}

/// `u_s(x) = s^rho u(x / s)`.
pub fn rho_rescale(u: &RealField, s: f64, rho: f64) -> Result<RealField> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Domain(format!("scale {s} must be positive")));
    }
    if s == 1.0 {
        return Ok(u.clone());
    }
    warn_if_aliased(u, 1.0 / s);
    Ok(resample(u, 1.0 / s, s.powf(rho)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::CoeffSpec;
    use crate::riesz::build_plan;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(d: usize, mu: f64, p: f64, coeff: CoeffSpec, l: f64, n: usize) -> Functional {
        let spec = ProblemSpec::new(d, mu, p, 1.0, coeff).unwrap();
        let g = Grid::new(d, l, n).unwrap();
        Functional::new(&spec, Arc::new(build_plan(&g, mu).unwrap())).unwrap()
    }

    /// Sum of a few random Gaussian bumps, smooth and well inside the box.
    fn bumps(g: Grid, seed: u64) -> RealField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = RealField::zeros(g);
        for _ in 0..3 {
            let c: Vec<f64> = (0..g.d()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w = rng.random_range(0.8..1.5);
            let a = rng.random_range(0.5..1.5);
            for i in 0..g.len() {
                let x = g.point(i);
                let r2: f64 = (0..g.d()).map(|k| (x[k] - c[k]).powi(2)).sum();
                u.values[i] += a * (-r2 / (2.0 * w * w)).exp();
            }
        }
        u
    }

    #[test]
    fn zero_field() {
        let f = setup(1, 0.5, 2.0, CoeffSpec::constant(1.0), 8.0, 64);
        let z = RealField::zeros(*f.grid());
        assert_eq!(f.energy(&z).unwrap(), 0.0);
        assert_eq!(f.pohozaev(&z).unwrap(), 0.0);
        assert!(f.gradient(&z).unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn no_coefficient_leaves_kinetic_part() {
        let f = setup(2, 1.0, 2.0, CoeffSpec::constant(0.0), 6.0, 32);
        let u = bumps(*f.grid(), 1);
        let e = f.energy(&u).unwrap();
        assert_eq!(e, 0.5 * f.kinetic(&u.values));
        let g = f.gradient(&u).unwrap();
        let lap = f.spectral().neg_laplacian(&u.values);
        assert_eq!(g.values, lap);
    }

    #[test]
    fn one_dimensional_energy_matches_double_quadrature() {
        let f = setup(1, 0.5, 2.0, CoeffSpec::constant(1.0), 12.0, 512);
        let u = RealField::gaussian(*f.grid(), &[0.0], 1.0, 1.0).unwrap();
        let e = f.energy(&u).unwrap();
        // u = pi^{-1/4} exp(-x^2/2): ||u'||^2 = 1/2, and with s = x - y the
        // double integral of |x-y|^{-1/2} u(x)^2 u(y)^2 is E|s|^{-1/2} for a
        // standard normal s; s = w^2 removes the singularity
        let n = 10_000;
        let wmax = 6.0;
        let hw = wmax / n as f64;
        let g = |w: f64| (-w.powi(4) / 2.0).exp();
        let trap: f64 = (0..=n).map(|k| if k == 0 || k == n { 0.5 } else { 1.0 } * g(k as f64 * hw)).sum();
        let d = 4.0 * trap * hw / (2.0 * std::f64::consts::PI).sqrt();
        let closed = 2f64.powf(0.25) * statrs::function::gamma::gamma(0.25) / (2.0 * std::f64::consts::PI).sqrt();
        assert!((d - closed).abs() < 1e-10);
        let exact = 0.25 - d / 4.0;
        assert!((e - exact).abs() < 1e-6, "{e} vs {exact}");
    }

    #[test]
    fn limit_dominates_for_bumps() {
        let spec = ProblemSpec::new(2, 1.0, 2.0, 1.0, CoeffSpec::exp_bump(1.0, 1.0, 1.0)).unwrap();
        let g = Grid::new(2, 6.0, 32).unwrap();
        let plan = Arc::new(build_plan(&g, 1.0).unwrap());
        let f = Functional::new(&spec, plan.clone()).unwrap();
        let fl = Functional::limit(&spec, plan).unwrap();
        for seed in 0..5 {
            let u = bumps(g, seed);
            assert!(f.energy(&u).unwrap() <= fl.energy(&u).unwrap());
        }
        let c = setup(2, 1.0, 2.0, CoeffSpec::constant(1.0), 6.0, 32);
        let cl = Functional::limit(c.spec(), c.plan().clone()).unwrap();
        let u = bumps(g, 9);
        assert_eq!(c.energy(&u).unwrap(), cl.energy(&u).unwrap());
    }

    fn directional_check(f: &Functional, seed: u64) {
        let g = *f.grid();
        let u = bumps(g, seed);
        let v = bumps(g, seed + 100);
        let grad = f.gradient(&u).unwrap();
        let h = 1e-5;
        let ep = f.energy(&u.axpy(h, &v)).unwrap();
        let em = f.energy(&u.axpy(-h, &v)).unwrap();
        let fd = (ep - em) / (2.0 * h);
        let an = grad.inner(&v);
        assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3), "{fd} vs {an}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        directional_check(&setup(1, 0.5, 2.0, CoeffSpec::exp_bump(1.0, 1.0, 1.0), 8.0, 64), 1);
        directional_check(&setup(2, 1.0, 3.0, CoeffSpec::rational_bump(1.0, 2.0), 6.0, 32), 2);
        directional_check(&setup(3, 1.0, 2.0, CoeffSpec::exp_bump(1.0, 0.5, 1.0), 5.0, 16), 3);
        let spec = ProblemSpec::new(2, 1.0, 2.5, 1.0, CoeffSpec::exp_bump(1.0, 2.0, 1.0)).unwrap();
        let g = Grid::new(2, 6.0, 32).unwrap();
        let plan = Arc::new(build_plan(&g, 1.0).unwrap());
        let mixed = Functional::with_weights(
            &spec,
            plan,
            Weight::Capped { coeff: spec.coeff.clone(), cap: 1.5 },
            Weight::Constant(1.0),
        )
        .unwrap();
        directional_check(&mixed, 4);
    }

    #[test]
    fn gradient_rejects_small_p() {
        let f = setup(1, 0.5, 1.8, CoeffSpec::constant(1.0), 8.0, 64);
        let u = bumps(*f.grid(), 1);
        assert!(matches!(f.gradient(&u), Err(Error::Domain(_))));
    }

    #[test]
    fn multiplier_of_eigen_configuration() {
        // with A = 0, I'(u) = -u'' = 4 u for u = cos(2x) on a 2 pi box
        let f = setup(1, 0.5, 2.0, CoeffSpec::constant(0.0), std::f64::consts::PI, 32);
        let u = RealField::from_fn(*f.grid(), |x| (2.0 * x[0]).cos());
        assert!((f.lagrange_multiplier(&u).unwrap() - 4.0).abs() < 1e-12);
        let f = setup(1, 0.5, 2.0, CoeffSpec::constant(1.0), 8.0, 64);
        let u = bumps(*f.grid(), 3);
        for k in -3..=3 {
            let a = 10f64.powi(k);
            assert!(f.lagrange_multiplier(&u.scaled(a)).unwrap().is_finite());
        }
    }

    #[test]
    fn pohozaev_constant_coefficient_recombination() {
        let f = setup(2, 1.0, 3.0, CoeffSpec::constant(1.0), 6.0, 32);
        let u = bumps(*f.grid(), 5);
        let t = f.terms(&u).unwrap();
        let q = f.spec().fiber_exponent();
        assert!((t.pohozaev - (t.kinetic - q / 6.0 * t.nonlocal)).abs() < 1e-12 * t.kinetic);
    }

    #[test]
    fn pohozaev_is_fiber_derivative() {
        for f in [
            setup(1, 0.5, 4.0, CoeffSpec::exp_bump(1.0, 1.0, 1.0), 10.0, 128),
            setup(2, 1.0, 3.0, CoeffSpec::rational_bump(1.0, 2.0), 8.0, 32),
        ] {
            let u = bumps(*f.grid(), 7);
            for t in [0.5, 1.0, 2.0] {
                let h = 1e-5;
                let ip = f.fiber_terms(&u.values, t + h).energy;
                let im = f.fiber_terms(&u.values, t - h).energy;
                let fd = (ip - im) / (2.0 * h);
                let j = f.fiber_terms(&u.values, t).pohozaev / t;
                assert!((fd - j).abs() <= 1e-6 * j.abs().max(1e-2), "t={t}: {fd} vs {j}");
            }
        }
    }

    #[test]
    fn scan_consistency() {
        let f = setup(2, 1.0, 3.0, CoeffSpec::constant(1.0), 6.0, 32);
        let u = bumps(*f.grid(), 8);
        let ts = [0.25, 0.5, 1.0, 2.0, 4.0];
        let scan = f.fiber_scan(&u, &ts).unwrap();
        let k = f.kinetic(&u.values);
        let d = f.nonlocal(&u.values);
        let q = f.spec().fiber_exponent();
        for (i, &t) in ts.iter().enumerate() {
            let closed = 0.5 * t * t * k - t.powf(q) / 6.0 * d;
            assert!((scan.energies[i] - closed).abs() <= 1e-10 * closed.abs().max(1.0));
            assert!((scan.derivatives[i] - scan.pohozaev[i] / t).abs() <= 1e-8 * scan.derivatives[i].abs());
        }
        assert!((scan.energies[2] - f.energy(&u).unwrap()).abs() <= 1e-10);
        assert!((scan.pohozaev[2] - f.pohozaev(&u).unwrap()).abs() <= 1e-10);
    }

    #[test]
    fn rescale_identities() {
        let g = Grid::new(2, 8.0, 64).unwrap();
        let u = bumps(g, 11);
        assert_eq!(fiber_rescale(&u, 1.0).unwrap(), u);
        assert_eq!(rho_rescale(&u, 1.0, 2.0).unwrap(), u);
        let s = Spectral::new(g);
        let ut = fiber_rescale(&u, 1.7).unwrap();
        assert!((ut.mass() - u.mass()).abs() <= 1e-10);
        let k = s.kinetic(&u.values);
        assert!((s.kinetic(&ut.values) - 1.7 * 1.7 * k).abs() <= 1e-8 * k);
    }

    #[test]
    fn rho_rescale_scaling_laws() {
        let g = Grid::new(1, 16.0, 256).unwrap();
        let u = RealField::gaussian(g, &[0.0], 1.0, 1.0).unwrap();
        let us = rho_rescale(&u, 2.0, 1.0).unwrap();
        assert!((us.mass() - 8.0).abs() <= 1e-8);
        let s = Spectral::new(g);
        let k = s.kinetic(&u.values);
        // s^{2 rho + d - 2} = 2
        assert!((s.kinetic(&us.values) - 2.0 * k).abs() <= 1e-8 * k);
    }
}
