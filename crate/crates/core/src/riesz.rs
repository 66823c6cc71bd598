//! Free-space Riesz potential `(|x|^{-mu} * f)` on a grid via zero-padded FFTs.
//!
//! The discrete operator is `g_i = sum_j w(i - j) f_j` with
//! `w(m) = h^d |h m|^{-mu}` for `m != 0`. The singular origin is handled by a
//! [`SelfCell`] rule; the default adds a small moment-matched stencil around
//! the origin so that the quadrature of `|x|^{-mu} f` is high order for
//! smooth `f`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{Direction, NdFft};
use crate::grid::{Grid, RealField};
use crate::zeta::{correction_stencil, Stencil};

/// Upper bound on padded points per buffer (16 bytes each).
pub const MAX_PADDED_POINTS: usize = 1 << 26;
/// Grid size limit for [`convolve_direct`].
pub const DIRECT_LIMIT: usize = 4096;

/// Regularization of the kernel near the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelfCell {
    /// Corrected trapezoid rule: moment-matched weights on the origin and the
    /// nearest shells. Fourth-order accurate for smooth integrands.
    #[default]
    Corrected,
    /// `K(0)` replaced by the cell average of `|x|^{-mu}` over the ball of
    /// equal volume: `d/(d - mu) r_eq^{-mu}`.
    Ball,
    /// `K(0) = 0`.
    Zero,
}

fn unit_ball_volume(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => std::f64::consts::PI,
        _ => 4.0 / 3.0 * std::f64::consts::PI,
    }
}

/// Equal-volume-ball average of `|x|^{-mu}` over one cell.
pub fn ball_self_cell(d: usize, h: f64, mu: f64) -> f64 {
    let df = d as f64;
    let r_eq = (h.powi(d as i32) / unit_ball_volume(d)).powf(1.0 / df);
    df / (df - mu) * r_eq.powf(-mu)
}

/// Kernel weights as a function of the integer offset.
#[derive(Debug, Clone)]
struct Weights {
    d: usize,
    h: f64,
    mu: f64,
    mode: SelfCell,
    stencil: Option<Stencil>,
}

impl Weights {
    fn new(d: usize, h: f64, mu: f64, mode: SelfCell) -> Self {
        let stencil = (mode == SelfCell::Corrected).then(|| correction_stencil(d, mu));
        Self { d, h, mu, mode, stencil }
    }

    fn at(&self, m: [i64; 3]) -> f64 {
        let r2 = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]) as f64;
        let hd = self.h.powi(self.d as i32);
        let mut w = if r2 > 0.0 { hd * (self.h * r2.sqrt()).powf(-self.mu) } else { 0.0 };
        match self.mode {
            SelfCell::Zero => {}
            SelfCell::Ball => {
                if r2 == 0.0 {
                    w = hd * ball_self_cell(self.d, self.h, self.mu);
                }
            }
            SelfCell::Corrected => {
                let s = self.stencil.expect("stencil present in corrected mode");
                let amax = m.iter().map(|v| v.abs()).max().unwrap_or(0);
                let shell = match (r2 as i64, amax) {
                    (0, _) => s.c0,
                    (1, _) => s.c1,
                    (2, 1) => s.c2,
                    (4, 2) => s.c3,
                    _ => 0.0,
                };
                w += self.h.powf(self.d as f64 - self.mu) * shell;
            }
        }
        w
    }
}

/// Cached transform of the padded kernel for one grid and exponent.
#[derive(Debug, Clone)]
pub struct RieszPlan {
    grid: Grid,
    mu: f64,
    mode: SelfCell,
    padded_n: usize,
    fft: NdFft,
    kernel_hat: Vec<f64>,
    kernel_hat_imag: f64,
    self_cell: f64,
}

/// Splits a padded index into a signed offset in `[-n, n)`.
fn signed(j: usize, n: usize) -> i64 {
    if j < n {
        j as i64
    } else {
        j as i64 - 2 * n as i64
    }
}

pub fn build_plan(grid: &Grid, mu: f64) -> Result<RieszPlan> {
    build_plan_with(grid, mu, SelfCell::default())
}

pub fn build_plan_with(grid: &Grid, mu: f64, mode: SelfCell) -> Result<RieszPlan> {
    let d = grid.d();
    if !(mu > 0.0 && mu < d as f64) {
        return Err(Error::Domain(format!("mu = {mu} outside (0, {d})")));
    }
    let n = grid.n();
    let m = 2 * n;
    let total = m.pow(d as u32);
    if total > MAX_PADDED_POINTS {
        return Err(Error::Resource(format!(
            "padded transform of {total} points exceeds the budget of {MAX_PADDED_POINTS}"
        )));
    }
    let weights = Weights::new(d, grid.spacing(), mu, mode);
    let mut buf = vec![Complex64::default(); total];
    for (idx, v) in buf.iter_mut().enumerate() {
        let mut off = [0i64; 3];
        let mut rest = idx;
        for a in (0..d).rev() {
            off[a] = signed(rest % m, n);
            rest /= m;
        }
        *v = Complex64::new(weights.at(off), 0.0);
    }
    let fft = NdFft::new(d, m);
    fft.process(&mut buf, Direction::Forward);
    let kernel_hat_imag = buf.iter().fold(0.0f64, |acc, v| acc.max(v.im.abs()));
    let self_cell = weights.at([0; 3]) / grid.cell_volume();
    Ok(RieszPlan {
        grid: *grid,
        mu,
        mode,
        padded_n: m,
        fft,
        kernel_hat: buf.into_iter().map(|v| v.re).collect(),
        kernel_hat_imag,
        self_cell,
    })
}

impl RieszPlan {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn mode(&self) -> SelfCell {
        self.mode
    }

    pub fn padded_n(&self) -> usize {
        self.padded_n
    }

    pub fn kernel_hat(&self) -> &[f64] {
        &self.kernel_hat
    }

    /// Largest imaginary part of the kernel transform before it was discarded.
    pub fn kernel_hat_imag(&self) -> f64 {
        self.kernel_hat_imag
    }

    /// Effective value of the regularized kernel at the origin.
    pub fn self_cell(&self) -> f64 {
        self.self_cell
    }

    fn embed(&self, buf: &mut [Complex64], f: impl Fn(usize) -> Complex64) {
        let (d, n, m) = (self.grid.d(), self.grid.n(), self.padded_n);
        let rows = n.pow(d as u32 - 1);
        for row in 0..rows {
            // padded offset of this contiguous row
            let mut rest = row;
            let mut start = 0;
            let mut mult = m;
            for _ in 0..d - 1 {
                start += (rest % n) * mult;
                rest /= n;
                mult *= m;
            }
            for k in 0..n {
                buf[start + k] = f(row * n + k);
            }
        }
    }

    fn extract(&self, buf: &[Complex64], mut out: impl FnMut(usize, Complex64)) {
        let (d, n, m) = (self.grid.d(), self.grid.n(), self.padded_n);
        let rows = n.pow(d as u32 - 1);
        let scale = 1.0 / buf.len() as f64;
        for row in 0..rows {
            let mut rest = row;
            let mut start = 0;
            let mut mult = m;
            for _ in 0..d - 1 {
                start += (rest % n) * mult;
                rest /= n;
                mult *= m;
            }
            for k in 0..n {
                out(row * n + k, buf[start + k] * scale);
            }
        }
    }

    /// Forward transform that skips lines known to be zero, kernel multiply,
    /// and an inverse that skips lines outside the physical block.
    fn apply(&self, buf: &mut [Complex64]) {
        let (d, n, m) = (self.grid.d(), self.grid.n(), self.padded_n);
        let limits = |axis: usize| {
            let mut l = [m; 3];
            for (b, v) in l.iter_mut().enumerate().take(d) {
                if b < axis {
                    *v = n;
                }
            }
            l
        };
        for axis in (0..d).rev() {
            self.fft.process_axis(buf, axis, Direction::Forward, limits(axis));
        }
        for (v, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *v *= *k;
        }
        for axis in 0..d {
            self.fft.process_axis(buf, axis, Direction::Inverse, limits(axis));
        }
    }

    /// Convolution of a raw sample slice on the plan grid.
    pub fn convolve_slice(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.grid.len());
        let mut buf = vec![Complex64::default(); self.fft.len()];
        self.embed(&mut buf, |i| Complex64::new(f[i], 0.0));
        self.apply(&mut buf);
        let mut out = vec![0.0; f.len()];
        self.extract(&buf, |i, v| out[i] = v.re);
        out
    }

    /// Two real convolutions for the price of one complex transform, using
    /// that the kernel transform is real.
    pub fn convolve_pair_slice(&self, f: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(f.len(), self.grid.len());
        assert_eq!(g.len(), self.grid.len());
        let mut buf = vec![Complex64::default(); self.fft.len()];
        self.embed(&mut buf, |i| Complex64::new(f[i], g[i]));
        self.apply(&mut buf);
        let mut a = vec![0.0; f.len()];
        let mut b = vec![0.0; f.len()];
        self.extract(&buf, |i, v| {
            a[i] = v.re;
            b[i] = v.im;
        });
        (a, b)
    }

    pub fn convolve(&self, f: &RealField) -> Result<RealField> {
        self.grid.check_same(&f.grid)?;
        RealField::new(self.grid, self.convolve_slice(&f.values))
    }

    pub fn convolve_pair(&self, f: &RealField, g: &RealField) -> Result<(RealField, RealField)> {
        self.grid.check_same(&f.grid)?;
        self.grid.check_same(&g.grid)?;
        let (a, b) = self.convolve_pair_slice(&f.values, &g.values);
        Ok((RealField::new(self.grid, a)?, RealField::new(self.grid, b)?))
    }
}

pub fn convolve(plan: &RieszPlan, f: &RealField) -> Result<RealField> {
    plan.convolve(f)
}

/// Explicit double sum with the same kernel weights as [`RieszPlan`].
pub fn convolve_direct(grid: &Grid, mu: f64, f: &RealField) -> Result<RealField> {
    convolve_direct_with(grid, mu, SelfCell::default(), f)
}

pub fn convolve_direct_with(grid: &Grid, mu: f64, mode: SelfCell, f: &RealField) -> Result<RealField> {
    if grid.len() > DIRECT_LIMIT {
        return Err(Error::SizeGuard { points: grid.len(), limit: DIRECT_LIMIT });
    }
    grid.check_same(&f.grid)?;
    let d = grid.d();
    if !(mu > 0.0 && mu < d as f64) {
        return Err(Error::Domain(format!("mu = {mu} outside (0, {d})")));
    }
    let weights = Weights::new(d, grid.spacing(), mu, mode);
    let mut out = vec![0.0; grid.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let a = grid.unflatten(i);
        let mut s = 0.0;
        for (j, &fj) in f.values.iter().enumerate() {
            if fj == 0.0 {
                continue;
            }
            let b = grid.unflatten(j);
            let off = [a[0] as i64 - b[0] as i64, a[1] as i64 - b[1] as i64, a[2] as i64 - b[2] as i64];
            s += weights.at(off) * fj;
        }
        *o = s;
    }
    RealField::new(*grid, out)
}
