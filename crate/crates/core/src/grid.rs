//! Uniform periodic box discretization and sampled fields.
//!
//! Samples are stored flat in row-major order: for `d = 3` the sample at
//! axis indices `(i, j, k)` lives at `(i * n + j) * n + k`, so the last axis
//! is contiguous. Axis index `i` maps to the coordinate `-L + i h`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fields with mass below this are treated as numerically zero.
pub const MASS_UNDERFLOW: f64 = 1e-280;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    d: usize,
    half_width: f64,
    n: usize,
    spacing: f64,
}

fn is_smooth(mut n: usize) -> bool {
    for f in [2, 3, 5] {
        while n.is_multiple_of(f) {
            n /= f;
        }
    }
    n == 1
}

impl Grid {
    /// Box `[-L, L)^d` with `n` points per axis. `n` must be even, at least 8
    /// and have no prime factors other than 2, 3 and 5.
    pub fn new(d: usize, half_width: f64, n: usize) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::Domain(format!("dimension {d} outside 1..=3")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::Domain(format!("half width {half_width} must be positive")));
        }
        if n < 8 || !n.is_multiple_of(2) || !is_smooth(n) {
            return Err(Error::Domain(format!("n = {n} must be an even 5-smooth integer >= 8")));
        }
        Ok(Self { d, half_width, n, spacing: 2.0 * half_width / n as f64 })
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn half_width(&self) -> f64 {
        self.half_width
    }
    pub fn spacing(&self) -> f64 {
        self.spacing
    }
    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    /// Volume element `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.d as i32)
    }
    pub fn volume(&self) -> f64 {
        (2.0 * self.half_width).powi(self.d as i32)
    }
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing
    }
    /// Axis coordinates `-L + i h`, `i = 0..n`.
    pub fn axis(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }

    /// Axis indices of flat index `idx`, padded with leading zeros to length 3.
    pub fn unflatten(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        match self.d {
            1 => [0, 0, idx],
            2 => [0, idx / n, idx % n],
            _ => [idx / (n * n), (idx / n) % n, idx % n],
        }
    }

    /// Coordinates of flat index `idx`; unused trailing components are zero.
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let ijk = self.unflatten(idx);
        let mut x = [0.0; 3];
        for (a, xa) in x.iter_mut().enumerate().take(self.d) {
            *xa = self.coord(ijk[3 - self.d + a]);
        }
        x
    }

    pub fn radius(&self, idx: usize) -> f64 {
        let x = self.point(idx);
        (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
    }

    /// Samples `f(x)` at every grid point.
    pub fn sample(&self, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|i| f(&self.point(i)[..self.d])).collect()
    }

    /// Same grid with `n` scaled by `factor` (used for resolution audits).
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(self.d, self.half_width, self.n * factor)
    }

    pub fn with_half_width(&self, half_width: f64) -> Result<Self> {
        Self::new(self.d, half_width, self.n)
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch { expected: self.to_string(), found: other.to_string() })
        }
    }
}

impl std::fmt::Display for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[-{}, {})^{} with n = {}", self.half_width, self.half_width, self.d, self.n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub grid: Grid,
    pub values: Vec<Complex64>,
}

impl RealField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!("{} samples for a grid of {} points", values.len(), grid.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite sample".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: Grid, f: impl FnMut(&[f64]) -> f64) -> Self {
        Self { grid, values: grid.sample(f) }
    }

    /// Isotropic Gaussian `exp(-|x - center|^2 / (2 width^2))` normalized to `mass`.
    pub fn gaussian(grid: Grid, center: &[f64], width: f64, mass: f64) -> Result<Self> {
        let g = Self::from_fn(grid, |x| {
            let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
            (-r2 / (2.0 * width * width)).exp()
        });
        normalize_mass(&g, mass)
    }

    pub fn mass(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn inner(&self, other: &RealField) -> f64 {
        self.grid.cell_volume() * self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.mass().sqrt()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|v| alpha * v).collect() }
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &RealField) -> Self {
        Self { grid: self.grid, values: self.values.iter().zip(&other.values).map(|(a, b)| a + alpha * b).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Share of the mass at points whose sup-norm exceeds `frac * half_width`.
    pub fn edge_fraction(&self, frac: f64) -> f64 {
        let cut = frac * self.grid.half_width();
        let outer: f64 = (0..self.grid.len())
            .filter(|&i| self.grid.point(i).iter().any(|x| x.abs() > cut))
            .map(|i| self.values[i] * self.values[i])
            .sum();
        self.grid.cell_volume() * outer / self.mass().max(f64::MIN_POSITIVE)
    }

    /// Mass-weighted mean position; unused trailing components are zero.
    pub fn center_of_mass(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for (i, v) in self.values.iter().enumerate() {
            let x = self.grid.point(i);
            for a in 0..3 {
                c[a] += v * v * x[a];
            }
        }
        let total: f64 = self.values.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
        c.map(|ca| ca / total)
    }

    pub fn to_complex(&self) -> ComplexField {
        ComplexField { grid: self.grid, values: self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect() }
    }
}

impl ComplexField {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!("{} samples for a grid of {} points", values.len(), grid.len())));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::InvalidInput("non-finite sample".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn mass(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }

    /// `<self, other>` with the first argument conjugated.
    pub fn inner(&self, other: &ComplexField) -> Complex64 {
        let s: Complex64 = self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b).sum();
        s * self.grid.cell_volume()
    }

    pub fn scaled(&self, alpha: Complex64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|v| alpha * v).collect() }
    }

    pub fn modulus(&self) -> RealField {
        RealField { grid: self.grid, values: self.values.iter().map(|v| v.norm()).collect() }
    }
}

/// Mass `h^d sum |u_i|^2` of a real field.
pub fn mass(u: &RealField) -> f64 {
    u.mass()
}

/// Rescales `u` onto the sphere of mass `c`.
pub fn normalize_mass(u: &RealField, c: f64) -> Result<RealField> {
    if !(c > 0.0) {
        return Err(Error::Domain(format!("target mass {c} must be positive")));
    }
    let m = u.mass();
    if !(m > MASS_UNDERFLOW) {
        return Err(Error::DegenerateField { mass: m });
    }
    let factor = (c / m).sqrt();
    if factor == 1.0 {
        return Ok(u.clone());
    }
    Ok(u.scaled(factor))
}

pub fn normalize_mass_complex(psi: &ComplexField, c: f64) -> Result<ComplexField> {
    let m = psi.mass();
    if !(m > MASS_UNDERFLOW) {
        return Err(Error::DegenerateField { mass: m });
    }
    Ok(psi.scaled(Complex64::new((c / m).sqrt(), 0.0)))
}
