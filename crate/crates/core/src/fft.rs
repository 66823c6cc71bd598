//! Multi-dimensional FFTs on cubic arrays and spectral calculus on a [`Grid`].

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::Grid;

/// Transform direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Unnormalized FFT over a cubic `m^d` array in row-major order.
///
/// Axis transforms accept per-axis line limits so zero-padded data can skip
/// lines that are known to be zero (forward) or not needed (inverse).
#[derive(Clone)]
pub struct NdFft {
    d: usize,
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for NdFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NdFft").field("d", &self.d).field("m", &self.m).finish()
    }
}

impl NdFft {
    pub fn new(d: usize, m: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { d, m, forward: planner.plan_fft_forward(m), inverse: planner.plan_fft_inverse(m) }
    }

    pub fn len(&self) -> usize {
        self.m.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    /// Full transform along every axis.
    pub fn process(&self, data: &mut [Complex64], dir: Direction) {
        let full = [self.m; 3];
        for axis in 0..self.d {
            self.process_axis(data, axis, dir, full);
        }
    }

    /// Transform along `axis` (0 = slowest). Only lines whose other axis
    /// indices satisfy `i_b < limits[b]` are touched. `limits` is indexed by
    /// the logical axis (length-3 array, first `d` entries used).
    pub fn process_axis(&self, data: &mut [Complex64], axis: usize, dir: Direction, limits: [usize; 3]) {
        debug_assert_eq!(data.len(), self.len());
        let m = self.m;
        let plan = match dir {
            Direction::Forward => &self.forward,
            Direction::Inverse => &self.inverse,
        };
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        // embed the d axes into a 3-index box with leading singleton axes
        let off = 3 - self.d;
        let mut dims = [1usize; 3];
        let mut lim = [1usize; 3];
        for a in 0..self.d {
            dims[off + a] = m;
            lim[off + a] = limits[a].min(m);
        }
        let ax = off + axis;
        lim[ax] = 1;
        let strides = [dims[1] * dims[2], dims[2], 1];
        let stride = strides[ax];

        if stride == 1 {
            for i0 in 0..lim[0] {
                for i1 in 0..lim[1] {
                    let start = i0 * strides[0] + i1 * strides[1];
                    plan.process_with_scratch(&mut data[start..start + m], &mut scratch);
                }
            }
            return;
        }
        let mut line = vec![Complex64::default(); m];
        for i0 in 0..lim[0] {
            for i1 in 0..lim[1] {
                for i2 in 0..lim[2] {
                    let start = i0 * strides[0] + i1 * strides[1] + i2 * strides[2];
                    for (k, v) in line.iter_mut().enumerate() {
                        *v = data[start + k * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (k, v) in line.iter().enumerate() {
                        data[start + k * stride] = *v;
                    }
                }
            }
        }
    }
}

/// Angular wave number of FFT bin `j` on an axis of `n` points and length `len`.
/// The Nyquist bin gets `+pi/h`.
pub fn wave_number(j: usize, n: usize, len: f64) -> f64 {
    let base = 2.0 * std::f64::consts::PI / len;
    if j <= n / 2 {
        base * j as f64
    } else {
        base * (j as f64 - n as f64)
    }
}

/// Spectral calculus on a periodic grid.
#[derive(Debug, Clone)]
pub struct Spectral {
    grid: Grid,
    fft: NdFft,
    /// Wave numbers along one axis.
    k: Vec<f64>,
    /// `|k|^2` per flat FFT index.
    k2: Vec<f64>,
}

impl Spectral {
    pub fn new(grid: Grid) -> Self {
        let n = grid.n();
        let len = 2.0 * grid.half_width();
        let k: Vec<f64> = (0..n).map(|j| wave_number(j, n, len)).collect();
        let k2 = (0..grid.len())
            .map(|idx| {
                let ijk = grid.unflatten(idx);
                ijk[3 - grid.d()..].iter().map(|&j| k[j] * k[j]).sum()
            })
            .collect();
        Self { grid, fft: NdFft::new(grid.d(), n), k, k2 }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn k2(&self) -> &[f64] {
        &self.k2
    }

    /// Largest resolved wave number `pi / h`.
    pub fn nyquist(&self) -> f64 {
        std::f64::consts::PI / self.grid.spacing()
    }

    pub fn forward_real(&self, u: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.process(&mut buf, Direction::Forward);
        buf
    }

    pub fn forward(&self, u: &[Complex64]) -> Vec<Complex64> {
        let mut buf = u.to_vec();
        self.fft.process(&mut buf, Direction::Forward);
        buf
    }

    /// Inverse transform including the `1/n^d` normalization.
    pub fn inverse(&self, mut buf: Vec<Complex64>) -> Vec<Complex64> {
        self.fft.process(&mut buf, Direction::Inverse);
        let s = 1.0 / self.grid.len() as f64;
        buf.iter_mut().for_each(|v| *v *= s);
        buf
    }

    pub fn inverse_real(&self, buf: Vec<Complex64>) -> Vec<f64> {
        self.inverse(buf).into_iter().map(|v| v.re).collect()
    }

    /// Applies a real Fourier multiplier `m(k)` to a real field.
    pub fn apply_real(&self, u: &[f64], mult: impl Fn(usize) -> f64) -> Vec<f64> {
        let mut buf = self.forward_real(u);
        buf.iter_mut().enumerate().for_each(|(i, v)| *v *= mult(i));
        self.inverse_real(buf)
    }

    /// `-Delta u`.
    pub fn neg_laplacian(&self, u: &[f64]) -> Vec<f64> {
        self.apply_real(u, |i| self.k2[i])
    }

    /// `||grad u||_2^2` by Parseval, consistent with [`Self::neg_laplacian`].
    pub fn kinetic(&self, u: &[f64]) -> f64 {
        let buf = self.forward_real(u);
        self.kinetic_hat(&buf)
    }

    pub fn kinetic_hat(&self, uhat: &[Complex64]) -> f64 {
        let s: f64 = uhat.iter().zip(&self.k2).map(|(v, k2)| v.norm_sqr() * k2).sum();
        s * self.grid.cell_volume() / self.grid.len() as f64
    }

    pub fn kinetic_complex(&self, psi: &[Complex64]) -> f64 {
        let buf = self.forward(psi);
        self.kinetic_hat(&buf)
    }

    /// Fraction of spectral energy carried by modes with `|k| > frac * k_nyquist`.
    pub fn tail_fraction_hat(&self, uhat: &[Complex64], frac: f64) -> f64 {
        let cut = (frac * self.nyquist()).powi(2);
        let mut total = 0.0;
        let mut tail = 0.0;
        for (v, &k2) in uhat.iter().zip(&self.k2) {
            let e = v.norm_sqr();
            total += e;
            if k2 > cut {
                tail += e;
            }
        }
        if total > 0.0 {
            tail / total
        } else {
            0.0
        }
    }

    /// Per-axis wave numbers.
    pub fn axis_wave_numbers(&self) -> &[f64] {
        &self.k
    }

    /// Translates a complex field by `shift` (periodic, band-limited).
    pub fn translate(&self, psi: &[Complex64], shift: &[f64]) -> Vec<Complex64> {
        let mut buf = self.forward(psi);
        let d = self.grid.d();
        for (idx, v) in buf.iter_mut().enumerate() {
            let ijk = self.grid.unflatten(idx);
            let mut phase = 0.0;
            for a in 0..d {
                let j = ijk[3 - d + a];
                // the Nyquist mode has no well-defined direction; drop its shift
                if 2 * j == self.grid.n() {
                    continue;
                }
                phase -= self.k[j] * shift[a];
            }
            *v *= Complex64::from_polar(1.0, phase);
        }
        self.inverse(buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_3d() {
        let f = NdFft::new(3, 8);
        let data: Vec<Complex64> =
            (0..512).map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
        let mut buf = data.clone();
        f.process(&mut buf, Direction::Forward);
        f.process(&mut buf, Direction::Inverse);
        for (a, b) in buf.iter().zip(&data) {
            assert!((a / 512.0 - b).norm() < 1e-13);
        }
    }

    #[test]
    fn laplacian_of_cosine() {
        let g = Grid::new(2, std::f64::consts::PI, 16).unwrap();
        let s = Spectral::new(g);
        let u = g.sample(|x| (2.0 * x[0]).cos() * x[1].sin());
        let lap = s.neg_laplacian(&u);
        for (a, b) in lap.iter().zip(&u) {
            assert!((a - 5.0 * b).abs() < 1e-12);
        }
        // ||grad u||^2 = 5 ||u||^2 for this eigenfunction
        let m: f64 = u.iter().map(|v| v * v).sum::<f64>() * g.cell_volume();
        assert!((s.kinetic(&u) - 5.0 * m).abs() < 1e-11);
    }
}
