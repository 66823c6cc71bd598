//! Reproducible random fields for audits and perturbations.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::fft::Spectral;
use crate::grid::{normalize_mass, Grid, RealField};

/// One or two Gaussian bumps with random centers, widths and amplitudes,
/// normalized to `mass`. Widths are drawn relative to `scale` and centers
/// stay within `scale` of the origin.
pub fn random_mixture<R: Rng + ?Sized>(grid: &Grid, rng: &mut R, scale: f64, mass: f64) -> Result<RealField> {
    let d = grid.d();
    let bumps = rng.random_range(1..=2);
    let mut u = RealField::zeros(*grid);
    for _ in 0..bumps {
        let center: Vec<f64> = (0..d).map(|_| rng.random_range(-scale..scale)).collect();
        let width = scale * rng.random_range(0.4..1.2);
        let amp = rng.random_range(0.3..1.0);
        for (i, v) in u.values.iter_mut().enumerate() {
            let x = grid.point(i);
            let r2: f64 = (0..d).map(|a| (x[a] - center[a]).powi(2)).sum();
            *v += amp * (-r2 / (2.0 * width * width)).exp();
        }
    }
    normalize_mass(&u, mass)
}

/// Real random field with independent Gaussian Fourier coefficients on
/// `|k| <= k_cut`, scaled to unit norm `(||grad v||^2 + ||v||^2)^{1/2}`.
pub fn band_limited<R: Rng + ?Sized>(grid: &Grid, rng: &mut R, k_cut: f64) -> RealField {
    let s = Spectral::new(*grid);
    let hat: Vec<Complex64> = s
        .k2()
        .iter()
        .map(|&k2| {
            if k2 <= k_cut * k_cut {
                Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
            } else {
                Complex64::default()
            }
        })
        .collect();
    let v = s.inverse_real(hat);
    let field = RealField { grid: *grid, values: v };
    let norm = (s.kinetic(&field.values) + field.mass()).sqrt();
    if norm > 0.0 {
        field.scaled(1.0 / norm)
    } else {
        field
    }
}
