//! Lattice zeta sums `Z_alpha(s) = sum'_{m in Z^d} m^alpha |m|^{-s}` continued
//! analytically in `s`, and the local correction stencil they produce for the
//! singular Riesz kernel.
//!
//! The continuation uses the Mellin split at `t = 1`:
//! `|m|^{-s} = pi^{s/2}/Gamma(s/2) int_0^inf t^{s/2-1} exp(-pi t |m|^2) dt`.
//! The part over `t > 1` is a rapidly convergent sum of upper incomplete gamma
//! functions. On `t < 1` the product of one-dimensional theta sums has its
//! leading Poisson term removed analytically and the remainder integrated
//! numerically.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::{gamma, gamma_ur};
use std::f64::consts::PI;

/// Lattice radius for the incomplete-gamma tail; terms decay like `exp(-pi R^2)`.
const TAIL_RADIUS: i64 = 7;
/// Below this `t` the theta remainder is below `exp(-pi / T0)` and is dropped.
const T0: f64 = 0.05;
const SIMPSON_INTERVALS: usize = 4000;

/// `sum_{k in Z} k^{2j} exp(-pi t k^2)`.
fn theta_moment(j: u32, t: f64) -> f64 {
    // terms beyond |k| = 40 are below exp(-pi * 0.05 * 1600) ~ 1e-109
    let mut s = if j == 0 { 1.0 } else { 0.0 };
    for k in 1..=40i64 {
        let k2 = (k * k) as f64;
        let term = k2.powi(j as i32) * (-PI * t * k2).exp();
        s += 2.0 * term;
        if term < 1e-300 {
            break;
        }
    }
    s
}

/// `Gamma((a+1)/2) / pi^{(a+1)/2}`: the Gaussian moment `int x^a exp(-pi x^2) dx`.
fn gauss_moment(a: u32) -> f64 {
    let e = (a as f64 + 1.0) / 2.0;
    gamma(e) / PI.powf(e)
}

/// Analytically continued `sum'_{m} m^alpha |m|^{-s}` for even exponents `alpha`
/// (one entry per dimension). Valid for `s > 0` away from the pole at
/// `s = |alpha| + d`.
pub fn lattice_zeta(alpha: &[u32], s: f64) -> f64 {
    let d = alpha.len();
    assert!((1..=3).contains(&d) && alpha.iter().all(|a| a % 2 == 0) && s > 0.0);
    let k: u32 = alpha.iter().sum();
    let half = s / 2.0;

    // t > 1: sum over lattice points of m^alpha (pi |m|^2)^{-s/2} Gamma(s/2, pi |m|^2)
    let r = TAIL_RADIUS;
    let mut tail = 0.0;
    let span = |axis: usize| if axis < d { -r..=r } else { 0..=0 };
    for i in span(0) {
        for j in span(1) {
            for l in span(2) {
                let m = [i, j, l];
                let r2 = (i * i + j * j + l * l) as f64;
                if r2 == 0.0 {
                    continue;
                }
                let mono: f64 = (0..d).map(|a| (m[a] as f64).powi(alpha[a] as i32)).product();
                if mono == 0.0 {
                    continue;
                }
                let x = PI * r2;
                tail += mono * x.powf(-half) * gamma_ur(half, x) * gamma(half);
            }
        }
    }

    // t < 1: theta product minus its leading term, integrated on [T0, 1]
    let c = alpha.iter().map(|&a| gauss_moment(a)).product::<f64>();
    let lead_exp = -((k as usize + d) as f64) / 2.0;
    let integrand = |t: f64| {
        let prod: f64 = alpha.iter().map(|&a| theta_moment(a / 2, t)).product();
        let mut v = prod - c * t.powf(lead_exp);
        if k == 0 {
            v -= 1.0;
        }
        t.powf(half - 1.0) * v
    };
    let hh = (1.0 - T0) / SIMPSON_INTERVALS as f64;
    let mut integ = integrand(T0) + integrand(1.0);
    for i in 1..SIMPSON_INTERVALS {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        integ += w * integrand(T0 + hh * i as f64);
    }
    integ *= hh / 3.0;
    // on [0, T0] only the subtracted constant survives
    if k == 0 {
        integ -= T0.powf(half) / half;
    }
    // the leading term integrated analytically over [0, 1]
    integ += c / ((s - k as f64 - d as f64) / 2.0);

    PI.powf(half) / gamma(half) * (tail + integ)
}

/// Weights of the local correction stencil, in units of `h^{d-mu}`:
/// `c0` at the origin, `c1` on `+-e_i`, `c2` on `+-e_i +- e_j` (i < j) and
/// `c3` on `+-2 e_i`. Added to the punctured kernel samples they make the
/// quadrature exact on the monomials `1, x_1^2, x_1^4, x_1^2 x_2^2` up to the
/// smooth-function error of the trapezoid rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

fn solve_dense<const N: usize>(a: [[f64; N]; N], b: [f64; N]) -> Vec<f64> {
    let m = DMatrix::from_fn(N, N, |i, j| a[i][j]);
    let x = m.lu().solve(&DVector::from_column_slice(&b)).expect("moment system is nonsingular");
    x.as_slice().to_vec()
}

/// Moment-matching stencil for the kernel `|x|^{-mu}` in `d` dimensions.
pub fn correction_stencil(d: usize, mu: f64) -> Stencil {
    let mono = |first: u32, second: u32| {
        let mut a = vec![0u32; d];
        a[0] = first;
        if d > 1 {
            a[1] = second;
        }
        lattice_zeta(&a, mu)
    };
    let (z0, z2, z4) = (mono(0, 0), mono(2, 0), mono(4, 0));
    if d == 1 {
        let x = solve_dense([[1.0, 2.0, 2.0], [0.0, 2.0, 8.0], [0.0, 2.0, 32.0]], [-z0, -z2, -z4]);
        return Stencil { c0: x[0], c1: x[1], c2: 0.0, c3: x[2] };
    }
    let z22 = mono(2, 2);
    let df = d as f64;
    let a = [
        [1.0, 2.0 * df, 2.0 * df * (df - 1.0), 2.0 * df],
        [0.0, 2.0, 4.0 * (df - 1.0), 8.0],
        [0.0, 2.0, 4.0 * (df - 1.0), 32.0],
        [0.0, 0.0, 4.0, 0.0],
    ];
    let x = solve_dense(a, [-z0, -z2, -z4, -z22]);
    Stencil { c0: x[0], c1: x[1], c2: x[2], c3: x[3] }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol * b.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn one_dimensional_values_are_riemann_zeta() {
        // Z(s) = 2 zeta(s), Z_{x^2}(s) = 2 zeta(s - 2), Z_{x^4}(s) = 2 zeta(s - 4)
        close(lattice_zeta(&[0], 0.5), -2.9207090176191737, 1e-10);
        close(lattice_zeta(&[2], 0.5), -0.05097040377966607, 1e-10);
        close(lattice_zeta(&[4], 0.5), 0.008882022670958865, 1e-10);
    }

    #[test]
    fn higher_dimensional_values() {
        close(lattice_zeta(&[0, 0, 0], 1.0), -2.837297479480619, 1e-9);
        // by symmetry 3 Z_{x^2}(s) = Z(s - 2)
        close(3.0 * lattice_zeta(&[2, 0, 0], 1.0), -0.2665962787183935, 1e-9);
        close(lattice_zeta(&[0, 0], 1.2), -5.427516684766814, 1e-9);
        close(2.0 * lattice_zeta(&[2, 0], 1.2), -0.3210193458141711, 1e-9);
    }

    #[test]
    fn stencil_values() {
        let s = correction_stencil(3, 1.0);
        close(s.c0, 2.533006, 1e-6);
        close(s.c1, 0.0440872, 1e-6);
        close(s.c2, 0.00654162, 1e-6);
        close(s.c3, -0.00645526, 1e-6);
        let s = correction_stencil(1, 0.5);
        close(s.c0, 2.854776, 1e-6);
        close(s.c1, 0.0354606, 1e-6);
        close(s.c3, -0.00249385, 1e-6);
    }
}
