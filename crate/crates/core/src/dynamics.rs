//! Time evolution of `i psi_t = -Delta psi - V(|psi|) psi` by Strang
//! splitting, conservation diagnostics and the orbital-stability experiment.
//!
//! The free flight is the exact multiplier `exp(-i |k|^2 dt)` split in two
//! halves. The potential `V` is real and depends on `|psi|` only, so the
//! nonlinear substep `psi -> exp(i dt V) psi` leaves `|psi|` and hence `V`
//! unchanged and is exact.

use log::warn;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::Spectral;
use crate::functionals::Functional;
use crate::grid::{normalize_mass_complex, ComplexField, RealField};
use crate::samples::band_limited;

/// Spectral energy fraction past two thirds of the Nyquist frequency that
/// triggers the aliasing warning.
const ALIAS_WARN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrbitNorm {
    L2,
    /// `(||grad v||_2^2 + ||v||_2^2)^{1/2}`.
    #[default]
    H1Proxy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveOptions {
    pub t_final: f64,
    pub dt: f64,
    /// Diagnostics every `record_stride` steps (the last step is always recorded).
    pub record_stride: usize,
    /// Keep a snapshot every `snapshot_stride` steps; none when 0.
    pub snapshot_stride: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { t_final: 1.0, dt: 1e-3, record_stride: 1, snapshot_stride: 0 }
    }
}

/// Orbit `{ e^{i theta} u }` that distances are measured to.
#[derive(Debug, Clone, Copy)]
pub struct Reference<'a> {
    pub u: &'a RealField,
    pub norm: OrbitNorm,
    /// Quotient translations by matching density centroids first.
    pub recenter: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub mass_series: Vec<f64>,
    pub energy_series: Vec<f64>,
    /// Empty unless a reference orbit was supplied.
    pub orbit_distance_series: Vec<f64>,
    #[serde(skip)]
    pub snapshots: Vec<(f64, ComplexField)>,
    #[serde(skip)]
    pub final_state: Option<ComplexField>,
}

impl Trajectory {
    /// `max |m(t) - m(0)| / m(0)`.
    pub fn mass_drift(&self) -> f64 {
        max_rel_drift(&self.mass_series)
    }

    /// `max |E(t) - E(0)| / max(|E(0)|, 1e-300)`.
    pub fn energy_drift(&self) -> f64 {
        max_rel_drift(&self.energy_series)
    }

    pub fn max_orbit_distance(&self) -> f64 {
        self.orbit_distance_series.iter().copied().fold(0.0, f64::max)
    }
}

fn max_rel_drift(series: &[f64]) -> f64 {
    let Some(&first) = series.first() else {
        return 0.0;
    };
    let scale = first.abs().max(1e-300);
    series.iter().map(|v| (v - first).abs() / scale).fold(0.0, f64::max)
}

/// `E(psi) = 1/2 ||grad psi||_2^2 - D(|psi|) / (2p)`.
pub fn complex_energy(f: &Functional, psi: &ComplexField) -> Result<f64> {
    f.grid().check_same(&psi.grid)?;
    let kin = f.spectral().kinetic_complex(&psi.values);
    let modulus: Vec<f64> = psi.values.iter().map(|v| v.norm()).collect();
    Ok(0.5 * kin - f.nonlocal(&modulus) / (2.0 * f.spec().p))
}

fn step_count(opts: &EvolveOptions) -> Result<usize> {
    if !(opts.dt > 0.0 && opts.dt.is_finite()) || !(opts.t_final >= 0.0 && opts.t_final.is_finite()) {
        return Err(Error::Domain(format!("need dt > 0 and T >= 0, got dt = {}, T = {}", opts.dt, opts.t_final)));
    }
    let steps = (opts.t_final / opts.dt).round();
    if (steps * opts.dt - opts.t_final).abs() > 1e-9 * opts.t_final.max(opts.dt) {
        return Err(Error::Domain(format!("T = {} is not a multiple of dt = {}", opts.t_final, opts.dt)));
    }
    Ok(steps as usize)
}

/// Integrates from `psi0` to `opts.t_final`, recording mass, energy and the
/// distance to the reference orbit.
pub fn evolve(
    f: &Functional,
    psi0: &ComplexField,
    opts: &EvolveOptions,
    reference: Option<Reference>,
) -> Result<Trajectory> {
    if f.spec().p < 2.0 {
        return Err(Error::Domain(format!("evolution needs p >= 2, got {}", f.spec().p)));
    }
    f.grid().check_same(&psi0.grid)?;
    if let Some(r) = &reference {
        f.grid().check_same(&r.u.grid)?;
    }
    let steps = step_count(opts)?;
    let spectral = f.spectral();
    let dt = opts.dt;
    let half: Vec<Complex64> = spectral.k2().iter().map(|k2| Complex64::from_polar(1.0, -0.5 * dt * k2)).collect();
    let stride = opts.record_stride.max(1);

    let mut traj = Trajectory {
        times: Vec::new(),
        mass_series: Vec::new(),
        energy_series: Vec::new(),
        orbit_distance_series: Vec::new(),
        snapshots: Vec::new(),
        final_state: None,
    };
    let mut warned = false;
    let mut record = |psi: &ComplexField, t: f64, traj: &mut Trajectory| -> Result<()> {
        traj.times.push(t);
        traj.mass_series.push(psi.mass());
        traj.energy_series.push(complex_energy(f, psi)?);
        if let Some(r) = &reference {
            traj.orbit_distance_series.push(orbit_distance(spectral, psi, r.u, r.norm, r.recenter)?);
        }
        if !warned {
            let tail = spectral.tail_fraction_hat(&spectral.forward(&psi.values), 2.0 / 3.0);
            if tail > ALIAS_WARN {
                warn!("spectral tail fraction {tail:.2e} at t = {t}: the grid no longer resolves the solution");
                warned = true;
            }
        }
        Ok(())
    };

    let mut psi = psi0.clone();
    record(&psi, 0.0, &mut traj)?;
    for step in 1..=steps {
        let mut hat = spectral.forward(&psi.values);
        hat.iter_mut().zip(&half).for_each(|(v, m)| *v *= m);
        psi.values = spectral.inverse(hat);
        let modulus: Vec<f64> = psi.values.iter().map(|v| v.norm()).collect();
        let (_, pot) = f.potential(&modulus);
        psi.values.iter_mut().zip(&pot).for_each(|(v, w)| *v *= Complex64::from_polar(1.0, dt * w));
        let mut hat = spectral.forward(&psi.values);
        hat.iter_mut().zip(&half).for_each(|(v, m)| *v *= m);
        psi.values = spectral.inverse(hat);
        let t = step as f64 * dt;
        if step % stride == 0 || step == steps {
            record(&psi, t, &mut traj)?;
        }
        if opts.snapshot_stride > 0 && step % opts.snapshot_stride == 0 {
            traj.snapshots.push((t, psi.clone()));
        }
    }
    traj.final_state = Some(psi);
    Ok(traj)
}

fn centroid(grid: &crate::grid::Grid, density: impl Iterator<Item = f64>) -> Vec<f64> {
    let d = grid.d();
    let mut c = vec![0.0; d];
    let mut total = 0.0;
    for (i, w) in density.enumerate() {
        let x = grid.point(i);
        for a in 0..d {
            c[a] += w * x[a];
        }
        total += w;
    }
    if total > 0.0 {
        c.iter_mut().for_each(|v| *v /= total);
    }
    c
}

/// `min_theta ||psi - e^{i theta} u||` in the chosen norm. The optimal phase
/// is `arg <u, psi>` in the same inner product. With `recenter`, `psi` is
/// first translated so that its density centroid matches that of `u`.
pub fn orbit_distance(
    spectral: &Spectral,
    psi: &ComplexField,
    u: &RealField,
    norm: OrbitNorm,
    recenter: bool,
) -> Result<f64> {
    psi.grid.check_same(&u.grid)?;
    spectral.grid().check_same(&u.grid)?;
    let g = u.grid;
    let shifted;
    let psi_vals = if recenter {
        let cu = centroid(&g, u.values.iter().map(|v| v * v));
        let cp = centroid(&g, psi.values.iter().map(|v| v.norm_sqr()));
        let shift: Vec<f64> = cu.iter().zip(&cp).map(|(a, b)| a - b).collect();
        shifted = spectral.translate(&psi.values, &shift);
        &shifted
    } else {
        &psi.values
    };
    let scale = g.cell_volume() / g.len() as f64;
    let a = spectral.forward(psi_vals);
    let b = spectral.forward_real(&u.values);
    let weight = |k2: f64| match norm {
        OrbitNorm::L2 => 1.0,
        OrbitNorm::H1Proxy => 1.0 + k2,
    };
    let mut aa = 0.0;
    let mut bb = 0.0;
    let mut ab = Complex64::default();
    for ((x, y), &k2) in a.iter().zip(&b).zip(spectral.k2()) {
        let w = weight(k2);
        aa += w * x.norm_sqr();
        bb += w * y.norm_sqr();
        ab += w * y.conj() * x;
    }
    let d2 = (aa + bb - 2.0 * ab.norm()) * scale;
    Ok(d2.max(0.0).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityOptions {
    pub delta: f64,
    pub t_final: f64,
    pub dt: f64,
    pub trials: usize,
    pub seed: u64,
    /// Perturbation band limit as a fraction of the Nyquist frequency.
    pub band: f64,
    pub norm: OrbitNorm,
    pub record_stride: usize,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self {
            delta: 1e-2,
            t_final: 20.0,
            dt: 1e-3,
            trials: 5,
            seed: 0,
            band: 0.25,
            norm: OrbitNorm::H1Proxy,
            record_stride: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityTrial {
    pub seed: u64,
    pub initial_distance: f64,
    pub max_distance: f64,
    pub mass_drift: f64,
    pub energy_drift: f64,
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub delta: f64,
    pub recentered: bool,
    pub trials: Vec<StabilityTrial>,
    pub max_distance: f64,
    /// `max_distance / delta`, the empirical stability constant.
    pub constant: f64,
    /// `max_distance <= 10 delta`.
    pub bounded: bool,
}

/// Perturbs the ground state `u` by `delta` times band-limited noise of unit
/// `H^1`-proxy norm, restores the mass and follows the distance to the
/// phase orbit of `u`. Translations are quotiented out for constant `A`.
/// Trials run in parallel.
pub fn stability_experiment(f: &Functional, u: &RealField, opts: &StabilityOptions) -> Result<StabilityReport> {
    f.grid().check_same(&u.grid)?;
    if !(opts.delta >= 0.0) || opts.trials == 0 {
        return Err(Error::InvalidInput("need delta >= 0 and at least one trial".into()));
    }
    let (wx, wy) = f.weights();
    let recenter = wx.is_constant() && wy.is_constant();
    let c = u.mass();
    let k_cut = opts.band * f.spectral().nyquist();
    let evolve_opts =
        EvolveOptions { t_final: opts.t_final, dt: opts.dt, record_stride: opts.record_stride, snapshot_stride: 0 };
    let trials: Vec<StabilityTrial> = (0..opts.trials as u64)
        .into_par_iter()
        .map(|i| {
            let seed = opts.seed.wrapping_add(i);
            let v = band_limited(&u.grid, &mut ChaCha8Rng::seed_from_u64(seed), k_cut);
            let psi0 = normalize_mass_complex(&u.axpy(opts.delta, &v).to_complex(), c)?;
            let reference = Reference { u, norm: opts.norm, recenter };
            let traj = evolve(f, &psi0, &evolve_opts, Some(reference))?;
            Ok(StabilityTrial {
                seed,
                initial_distance: traj.orbit_distance_series[0],
                max_distance: traj.max_orbit_distance(),
                mass_drift: traj.mass_drift(),
                energy_drift: traj.energy_drift(),
                times: traj.times,
                distances: traj.orbit_distance_series,
            })
        })
        .collect::<Result<_>>()?;
    let max_distance = trials.iter().map(|t| t.max_distance).fold(0.0, f64::max);
    let constant = if opts.delta > 0.0 { max_distance / opts.delta } else { f64::NAN };
    Ok(StabilityReport {
        delta: opts.delta,
        recentered: recenter,
        trials,
        max_distance,
        constant,
        bounded: max_distance <= 10.0 * opts.delta.max(1e-7),
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn fitted_order(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
