//! One function per subcommand. Each writes its artifacts and returns a
//! one-line summary, or the failure class that sets the exit code.

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use choquard::coeff::{
    check_a1, check_a1prime, check_a2, check_a3, check_a3_consequences, check_a4, find_rho, log_space, Samples,
};
use choquard::dynamics::{evolve, stability_experiment, EvolveOptions, Reference, StabilityOptions};
use choquard::grid::normalize_mass_complex;
use choquard::io::Field;
use choquard::riesz::convolve_direct;
use choquard::samples::{band_limited, random_mixture};
use choquard::subcritical::{
    audit_limit_comparison, audit_subadditivity, audit_truncated_sigma, autonomous_scaling_audit, default_init,
    discretization_at, minimize_sigma, CurvePoint, SigmaCurve,
};
use choquard::supercritical::{
    audit_dominance, audit_minimax, audit_rho0, fiber_root, fiber_shape, m_curve, manifold_samples, minimize_m,
};
use choquard::{build_plan, CoeffSpec, Functional, Grid, ProblemSpec, RealField, Regime, SolveReport};

use crate::config::RunConfig;
use crate::failure::Failure;
use crate::output::Artifacts;

type Run = Result<String, Failure>;

#[derive(Serialize)]
struct SubRow {
    c: f64,
    sigma: f64,
    lambda: f64,
    #[serde(rename = "J")]
    j: f64,
    iters: usize,
    converged: bool,
}

impl SubRow {
    fn new(c: f64, r: &SolveReport) -> Self {
        Self { c, sigma: r.energy, lambda: r.lambda, j: r.pohozaev, iters: r.iterations, converged: r.converged }
    }
}

#[derive(Serialize)]
struct SuperRow {
    c: f64,
    m: f64,
    lambda: f64,
    #[serde(rename = "J")]
    j: f64,
    t_u: f64,
    iters: usize,
    converged: bool,
}

#[derive(Serialize)]
struct FiberRow {
    t: f64,
    #[serde(rename = "I")]
    i: f64,
    #[serde(rename = "dIdt")]
    didt: f64,
    #[serde(rename = "J")]
    j: f64,
}

#[derive(Serialize)]
struct TrajectoryRow {
    t: f64,
    mass: f64,
    energy: f64,
    orbit_distance: f64,
}

#[derive(Serialize)]
struct StabilityRow {
    trial: usize,
    seed: u64,
    t: f64,
    orbit_distance: f64,
}

/// Collects the asserted predictions of a run.
#[derive(Default)]
struct Checks(Vec<String>);

impl Checks {
    fn require(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.0.push(what.into());
        }
    }

    fn finish(self, summary: String) -> Run {
        if self.0.is_empty() {
            Ok(summary)
        } else {
            Err(Failure::Audit(format!("{} ({summary})", self.0.join("; "))))
        }
    }
}

fn functional(cfg: &RunConfig) -> Result<(ProblemSpec, Functional), Failure> {
    let spec = cfg.spec()?;
    let f = Functional::build(&spec, &cfg.discretization())?;
    Ok((spec, f))
}

/// The configured input field, checked against the run grid.
fn input_field(cfg: &RunConfig, grid: &Grid) -> Result<Option<RealField>, Failure> {
    let Some(path) = &cfg.inputs.field else {
        return Ok(None);
    };
    match choquard::io::load(path)? {
        Field::Real(u) if u.grid == *grid => Ok(Some(u)),
        Field::Real(u) => Err(Failure::Config(format!(
            "input field {} lives on {:?}, the run grid is {:?}",
            path.display(),
            u.grid,
            grid
        ))),
        Field::Complex(_) => Err(Failure::Config(format!("input field {} is complex", path.display()))),
    }
}

/// The supercritical solver presupposes these coefficient conditions.
fn require_supercritical(spec: &ProblemSpec) -> Result<(), Failure> {
    spec.require(Regime::Supercritical)?;
    let samples = Samples::default();
    let failed: Vec<String> = [
        check_a1(&spec.coeff, &samples),
        check_a3(&spec.coeff, spec.d, spec.mu, spec.p, &samples),
        check_a4(&spec.coeff, spec.d, spec.mu, spec.p, &samples),
    ]
    .into_iter()
    .filter(|r| !r.pass)
    .map(|r| format!("{} (margin {:.3e})", r.condition, r.margin))
    .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Config(format!("coefficient fails {}", failed.join(", "))))
    }
}

/// Edge mass above this share means the box is cutting the state off.
const EDGE_WARN: f64 = 1e-8;

/// How far the finite box may distort a computed state. Reported per run,
/// never asserted.
#[derive(Serialize)]
struct BoxFidelity {
    c: f64,
    half_width: f64,
    /// Share of the mass within the outer tenth of the box.
    edge_mass_fraction: f64,
    /// Relative offset of the coefficient from its limit at the wall.
    coeff_edge_offset: f64,
    center_of_mass: Vec<f64>,
}

fn box_fidelity(spec: &ProblemSpec, c: f64, u: &RealField) -> BoxFidelity {
    let l = u.grid.half_width();
    let edge = u.edge_fraction(0.9);
    if edge > EDGE_WARN {
        warn!("c = {c}: {edge:.2e} of the mass sits near the box wall at half width {l}");
    }
    let a_inf = spec.coeff.a_inf;
    BoxFidelity {
        c,
        half_width: l,
        edge_mass_fraction: edge,
        coeff_edge_offset: ((spec.coeff.value_radial(l) - a_inf) / a_inf).abs(),
        center_of_mass: u.center_of_mass()[..u.grid.d()].to_vec(),
    }
}

fn not_converged(what: &str, iterations: usize, residual: f64) -> Failure {
    Failure::Numerical(format!("{what} did not converge in {iterations} iterations (residual {residual:.3e})"))
}

pub fn solve_sub(cfg: &RunConfig, out: &Artifacts) -> Run {
    let (spec, f) = functional(cfg)?;
    spec.require(Regime::Subcritical)?;
    let init = input_field(cfg, f.grid())?;
    let rep = minimize_sigma(&f, init.as_ref(), &cfg.solver)?;
    out.csv("results.csv", &[SubRow::new(spec.mass, &rep)])?;
    out.json("report.json", &rep)?;
    out.field("ground_state.chqf", &Field::Real(rep.field().clone()))?;
    out.json("box.json", &box_fidelity(&spec, spec.mass, rep.field()))?;
    if !rep.converged {
        return Err(not_converged("sigma solve", rep.iterations, rep.grad_residual));
    }
    let mut checks = Checks::default();
    checks.require(rep.energy < 0.0, "sigma(c) is not negative");
    checks.finish(format!(
        "sigma({}) = {:.12e}, lambda = {:.6e}, {} iterations",
        spec.mass, rep.energy, rep.lambda, rep.iterations
    ))
}

pub fn solve_super(cfg: &RunConfig, out: &Artifacts) -> Run {
    let (spec, f) = functional(cfg)?;
    require_supercritical(&spec)?;
    let init = input_field(cfg, f.grid())?;
    let rep = minimize_m(&f, init.as_ref(), &cfg.solver)?;
    let r = &rep.report;
    let row = SuperRow {
        c: spec.mass,
        m: rep.m_value,
        lambda: r.lambda,
        j: r.pohozaev,
        t_u: r.t_history.last().copied().unwrap_or(1.0),
        iters: r.iterations,
        converged: r.converged,
    };
    out.csv("results.csv", &[row])?;
    out.json("report.json", &rep)?;
    out.field("ground_state.chqf", &Field::Real(rep.field().clone()))?;
    out.json("box.json", &box_fidelity(&spec, spec.mass, rep.field()))?;
    if !rep.converged() {
        return Err(not_converged("manifold solve", r.iterations, r.grad_residual));
    }
    let mut checks = Checks::default();
    checks.require(rep.m_value > 0.0, "m(c) is not positive");
    checks.finish(format!(
        "m({}) = {:.12e}, lambda = {:.6e}, {} iterations",
        spec.mass, rep.m_value, r.lambda, r.iterations
    ))
}

/// Independent solves over the configured masses, run on the thread pool
/// and merged in input order.
fn sweep_sigma(cfg: &RunConfig, spec: &ProblemSpec) -> Result<SigmaCurve, Failure> {
    if cfg.sweep.masses.iter().any(|&c| !(c > 0.0)) {
        return Err(Failure::Config("sweep.masses must be positive".into()));
    }
    let disc = cfg.discretization();
    let points = cfg
        .sweep
        .masses
        .par_iter()
        .map(|&c| {
            let sc = spec.with_mass(c)?;
            let dc = discretization_at(&sc, &disc, cfg.sweep.scaling, c);
            let report = minimize_sigma(&Functional::build(&sc, &dc)?, None, &cfg.solver)?;
            info!("sigma({c}) = {:.12e} after {} iterations", report.energy, report.iterations);
            Ok(CurvePoint { c, value: report.energy, half_width: dc.half_width, report })
        })
        .collect::<choquard::Result<Vec<_>>>()?;
    Ok(SigmaCurve { spec_base: spec.clone(), points })
}

fn write_sigma_curve(out: &Artifacts, curve: &SigmaCurve) -> Result<(), Failure> {
    let rows: Vec<SubRow> = curve.points.iter().map(|p| SubRow::new(p.c, &p.report)).collect();
    out.csv("sigma_curve.csv", &rows)?;
    let fidelity: Vec<BoxFidelity> =
        curve.points.iter().map(|p| box_fidelity(&curve.spec_base, p.c, p.report.field())).collect();
    out.json("box.json", &fidelity)?;
    for p in &curve.points {
        out.field(&format!("fields/sigma_c{}.chqf", p.c), &Field::Real(p.report.field().clone()))?;
    }
    Ok(())
}

fn unconverged_points(curve: &SigmaCurve) -> Option<Failure> {
    let bad: Vec<String> = curve.points.iter().filter(|p| !p.report.converged).map(|p| p.c.to_string()).collect();
    (!bad.is_empty()).then(|| Failure::Numerical(format!("sigma solves at c = {} did not converge", bad.join(", "))))
}

pub fn sigma_curve(cfg: &RunConfig, out: &Artifacts) -> Run {
    let spec = cfg.spec()?;
    spec.require(Regime::Subcritical)?;
    let curve = sweep_sigma(cfg, &spec)?;
    write_sigma_curve(out, &curve)?;
    if let Some(fail) = unconverged_points(&curve) {
        return Err(fail);
    }
    let mut checks = Checks::default();
    checks.require(curve.points.iter().all(|p| p.value < 0.0), "sigma(c) is not negative on the whole curve");
    let values: Vec<String> = curve.points.iter().map(|p| format!("sigma({}) = {:.8e}", p.c, p.value)).collect();
    checks.finish(values.join(", "))
}

pub fn m_curve_cmd(cfg: &RunConfig, out: &Artifacts) -> Run {
    let spec = cfg.spec()?;
    require_supercritical(&spec)?;
    let curve = m_curve(&spec, &cfg.discretization(), cfg.sweep.scaling, &cfg.sweep.masses, &cfg.solver)?;
    let rows: Vec<SuperRow> = curve
        .points
        .iter()
        .map(|p| {
            let r = &p.report.report;
            SuperRow {
                c: p.c,
                m: p.value,
                lambda: r.lambda,
                j: r.pohozaev,
                t_u: r.t_history.last().copied().unwrap_or(1.0),
                iters: r.iterations,
                converged: r.converged,
            }
        })
        .collect();
    out.csv("m_curve.csv", &rows)?;
    out.json("m_curve.json", &serde_json::json!({ "gaps": curve.gaps, "nonincreasing": curve.nonincreasing }))?;
    let fidelity: Vec<BoxFidelity> = curve.points.iter().map(|p| box_fidelity(&spec, p.c, p.report.field())).collect();
    out.json("box.json", &fidelity)?;
    let bad: Vec<String> = curve.points.iter().filter(|p| !p.report.converged()).map(|p| p.c.to_string()).collect();
    if !bad.is_empty() {
        return Err(Failure::Numerical(format!("manifold solves at c = {} did not converge", bad.join(", "))));
    }
    let mut checks = Checks::default();
    checks.require(curve.nonincreasing, "m(c) increases along the curve");
    checks.require(curve.points.iter().all(|p| p.value > 0.0), "m(c) is not positive on the whole curve");
    let values: Vec<String> = curve.points.iter().map(|p| format!("m({}) = {:.8e}", p.c, p.value)).collect();
    checks.finish(values.join(", "))
}

pub fn fiber_scan(cfg: &RunConfig, out: &Artifacts) -> Run {
    let (spec, f) = functional(cfg)?;
    let fc = &cfg.fiber;
    if !(fc.t_min > 0.0 && fc.t_max > fc.t_min && fc.points >= 2) {
        return Err(Failure::Config("fiber needs 0 < t_min < t_max and at least two points".into()));
    }
    let u = match input_field(cfg, f.grid())? {
        Some(u) => u,
        None => default_init(&f)?,
    };
    let scan = f.fiber_scan(&u, &log_space(fc.t_min, fc.t_max, fc.points))?;
    let rows: Vec<FiberRow> = (0..scan.t_values.len())
        .map(|i| FiberRow { t: scan.t_values[i], i: scan.energies[i], didt: scan.derivatives[i], j: scan.pohozaev[i] })
        .collect();
    out.csv("fiber_scan.csv", &rows)?;
    let sign_changes = scan.pohozaev.windows(2).filter(|w| (w[0] > 0.0) != (w[1] > 0.0)).count();
    let mut summary = format!("{} dilations, {sign_changes} sign changes of J", rows.len());
    let mut report = serde_json::json!({ "sign_changes": sign_changes });
    if spec.regime == Regime::Supercritical {
        let t_root = fiber_root(&f, &u)?;
        let shape = fiber_shape(&f, &u, fc.points)?;
        summary += &format!(", root t_u = {t_root:.8e}");
        report = serde_json::json!({ "sign_changes": sign_changes, "t_root": t_root, "shape": shape });
    }
    out.json("fiber_scan.json", &report)?;
    Ok(summary)
}

pub fn audit_sub(cfg: &RunConfig, out: &Artifacts) -> Run {
    let spec = cfg.spec()?;
    spec.require(Regime::Subcritical)?;
    let disc = cfg.discretization();
    let curve = sweep_sigma(cfg, &spec)?;
    write_sigma_curve(out, &curve)?;
    if let Some(fail) = unconverged_points(&curve) {
        return Err(fail);
    }
    let mut checks = Checks::default();
    let sub = audit_subadditivity(&curve, 1e-6)?;
    checks.require(sub.pass, "strict subadditivity");
    let mut report = serde_json::json!({ "subadditivity": sub });
    let mut summary = format!("subadditivity margin {:.3e}", sub.worst_decomposition);
    if spec.coeff.is_constant() {
        let masses: Vec<f64> = cfg.sweep.masses.iter().copied().filter(|&c| c != 1.0).collect();
        let scaling = autonomous_scaling_audit(&spec, &disc, cfg.sweep.scaling, &masses, 1e-2, &cfg.solver)?;
        checks.require(scaling.pass, "autonomous scaling law");
        summary += &format!(", scaling exponent {:.4}", scaling.exponent);
        report["scaling"] = serde_json::to_value(&scaling).expect("report serializes");
    } else {
        let limit = audit_limit_comparison(&spec, &disc, &cfg.solver)?;
        checks.require(limit.converged, "limit comparison solves converge");
        checks.require(limit.pass, "sigma(c) <= sigma_inf(c)");
        summary += &format!(", limit gap {:.3e}", limit.gap);
        report["limit_comparison"] = serde_json::to_value(&limit).expect("report serializes");
        if spec.p >= 2.0 {
            // exploratory: the crossover mass is reported, not asserted
            let trunc = audit_truncated_sigma(
                &spec,
                cfg.sweep.a_zero,
                cfg.sweep.variant,
                &disc,
                cfg.sweep.scaling,
                &cfg.sweep.masses,
                &cfg.solver,
            )?;
            summary += &format!(", truncation c0 {:?}", trunc.c0);
            report["truncation"] = serde_json::to_value(&trunc).expect("report serializes");
        }
    }
    out.json("audit_sub.json", &report)?;
    checks.finish(summary)
}

pub fn audit_super(cfg: &RunConfig, out: &Artifacts) -> Run {
    let (spec, f) = functional(cfg)?;
    require_supercritical(&spec)?;
    let init = input_field(cfg, f.grid())?;
    let rep = minimize_m(&f, init.as_ref(), &cfg.solver)?;
    if !rep.converged() {
        return Err(not_converged("manifold solve", rep.report.iterations, rep.report.grad_residual));
    }
    let mut checks = Checks::default();
    checks.require(rep.m_value > 0.0, "m(c) is not positive");

    let seed = cfg.dynamics.seed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = f.grid().half_width() / 8.0;
    let mut shapes = Vec::with_capacity(cfg.sweep.samples);
    for _ in 0..cfg.sweep.samples {
        let u = random_mixture(f.grid(), &mut rng, scale, spec.mass)?;
        shapes.push(fiber_shape(&f, &u, cfg.fiber.points)?);
    }
    let single = shapes.iter().filter(|s| s.pass).count();
    checks.require(single == shapes.len(), format!("fiber shape holds on {single}/{} fields", shapes.len()));

    let on_manifold = manifold_samples(&f, cfg.sweep.samples.min(20), seed)?;
    let t_values = log_space(0.2, 5.0, 20);
    let mut dominance = vec![audit_dominance(&f, rep.field(), &t_values)?];
    for u in &on_manifold {
        dominance.push(audit_dominance(&f, u, &t_values)?);
    }
    checks.require(dominance.iter().all(|d| d.pass), "I(u) >= I(u^t) on the manifold");
    let rho = audit_rho0(&f, &on_manifold)?;
    checks.require(rho.pass, "positive lower bound of the kinetic energy on the manifold");

    let directions = (0..cfg.sweep.directions)
        .map(|_| random_mixture(f.grid(), &mut rng, scale, spec.mass))
        .collect::<choquard::Result<Vec<_>>>()?;
    let minimax =
        audit_minimax(&f, rep.m_value, &directions, &log_space(cfg.fiber.t_min, cfg.fiber.t_max, cfg.fiber.points))?;
    checks.require(minimax.pass, "max_t I(u^t) >= m(c)");

    out.json(
        "audit_super.json",
        &serde_json::json!({
            "m": rep.m_value,
            "solve": rep,
            "fiber_shapes": shapes,
            "dominance": dominance,
            "rho0": rho,
            "minimax": minimax,
        }),
    )?;
    out.field("ground_state.chqf", &Field::Real(rep.field().clone()))?;
    checks.finish(format!(
        "m = {:.10e}; single sign change {single}/{}; minimax margin {:.3e}; rho0 {:.4e}",
        rep.m_value,
        shapes.len(),
        minimax.worst_margin,
        rho.rho0_observed
    ))
}

pub fn check_coeff(cfg: &RunConfig, out: &Artifacts) -> Run {
    let p = &cfg.problem;
    let coeff: &CoeffSpec = &p.coeff;
    coeff.validate()?;
    let samples = Samples::default();
    let a1 = check_a1(coeff, &samples);
    let a2 = check_a2(coeff, p.d, p.mu, p.p, &samples);
    let a3 = check_a3(coeff, p.d, p.mu, p.p, &samples);
    let a4 = check_a4(coeff, p.d, p.mu, p.p, &samples);
    let consequences = check_a3_consequences(coeff, p.d, p.mu, p.p, &samples);
    let grid = cfg.discretization().grid(p.d)?;
    let superlevel = check_a1prime(coeff, cfg.sweep.a_zero, &grid);
    let rho = find_rho(coeff, p.d, p.mu, p.p, &samples);
    out.json(
        "check_coeff.json",
        &serde_json::json!({
            "coeff": coeff,
            "d": p.d,
            "mu": p.mu,
            "p": p.p,
            "conditions": [&a1, &a2, &a3, &a4, &consequences],
            "superlevel": superlevel,
            "smallest_rho": rho,
        }),
    )?;
    let mut checks = Checks::default();
    for r in [&a1, &a3, &a4] {
        checks.require(r.pass, format!("{} fails (margin {:.3e})", r.condition, r.margin));
    }
    let status = |r: &choquard::CheckReport| format!("{} {}", r.condition, if r.pass { "pass" } else { "fail" });
    checks.finish([&a1, &a2, &a3, &a4, &consequences].map(status).join(", "))
}

/// Ground state of the configured problem, started from the input field if any.
fn ground_state(cfg: &RunConfig, spec: &ProblemSpec, f: &Functional) -> Result<(RealField, f64), Failure> {
    let init = input_field(cfg, f.grid())?;
    match spec.regime {
        Regime::Subcritical => {
            let rep = minimize_sigma(f, init.as_ref(), &cfg.solver)?;
            if !rep.converged {
                return Err(not_converged("sigma solve", rep.iterations, rep.grad_residual));
            }
            Ok((rep.field().clone(), rep.lambda))
        }
        Regime::Supercritical => {
            require_supercritical(spec)?;
            let rep = minimize_m(f, init.as_ref(), &cfg.solver)?;
            if !rep.converged() {
                return Err(not_converged("manifold solve", rep.report.iterations, rep.report.grad_residual));
            }
            Ok((rep.field().clone(), rep.report.lambda))
        }
        other => Err(Failure::Config(format!("no ground-state solver for the {other} regime"))),
    }
}

pub fn evolve_cmd(cfg: &RunConfig, out: &Artifacts) -> Run {
    let (spec, f) = functional(cfg)?;
    let dc = &cfg.dynamics;
    let (u, lambda) = ground_state(cfg, &spec, &f)?;
    let mut psi0 = u.to_complex();
    if dc.perturb {
        let mut rng = ChaCha8Rng::seed_from_u64(dc.seed);
        let v = band_limited(f.grid(), &mut rng, dc.band * f.spectral().nyquist());
        psi0 = normalize_mass_complex(&u.axpy(dc.delta, &v).to_complex(), spec.mass)?;
    }
    let opts = EvolveOptions {
        t_final: dc.t_final,
        dt: dc.dt,
        record_stride: dc.record_stride.max(1),
        snapshot_stride: cfg.outputs.snapshot_stride,
    };
    let recenter = spec.coeff.is_constant();
    let traj = evolve(&f, &psi0, &opts, Some(Reference { u: &u, norm: dc.norm, recenter }))?;
    let rows: Vec<TrajectoryRow> = (0..traj.times.len())
        .map(|i| TrajectoryRow {
            t: traj.times[i],
            mass: traj.mass_series[i],
            energy: traj.energy_series[i],
            orbit_distance: traj.orbit_distance_series[i],
        })
        .collect();
    out.csv("trajectory.csv", &rows)?;
    for (k, (_, psi)) in traj.snapshots.iter().enumerate() {
        out.field(&format!("snapshots/snap_{k:06}.chqf"), &Field::Complex(psi.clone()))?;
    }
    if let Some(psi) = &traj.final_state {
        out.field("final_state.chqf", &Field::Complex(psi.clone()))?;
    }
    out.field("ground_state.chqf", &Field::Real(u))?;
    let summary = serde_json::json!({
        "lambda": lambda,
        "mass_drift": traj.mass_drift(),
        "energy_drift": traj.energy_drift(),
        "max_orbit_distance": traj.max_orbit_distance(),
        "snapshot_times": traj.snapshots.iter().map(|s| s.0).collect::<Vec<_>>(),
    });
    out.json("evolve.json", &summary)?;
    let mut checks = Checks::default();
    checks.require(traj.mass_drift() <= 1e-9, format!("mass drift {:.3e}", traj.mass_drift()));
    checks.finish(format!(
        "mass drift {:.3e}, energy drift {:.3e}, max orbit distance {:.3e}",
        traj.mass_drift(),
        traj.energy_drift(),
        traj.max_orbit_distance()
    ))
}

pub fn stability(cfg: &RunConfig, out: &Artifacts) -> Run {
    let (spec, f) = functional(cfg)?;
    let dc = &cfg.dynamics;
    let (u, _) = ground_state(cfg, &spec, &f)?;
    let opts = StabilityOptions {
        delta: dc.delta,
        t_final: dc.t_final,
        dt: dc.dt,
        trials: dc.trials,
        seed: dc.seed,
        band: dc.band,
        norm: dc.norm,
        record_stride: dc.record_stride.max(1),
    };
    let rep = stability_experiment(&f, &u, &opts)?;
    let mut rows = Vec::new();
    for (k, trial) in rep.trials.iter().enumerate() {
        for (&t, &dist) in trial.times.iter().zip(&trial.distances) {
            rows.push(StabilityRow { trial: k, seed: trial.seed, t, orbit_distance: dist });
        }
    }
    out.csv("stability.csv", &rows)?;
    out.json(
        "stability.json",
        &serde_json::json!({
            "delta": rep.delta,
            "recentered": rep.recentered,
            "max_distance": rep.max_distance,
            "constant": rep.constant,
            "bounded": rep.bounded,
            "initial_distances": rep.trials.iter().map(|t| t.initial_distance).collect::<Vec<_>>(),
            "trial_max_distances": rep.trials.iter().map(|t| t.max_distance).collect::<Vec<_>>(),
            "note": "distance to the computed orbit; an upper bound for the distance to the full ground-state set",
        }),
    )?;
    let summary = format!(
        "max orbit distance {:.4e} over {} trials, constant {:.3}",
        rep.max_distance,
        rep.trials.len(),
        rep.constant
    );
    let mut checks = Checks::default();
    if spec.regime == Regime::Subcritical {
        checks.require(rep.bounded, "orbit distance exceeds 10 delta");
    } else if !rep.bounded {
        warn!("supercritical orbit distance exceeds 10 delta; reported only");
    }
    checks.finish(summary)
}

/// Riesz oracle, gradient and fiber chain-rule suites on small fixed grids.
pub fn selftest(out: &Artifacts) -> Run {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checks = Checks::default();

    let mut riesz = 0.0f64;
    for case in 0..20 {
        let g = if case < 10 { Grid::new(1, 5.0, 64)? } else { Grid::new(2, 3.0, 16)? };
        let plan = build_plan(&g, rng.random_range(0.2..0.95) * g.d() as f64)?;
        let u = RealField::new(g, (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        let fast = plan.convolve(&u)?;
        let direct = convolve_direct(&g, plan.mu(), &u)?;
        let err = fast.values.iter().zip(&direct.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        riesz = riesz.max(err / direct.max_abs());
    }
    checks.require(riesz <= 1e-12, format!("riesz oracle mismatch {riesz:.3e}"));

    let mut gradient = 0.0f64;
    let mut chain = 0.0f64;
    for (p, coeff) in
        [(2.5, CoeffSpec::constant(1.0)), (3.5, CoeffSpec::exp_bump(1.0, 1.0, 1.0)), (4.0, CoeffSpec::constant(1.0))]
    {
        let spec = ProblemSpec::new(1, 0.5, p, 1.0, coeff)?;
        let f = Functional::build(&spec, &choquard::functionals::Discretization::new(8.0, 128))?;
        for _ in 0..10 {
            let u = random_mixture(f.grid(), &mut rng, 1.5, 1.0)?;
            let v = band_limited(f.grid(), &mut rng, 0.25 * f.spectral().nyquist());
            let grad = f.gradient(&u)?;
            let analytic = grad.inner(&v);
            let central =
                |e: f64| (f.energy_slice(&u.axpy(e, &v).values) - f.energy_slice(&u.axpy(-e, &v).values)) / (2.0 * e);
            let fd = (4.0 * central(5e-5) - central(1e-4)) / 3.0;
            let scale = analytic.abs().max(1e-3 * grad.norm() * v.norm());
            gradient = gradient.max((fd - analytic).abs() / scale);

            let ts = log_space(0.5, 2.0, 9);
            let scan = f.fiber_scan(&u, &ts)?;
            for (&t, &deriv) in ts.iter().zip(&scan.derivatives) {
                let h = 1e-4 * t;
                let fd = (f.fiber_terms(&u.values, t + h).energy - f.fiber_terms(&u.values, t - h).energy) / (2.0 * h);
                let scale = deriv.abs().max(1e-3 * scan.energies.iter().fold(0.0f64, |m, e| m.max(e.abs())) / t);
                chain = chain.max((fd - deriv).abs() / scale);
            }
        }
    }
    checks.require(gradient <= 1e-6, format!("gradient mismatch {gradient:.3e}"));
    checks.require(chain <= 1e-6, format!("fiber chain rule mismatch {chain:.3e}"));
    out.json("selftest.json", &serde_json::json!({ "riesz": riesz, "gradient": gradient, "fiber_chain_rule": chain }))?;
    checks.finish(format!("riesz {riesz:.2e}, gradient {gradient:.2e}, fiber chain rule {chain:.2e}"))
}
