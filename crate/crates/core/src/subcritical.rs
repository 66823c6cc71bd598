//! Global minimization of `I` on the mass sphere below the mass-critical
//! exponent, the `sigma(c)` curve, and audits of its structural properties.

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::coeff::{CoeffSpec, Weight};
use crate::error::{Error, Result};
use crate::fft::Spectral;
use crate::functionals::{similarity_rescale, Discretization, Functional};
use crate::grid::{normalize_mass, Grid, RealField};
use crate::optim::{descend, Objective, SolveOptions, SolveReport};
use crate::problem::{similarity_exponents, ProblemSpec, Regime};

struct Sphere<'a> {
    f: &'a Functional,
}

impl Objective for Sphere<'_> {
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
}

/// Gaussian of the target mass centered at the maximum of `A` with width `L/8`.
pub fn default_init(f: &Functional) -> Result<RealField> {
    let g = *f.grid();
    let center = f.spec().coeff.argmax();
    RealField::gaussian(g, &center[..g.d()], g.half_width() / 8.0, f.spec().mass)
}

/// Fills the functional values of a finished descent into its report.
pub(crate) fn finish(f: &Functional, u: Vec<f64>, mut report: SolveReport) -> Result<SolveReport> {
    let u = RealField::new(*f.grid(), u)?;
    let terms = f.terms(&u)?;
    report.kinetic = terms.kinetic;
    report.pohozaev = terms.pohozaev;
    report.mass = u.mass();
    report.u = Some(u);
    Ok(report)
}

/// Minimizes `I` over `{ ||u||_2^2 = c }` with `c = spec.mass`.
pub fn minimize_sigma(f: &Functional, init: Option<&RealField>, opts: &SolveOptions) -> Result<SolveReport> {
    f.spec().require(Regime::Subcritical)?;
    let c = f.spec().mass;
    let start = match init {
        Some(u) => normalize_mass(u, c)?,
        None => default_init(f)?,
    };
    f.grid().check_same(&start.grid)?;
    let (pt, report) = descend(&Sphere { f }, start.values, opts)?;
    if !report.converged {
        warn!(
            "sigma solve at c = {c} stopped after {} iterations, residual {:.3e}",
            report.iterations, report.grad_residual
        );
    }
    finish(f, pt.u, report)
}

/// How the box follows the mass along a curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxScaling {
    /// One grid for every mass.
    #[default]
    Fixed,
    /// Half-width `L c^a` with the autonomous similarity exponent `a`, so the
    /// box tracks the ground-state width. The base discretization is the one
    /// at `c = 1`.
    Similarity,
}

/// Discretization used at mass `c`.
pub fn discretization_at(spec: &ProblemSpec, disc: &Discretization, scaling: BoxScaling, c: f64) -> Discretization {
    match scaling {
        BoxScaling::Fixed => *disc,
        BoxScaling::Similarity => {
            let (a, _) = similarity_exponents(spec.d, spec.mu, spec.p);
            disc.with_half_width(disc.half_width * c.powf(a))
        }
    }
}

/// Transfers a minimizer at mass `c_from` to a starting guess at mass `c_to`
/// on grid `to` using the autonomous similarity map. `None` when `to` is
/// neither the grid of `u` nor similar to it under that map.
pub(crate) fn warm_start(
    spec: &ProblemSpec,
    u: &RealField,
    c_from: f64,
    c_to: f64,
    to: &Grid,
) -> Result<Option<RealField>> {
    let k = c_to / c_from;
    let (a, b) = similarity_exponents(spec.d, spec.mu, spec.p);
    if u.grid == *to {
        return Ok(Some(normalize_mass(&similarity_rescale(u, k, a, b)?, c_to)?));
    }
    let from = u.grid;
    let ratio = to.half_width() / from.half_width();
    if from.d() == to.d() && from.n() == to.n() && (ratio - k.powf(a)).abs() <= 1e-12 * ratio {
        // similar boxes: grid values carry over up to normalization
        return Ok(Some(normalize_mass(&RealField::new(*to, u.values.clone())?, c_to)?));
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub c: f64,
    pub value: f64,
    pub half_width: f64,
    pub report: SolveReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaCurve {
    pub spec_base: ProblemSpec,
    pub points: Vec<CurvePoint>,
}

impl SigmaCurve {
    pub fn sigma(&self, c: f64) -> Option<f64> {
        self.points.iter().find(|p| (p.c - c).abs() <= 1e-12 * c).map(|p| p.value)
    }

    pub fn all_converged(&self) -> bool {
        self.points.iter().all(|p| p.report.converged)
    }
}

/// `sigma(c)` on each mass of `c_list`, warm-starting every solve from the
/// previous minimizer mapped to the next mass.
pub fn sigma_curve(
    spec_base: &ProblemSpec,
    disc: &Discretization,
    scaling: BoxScaling,
    c_list: &[f64],
    opts: &SolveOptions,
) -> Result<SigmaCurve> {
    spec_base.require(Regime::Subcritical)?;
    if c_list.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::InvalidInput("masses must be positive".into()));
    }
    let mut points: Vec<CurvePoint> = Vec::with_capacity(c_list.len());
    let mut prev: Option<(f64, RealField)> = None;
    for &c in c_list {
        let spec = spec_base.with_mass(c)?;
        let dc = discretization_at(&spec, disc, scaling, c);
        let f = Functional::build(&spec, &dc)?;
        let init = match &prev {
            Some((c0, u)) => warm_start(&spec, u, *c0, c, f.grid())?,
            None => None,
        };
        let report = minimize_sigma(&f, init.as_ref(), opts)?;
        info!("sigma({c}) = {:.12e} after {} iterations", report.energy, report.iterations);
        prev = Some((c, report.field().clone()));
        points.push(CurvePoint { c, value: report.energy, half_width: dc.half_width, report });
    }
    Ok(SigmaCurve { spec_base: spec_base.clone(), points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub alpha: f64,
    pub rest: f64,
    pub c: f64,
    /// `sigma(alpha) + sigma(c - alpha) - sigma(c)`; positive when strict.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dilation {
    pub c: f64,
    pub t: f64,
    /// `t sigma(c) - sigma(t c)`; positive when strict.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubadditivityReport {
    pub decompositions: Vec<Decomposition>,
    pub dilations: Vec<Dilation>,
    pub worst_decomposition: f64,
    pub worst_dilation: f64,
    pub pass: bool,
}

/// `sigma(alpha) + sigma(c - alpha) - sigma(c)` for one decomposition.
pub fn decomposition_margin(curve: &SigmaCurve, alpha: f64, c: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < c) {
        return Err(Error::InvalidInput(format!("need 0 < alpha < c, got alpha = {alpha}, c = {c}")));
    }
    let missing = |m: f64| Error::InvalidInput(format!("mass {m} not on the curve"));
    let s = curve.sigma(c).ok_or_else(|| missing(c))?;
    let sa = curve.sigma(alpha).ok_or_else(|| missing(alpha))?;
    let sb = curve.sigma(c - alpha).ok_or_else(|| missing(c - alpha))?;
    Ok(sa + sb - s)
}

/// Checks every decomposition `c = alpha + (c - alpha)` and every dilation
/// `(c, t c)` with `t > 1` present on the curve. `strictness` is the margin
/// a check must exceed to pass.
pub fn audit_subadditivity(curve: &SigmaCurve, strictness: f64) -> Result<SubadditivityReport> {
    if curve.points.len() < 3 {
        return Err(Error::InvalidInput("subadditivity audit needs at least three masses".into()));
    }
    let pts: Vec<&CurvePoint> = curve.points.iter().filter(|p| p.report.converged).collect();
    let mut decompositions = Vec::new();
    let mut dilations = Vec::new();
    for c in &pts {
        for a in &pts {
            if a.c < c.c && a.c <= c.c - a.c + 1e-12 {
                if let Some(rest) = pts.iter().find(|b| (b.c - (c.c - a.c)).abs() <= 1e-12 * c.c) {
                    decompositions.push(Decomposition {
                        alpha: a.c,
                        rest: rest.c,
                        c: c.c,
                        margin: a.value + rest.value - c.value,
                    });
                }
            }
            if a.c > c.c {
                let t = a.c / c.c;
                dilations.push(Dilation { c: c.c, t, margin: t * c.value - a.value });
            }
        }
    }
    let worst = |v: &mut dyn Iterator<Item = f64>| v.fold(f64::INFINITY, f64::min);
    let worst_decomposition = worst(&mut decompositions.iter().map(|d| d.margin));
    let worst_dilation = worst(&mut dilations.iter().map(|d| d.margin));
    let pass = worst_decomposition > strictness && worst_dilation > strictness;
    Ok(SubadditivityReport { decompositions, dilations, worst_decomposition, worst_dilation, pass })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitComparison {
    pub c: f64,
    pub sigma: f64,
    pub sigma_limit: f64,
    /// `sigma_limit - sigma`, nonnegative when the comparison holds.
    pub gap: f64,
    pub pass: bool,
    pub converged: bool,
}

/// Compares `sigma(c)` for the coefficient of `spec` with `sigma_inf(c)` for
/// the constant `A_inf`.
pub fn audit_limit_comparison(
    spec: &ProblemSpec,
    disc: &Discretization,
    opts: &SolveOptions,
) -> Result<LimitComparison> {
    spec.require(Regime::Subcritical)?;
    let f = Functional::build(spec, disc)?;
    let bump = minimize_sigma(&f, None, opts)?;
    let flat_spec = spec.with_coeff(CoeffSpec::constant(spec.coeff.a_inf))?;
    let flat = minimize_sigma(&f.with_spec(&flat_spec)?, None, opts)?;
    let gap = flat.energy - bump.energy;
    Ok(LimitComparison {
        c: spec.mass,
        sigma: bump.energy,
        sigma_limit: flat.energy,
        gap,
        pass: bump.energy <= flat.energy + 1e-8,
        converged: bump.converged && flat.converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingEntry {
    pub c: f64,
    pub sigma: f64,
    pub predicted: f64,
    pub rel_err: f64,
    /// Energy of the mapped unit-mass minimizer, NaN when the grids are not similar.
    pub mapped_energy: f64,
    pub mapped_rel_err: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub a_scal: f64,
    pub b_scal: f64,
    pub exponent: f64,
    pub sigma_one: f64,
    pub entries: Vec<ScalingEntry>,
    pub pass: bool,
}

/// Checks `sigma(c) = c^{1 - 2a} sigma(1)` for a constant coefficient, both
/// by direct solves and by mapping the unit-mass minimizer.
pub fn autonomous_scaling_audit(
    spec: &ProblemSpec,
    disc: &Discretization,
    scaling: BoxScaling,
    c_list: &[f64],
    rel_tol: f64,
    opts: &SolveOptions,
) -> Result<ScalingReport> {
    scaling_audit_with(spec, |s, c| discretization_at(s, disc, scaling, c), c_list, rel_tol, opts)
}

/// `autonomous_scaling_audit` with a caller-chosen discretization per mass.
/// The mapped-minimizer check is skipped for masses whose grid is not
/// reachable by the similarity map.
pub fn scaling_audit_with(
    spec: &ProblemSpec,
    disc_at: impl Fn(&ProblemSpec, f64) -> Discretization,
    c_list: &[f64],
    rel_tol: f64,
    opts: &SolveOptions,
) -> Result<ScalingReport> {
    spec.require(Regime::Subcritical)?;
    if !spec.coeff.is_constant() {
        return Err(Error::InvalidInput("scaling audit needs a constant coefficient".into()));
    }
    let (a, b) = similarity_exponents(spec.d, spec.mu, spec.p);
    let exponent = 1.0 - 2.0 * a;
    let one = spec.with_mass(1.0)?;
    let f1 = Functional::build(&one, &disc_at(&one, 1.0))?;
    let base = minimize_sigma(&f1, None, opts)?;
    let mut entries = Vec::new();
    for &c in c_list {
        let sc = spec.with_mass(c)?;
        let fc = Functional::build(&sc, &disc_at(&sc, c))?;
        let init = warm_start(&sc, base.field(), 1.0, c, fc.grid())?;
        let rep = if c == 1.0 { base.clone() } else { minimize_sigma(&fc, init.as_ref(), opts)? };
        let predicted = c.powf(exponent) * base.energy;
        let mapped_energy = match &init {
            Some(u) => fc.energy(u)?,
            None => f64::NAN,
        };
        entries.push(ScalingEntry {
            c,
            sigma: rep.energy,
            predicted,
            rel_err: (rep.energy - predicted).abs() / predicted.abs(),
            mapped_energy,
            mapped_rel_err: (mapped_energy - rep.energy).abs() / rep.energy.abs(),
            converged: rep.converged,
        });
    }
    let pass = a < 0.0
        && b < 0.0
        && entries
            .iter()
            .all(|e| e.rel_err <= rel_tol && (e.mapped_energy.is_nan() || e.mapped_rel_err <= rel_tol) && e.converged);
    Ok(ScalingReport { a_scal: a, b_scal: b, exponent, sigma_one: base.energy, entries, pass })
}

/// Which weight the second slot of the truncated functional carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationVariant {
    /// `min(A(x), A_0) |u(x)|^p` against `A_0 |u(y)|^p`.
    #[default]
    Threshold,
    /// `min(A(x), A_0) |u(x)|^p` against `A(y) |u(y)|^p`.
    Coefficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationEntry {
    pub c: f64,
    pub sigma: f64,
    pub sigma_truncated: f64,
    /// `sigma - sigma_truncated`; negative when the full problem lies strictly lower.
    pub gap: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub a_zero: f64,
    pub variant: TruncationVariant,
    pub entries: Vec<TruncationEntry>,
    /// Smallest swept mass with `gap < -1e-6`.
    pub c0: Option<f64>,
}

/// Compares `sigma(c)` with the minimum of the functional whose first slot
/// is truncated at `a_zero`.
pub fn audit_truncated_sigma(
    spec: &ProblemSpec,
    a_zero: f64,
    variant: TruncationVariant,
    disc: &Discretization,
    scaling: BoxScaling,
    c_list: &[f64],
    opts: &SolveOptions,
) -> Result<TruncationReport> {
    spec.require(Regime::Subcritical)?;
    if spec.p < 2.0 {
        return Err(Error::Domain("the truncated comparison needs p >= 2".into()));
    }
    let mut entries = Vec::new();
    for &c in c_list {
        let sc = spec.with_mass(c)?;
        let f = Functional::build(&sc, &discretization_at(&sc, disc, scaling, c))?;
        let full = minimize_sigma(&f, None, opts)?;
        let wy = match variant {
            TruncationVariant::Threshold => Weight::Constant(a_zero),
            TruncationVariant::Coefficient => Weight::Coeff(sc.coeff.clone()),
        };
        let wx = Weight::Capped { coeff: sc.coeff.clone(), cap: a_zero };
        let ft = Functional::with_weights(&sc, f.plan().clone(), wx, wy)?;
        let trunc = minimize_sigma(&ft, Some(full.field()), opts)?;
        entries.push(TruncationEntry {
            c,
            sigma: full.energy,
            sigma_truncated: trunc.energy,
            gap: full.energy - trunc.energy,
            converged: full.converged && trunc.converged,
        });
    }
    let c0 = entries
        .iter()
        .filter(|e| e.gap < -1e-6)
        .map(|e| e.c)
        .fold(None, |m: Option<f64>, c| Some(m.map_or(c, |v| v.min(c))));
    Ok(TruncationReport { a_zero, variant, entries, c0 })
}
