//! Exponent bookkeeping and the problem description shared by every solver.

use serde::{Deserialize, Serialize};

use crate::coeff::CoeffSpec;
use crate::error::{Error, Result};

/// Relative width of the band around the mass-critical exponent that is
/// classified as [`Regime::MassCritical`].
pub const CLASSIFICATION_EPS: f64 = 1e-9;

/// Critical exponents attached to a dimension `d` and Riesz order `mu`.
///
/// `upper` and `sobolev` are `f64::INFINITY` for `d <= 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentSet {
    /// Lower HLS exponent `(2d - mu) / d`.
    pub lower: f64,
    /// Mass-critical exponent `(2d - mu + 2) / d`.
    pub mass_critical: f64,
    /// Upper HLS exponent `(2d - mu) / (d - 2)`.
    pub upper: f64,
    /// Sobolev exponent `2d / (d - 2)`.
    pub sobolev: f64,
}

pub fn exponents(d: usize, mu: f64) -> Result<ExponentSet> {
    if !(1..=3).contains(&d) {
        return Err(Error::Domain(format!("dimension {d} outside 1..=3")));
    }
    let df = d as f64;
    if !(mu > 0.0 && mu < df) {
        return Err(Error::Domain(format!("mu = {mu} outside (0, {d})")));
    }
    let (upper, sobolev) =
        if d >= 3 { ((2.0 * df - mu) / (df - 2.0), 2.0 * df / (df - 2.0)) } else { (f64::INFINITY, f64::INFINITY) };
    Ok(ExponentSet { lower: (2.0 * df - mu) / df, mass_critical: (2.0 * df - mu + 2.0) / df, upper, sobolev })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    Subcritical,
    MassCritical,
    Supercritical,
    OutOfRange,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Regime::Subcritical => "subcritical",
            Regime::MassCritical => "mass-critical",
            Regime::Supercritical => "supercritical",
            Regime::OutOfRange => "out-of-range",
        };
        f.write_str(s)
    }
}

impl ExponentSet {
    pub fn classify(&self, p: f64) -> Regime {
        if (p - self.mass_critical).abs() <= CLASSIFICATION_EPS * self.mass_critical {
            Regime::MassCritical
        } else if p > self.lower && p < self.mass_critical {
            Regime::Subcritical
        } else if p > self.mass_critical && p < self.upper {
            Regime::Supercritical
        } else {
            Regime::OutOfRange
        }
    }
}

pub fn classify_regime(d: usize, mu: f64, p: f64) -> Result<Regime> {
    Ok(exponents(d, mu)?.classify(p))
}

/// Full description of one instance of the constrained problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub d: usize,
    pub mu: f64,
    pub p: f64,
    pub mass: f64,
    pub coeff: CoeffSpec,
    pub regime: Regime,
}

impl ProblemSpec {
    /// Builds a spec, deriving the regime tag from the exponents.
    pub fn new(d: usize, mu: f64, p: f64, mass: f64, coeff: CoeffSpec) -> Result<Self> {
        let regime = classify_regime(d, mu, p)?;
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Domain(format!("mass {mass} must be positive")));
        }
        coeff.validate()?;
        Ok(Self { d, mu, p, mass, coeff, regime })
    }

    pub fn exponents(&self) -> ExponentSet {
        exponents(self.d, self.mu).expect("validated at construction")
    }

    /// `d p - 2 d + mu`, the power of `t` carried by the nonlocal term along the fiber.
    pub fn fiber_exponent(&self) -> f64 {
        self.d as f64 * self.p - 2.0 * self.d as f64 + self.mu
    }

    pub fn with_mass(&self, mass: f64) -> Result<Self> {
        Self::new(self.d, self.mu, self.p, mass, self.coeff.clone())
    }

    pub fn with_coeff(&self, coeff: CoeffSpec) -> Result<Self> {
        Self::new(self.d, self.mu, self.p, self.mass, coeff)
    }

    pub fn require(&self, regime: Regime) -> Result<()> {
        if self.regime == regime {
            Ok(())
        } else {
            Err(Error::Regime { expected: regime, found: self.regime })
        }
    }
}

/// Exponents `(a, b)` of the autonomous similarity `u_c(x) = c^{-b} u_1(x / c^a)`
/// mapping a minimizer at mass 1 to one at mass `c`.
pub fn similarity_exponents(d: usize, mu: f64, p: f64) -> (f64, f64) {
    let df = d as f64;
    let denom = df * (p - 2.0) + mu - 2.0;
    let a = (p - 1.0) / denom;
    let b = (df + 2.0 - mu) / (2.0 * denom);
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_values() {
        let e = exponents(3, 1.0).unwrap();
        assert!((e.lower - 5.0 / 3.0).abs() < 1e-15);
        assert!((e.mass_critical - 7.0 / 3.0).abs() < 1e-15);
        assert_eq!(e.upper, 5.0);
        assert_eq!(e.sobolev, 6.0);

        let e = exponents(1, 0.5).unwrap();
        assert_eq!(e.lower, 1.5);
        assert_eq!(e.mass_critical, 3.5);
        assert!(e.upper.is_infinite() && e.sobolev.is_infinite());

        let e = exponents(2, 1.0).unwrap();
        assert_eq!(e.lower, 1.5);
        assert_eq!(e.mass_critical, 2.5);
        assert!(e.upper.is_infinite());
    }

    #[test]
    fn exponent_domain_errors() {
        assert!(matches!(exponents(3, 0.0), Err(Error::Domain(_))));
        assert!(matches!(exponents(3, 3.0), Err(Error::Domain(_))));
        assert!(matches!(exponents(4, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn regimes() {
        assert_eq!(classify_regime(3, 1.0, 2.0).unwrap(), Regime::Subcritical);
        assert_eq!(classify_regime(3, 1.0, 7.0 / 3.0).unwrap(), Regime::MassCritical);
        assert_eq!(classify_regime(3, 1.0, 3.0).unwrap(), Regime::Supercritical);
        assert_eq!(classify_regime(3, 1.0, 6.0).unwrap(), Regime::OutOfRange);
        assert_eq!(classify_regime(3, 1.0, 1.5).unwrap(), Regime::OutOfRange);
    }

    #[test]
    fn similarity_exponent_values() {
        let (a, b) = similarity_exponents(3, 1.0, 2.0);
        assert_eq!((a, b), (-1.0, -2.0));
        let (a, b) = similarity_exponents(1, 0.5, 2.5);
        assert_eq!(a, -1.5);
        assert_eq!(b, -1.25);
    }

    #[test]
    fn mass_must_be_positive() {
        let c = CoeffSpec::constant(1.0);
        assert!(ProblemSpec::new(1, 0.5, 2.5, 0.0, c.clone()).is_err());
        assert!(ProblemSpec::new(1, 0.5, 2.5, 1.0, c).is_ok());
    }
}
