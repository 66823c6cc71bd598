//! Normalized ground states of nonautonomous Choquard equations
//! `-Delta u - lambda u = (|x|^{-mu} * A|u|^p) A |u|^{p-2} u` on the mass
//! sphere `||u||_2^2 = c`, together with split-step dynamics of the
//! associated Schrodinger flow.

// `!(x > 0.0)` guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coeff;
pub mod dynamics;
pub mod error;
pub mod fft;
pub mod functionals;
pub mod grid;
pub mod io;
pub mod optim;
pub mod problem;
pub mod riesz;
pub mod samples;
pub mod subcritical;
pub mod supercritical;
pub mod zeta;

pub use coeff::{CheckReport, CoeffSpec, Family, Weight};
pub use error::{Error, Result};
pub use functionals::{fiber_rescale, rho_rescale, FiberScan, Functional, Terms};
pub use grid::{mass, normalize_mass, ComplexField, Grid, RealField};
pub use optim::{SolveOptions, SolveReport};
pub use problem::{classify_regime, exponents, ExponentSet, ProblemSpec, Regime};
pub use riesz::{build_plan, RieszPlan, SelfCell};
