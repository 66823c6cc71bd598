//! Process outcome classes and their exit codes.

use std::fmt;

use choquard::Error;

#[derive(Debug)]
pub enum Failure {
    /// A prediction asserted by the run did not hold.
    Audit(String),
    /// Unreadable or inconsistent configuration, rejected before compute.
    Config(String),
    /// A solve, projection or write failed while computing.
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Audit(_) => 1,
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    pub fn io(e: std::io::Error) -> Self {
        Failure::Numerical(format!("i/o: {e}"))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Audit(m) => write!(f, "audit failure: {m}"),
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(_)
            | Error::Regime { .. }
            | Error::InvalidInput(_)
            | Error::Format(_)
            | Error::GridMismatch { .. } => Failure::Config(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use choquard::Regime;

    #[test]
    fn core_errors_map_to_exit_classes() {
        let regime = Error::Regime { expected: Regime::Subcritical, found: Regime::MassCritical };
        assert_eq!(Failure::from(regime).exit_code(), 2);
        assert_eq!(Failure::from(Error::Bracket("no sign change".into())).exit_code(), 3);
        assert_eq!(Failure::Audit("x".into()).exit_code(), 1);
    }
}
