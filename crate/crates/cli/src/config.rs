//! Run configuration: TOML on input, dotted `--set` overrides, and the
//! resolved form echoed into every manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use choquard::dynamics::OrbitNorm;
use choquard::functionals::Discretization;
use choquard::subcritical::{BoxScaling, TruncationVariant};
use choquard::{CoeffSpec, ProblemSpec, SelfCell, SolveOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub d: usize,
    pub mu: f64,
    pub p: f64,
    pub mass: f64,
    pub coeff: CoeffSpec,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self { d: 1, mu: 0.5, p: 2.5, mass: 1.0, coeff: CoeffSpec::constant(1.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub half_width: f64,
    pub n: usize,
    pub self_cell: SelfCell,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { half_width: 32.0, n: 1024, self_cell: SelfCell::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Masses of `sigma-curve`, `m-curve` and the curve audits.
    pub masses: Vec<f64>,
    pub scaling: BoxScaling,
    /// Truncation threshold of the crossover audit.
    pub a_zero: f64,
    pub variant: TruncationVariant,
    /// Random fields drawn by `audit-super`.
    pub samples: usize,
    /// Random directions of the minimax audit.
    pub directions: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            masses: vec![0.5, 1.0, 1.5, 2.0],
            scaling: BoxScaling::Fixed,
            a_zero: 1.5,
            variant: TruncationVariant::Threshold,
            samples: 50,
            directions: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiberConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
}

impl Default for FiberConfig {
    fn default() -> Self {
        Self { t_min: 1e-2, t_max: 1e2, points: 400 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsConfig {
    pub t_final: f64,
    pub dt: f64,
    pub delta: f64,
    /// `evolve` starts from the perturbed ground state instead of the ground state.
    pub perturb: bool,
    pub trials: usize,
    /// Seed of every random draw of the run.
    pub seed: u64,
    pub band: f64,
    pub norm: OrbitNorm,
    pub record_stride: usize,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            t_final: 10.0,
            dt: 1e-3,
            delta: 1e-2,
            perturb: false,
            trials: 5,
            seed: 0,
            band: 0.25,
            norm: OrbitNorm::H1Proxy,
            record_stride: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// CHQF snapshot every this many steps of `evolve`; none when 0.
    pub snapshot_stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: PathBuf::from("choquard-out"), snapshot_stride: 0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// CHQF field used as the starting point of solves and as the scanned field of `fiber-scan`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub grid: GridConfig,
    pub solver: SolveOptions,
    pub sweep: SweepConfig,
    pub fiber: FiberConfig,
    pub dynamics: DynamicsConfig,
    pub outputs: OutputConfig,
    pub inputs: InputConfig,
}

impl RunConfig {
    pub fn spec(&self) -> choquard::Result<ProblemSpec> {
        let p = &self.problem;
        ProblemSpec::new(p.d, p.mu, p.p, p.mass, p.coeff.clone())
    }

    pub fn discretization(&self) -> Discretization {
        Discretization { half_width: self.grid.half_width, n: self.grid.n, self_cell: self.grid.self_cell }
    }
}

/// Reads a TOML config, or the `config` member of a manifest when the path
/// ends in `.json`, applies the overrides and resolves it.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, String> {
    let origin = path.map_or("config".to_string(), |p| p.display().to_string());
    let (mut table, source) = match path {
        None => (toml::Table::new(), None),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{origin}: {e}"))?;
            if path.extension().is_some_and(|e| e == "json") {
                (from_manifest(&text).map_err(|e| format!("{origin}: {e}"))?, None)
            } else {
                (text.parse::<toml::Table>().map_err(|e| format!("{origin}: {e}"))?, Some(text))
            }
        }
    };
    // without overrides the original text is decoded so diagnostics point at its lines
    if let (Some(text), true) = (source, overrides.is_empty()) {
        return toml::from_str(&text).map_err(|e| format!("{origin}: {e}"));
    }
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let text = toml::to_string(&table).map_err(|e| e.to_string())?;
    toml::from_str(&text).map_err(|e| format!("{origin} (after overrides): {e}"))
}

fn from_manifest(text: &str) -> Result<toml::Table, String> {
    let manifest: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let config = manifest.get("config").ok_or("manifest has no `config` member")?;
    toml::Table::try_from(config).map_err(|e| e.to_string())
}

/// Applies `a.b.c=value`. The value is read as a TOML value and falls back
/// to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), String> {
    let (key, raw) =
        assignment.split_once('=').ok_or_else(|| format!("override `{assignment}` is not of the form key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("override key `{key}` has an empty segment"));
    }
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for part in path {
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(format!("override key `{key}`: `{part}` is not a table")),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use choquard::Family;

    #[test]
    fn defaults_resolve_from_an_empty_config() {
        let cfg = load(None, &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert!(cfg.spec().is_ok());
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let cfg = load(
            None,
            &[
                "problem.p=4".into(),
                "problem.coeff.family=exp_bump".into(),
                "problem.coeff.b=2.5".into(),
                "sweep.masses=[1, 2]".into(),
                "outputs.directory=runs/a".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.problem.p, 4.0);
        assert_eq!(cfg.problem.coeff.family, Family::ExpBump);
        assert_eq!(cfg.problem.coeff.b, 2.5);
        assert_eq!(cfg.sweep.masses, vec![1.0, 2.0]);
        assert_eq!(cfg.outputs.directory, PathBuf::from("runs/a"));
    }

    #[test]
    fn unknown_keys_and_bad_assignments_are_rejected() {
        let err = load(None, &["solver.tolerance=1e-3".into()]).unwrap_err();
        assert!(err.contains("tolerance"), "{err}");
        assert!(load(None, &["solver.tol".into()]).is_err());
        assert!(load(None, &["grid.n.x=3".into()]).is_err());
    }

    #[test]
    fn parse_errors_carry_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "[problem]\nd = 1\nmu = = 0.5\n").unwrap();
        let err = load(Some(&path), &[]).unwrap_err();
        assert!(err.contains("line 3"), "{err}");
        std::fs::write(&path, "[problem]\nd = 1\n\n[grid]\nn = \"many\"\n").unwrap();
        let err = load(Some(&path), &[]).unwrap_err();
        assert!(err.contains("line 5"), "{err}");
    }

    #[test]
    fn manifest_config_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.problem.mass = 2.0;
        cfg.solver.tol = 1e-10;
        let manifest = serde_json::json!({ "config": cfg });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        std::fs::write(&path, manifest.to_string()).unwrap();
        assert_eq!(load(Some(&path), &[]).unwrap(), cfg);
    }
}
