//! Experiment configuration: a single TOML file, unknown keys rejected.

use std::path::{Path, PathBuf};

use pettis_core::girsanov::{GirsanovSetup, DEFAULT_PROP_TOL};
use pettis_core::integrate::{ScalarField, VectorField};
use pettis_core::paths::TimeGrid;
use pettis_core::vecspace::{DualFamily, NormTag};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Overrides `[output] dir` when set.
pub const OUTPUT_DIR_ENV: &str = "PETTIS_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub space: SpaceConfig,
    pub grid: GridConfig,
    pub mc: McConfig,
    pub process: ProcessConfig,
    pub girsanov: GirsanovConfig,
    pub bridge: BridgeConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub dim: usize,
    pub norm: NormTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub paths: usize,
    pub seed: u64,
}

/// Per-coordinate polynomial coefficients in `t`, ascending powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessConfig {
    pub psi: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GirsanovConfig {
    pub r: RSetting,
}

/// `"auto"`, a constant, or polynomial coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RSetting {
    Keyword(String),
    Constant(f64),
    Polynomial(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeConfig {
    pub s: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads, applies the output-dir override from the environment, validates.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|d| !d.is_empty()) {
            cfg.output.dir = PathBuf::from(dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Usage(msg));
        if self.space.dim == 0 {
            return bad("space.dim must be at least 1".into());
        }
        if !(self.grid.horizon > 0.0 && self.grid.horizon.is_finite()) {
            return bad(format!(
                "grid.T must be positive and finite, got {}",
                self.grid.horizon
            ));
        }
        if self.grid.steps == 0 {
            return bad("grid.steps must be at least 1".into());
        }
        if self.mc.paths == 0 {
            return bad("mc.paths must be at least 1".into());
        }
        for (name, table) in [("psi", &self.process.psi), ("phi", &self.process.phi)] {
            if table.len() != self.space.dim {
                return bad(format!(
                    "process.{name} has {} coordinates, space.dim is {}",
                    table.len(),
                    self.space.dim
                ));
            }
            if table
                .iter()
                .any(|c| c.is_empty() || c.iter().any(|x| !x.is_finite()))
            {
                return bad(format!(
                    "process.{name} needs non-empty finite coefficient lists"
                ));
            }
        }
        match &self.girsanov.r {
            RSetting::Keyword(k) if k != "auto" => {
                return bad(format!("girsanov.r must be \"auto\" or numeric, got {k:?}"))
            }
            RSetting::Constant(x) if !x.is_finite() => {
                return bad("girsanov.r must be finite".into())
            }
            RSetting::Polynomial(c) if c.is_empty() || c.iter().any(|x| !x.is_finite()) => {
                return bad("girsanov.r polynomial needs finite coefficients".into())
            }
            _ => {}
        }
        let (s, t) = (self.bridge.s, self.bridge.t);
        if !(s >= 0.0 && s < t && t <= self.grid.horizon) {
            return bad(format!("bridge needs 0 ≤ s < t ≤ T, got s = {s}, t = {t}"));
        }
        let grid = self.time_grid()?;
        grid.node_index(s)?;
        grid.node_index(t)?;
        self.girsanov_setup()
            .map_err(|e| CliError::Usage(format!("girsanov: {e}")))?;
        Ok(())
    }

    pub fn time_grid(&self) -> CliResult<TimeGrid> {
        Ok(TimeGrid::new(self.grid.horizon, self.grid.steps)?)
    }

    pub fn psi(&self) -> CliResult<VectorField> {
        Ok(VectorField::polynomial(self.process.psi.clone())?)
    }

    pub fn phi(&self) -> CliResult<VectorField> {
        Ok(VectorField::polynomial(self.process.phi.clone())?)
    }

    /// Probe functionals `e_0 + … + e_j`, used for every reconstruction.
    pub fn family(&self) -> CliResult<DualFamily> {
        Ok(DualFamily::partial_sums(self.space.dim)?)
    }

    /// `"auto"` derives and checks the link; an explicit `r` is taken as given
    /// and only measured, so a wrong value shows up as a failed certification.
    pub fn girsanov_setup(&self) -> CliResult<GirsanovSetup> {
        let grid = self.time_grid()?;
        let (psi, phi) = (self.psi()?, self.phi()?);
        let setup = match &self.girsanov.r {
            RSetting::Keyword(_) => GirsanovSetup::auto(psi, phi, grid, DEFAULT_PROP_TOL),
            RSetting::Constant(c) => {
                GirsanovSetup::unchecked(psi, phi, ScalarField::constant(*c), grid)
            }
            RSetting::Polynomial(c) => {
                GirsanovSetup::unchecked(psi, phi, ScalarField::polynomial(c.clone())?, grid)
            }
        };
        Ok(setup?)
    }

    /// Martingale test pairs at T/4, T/2, 3T/4 and T (snapped to nodes).
    pub fn test_pairs(&self) -> CliResult<Vec<(f64, f64)>> {
        let grid = self.time_grid()?;
        let n = grid.steps();
        let raw = [(n / 4, n / 2), (n / 2, 3 * n / 4), (n / 4, n)];
        let mut pairs: Vec<(f64, f64)> = raw
            .iter()
            .filter(|(i, j)| *i > 0 && i < j)
            .map(|&(i, j)| (grid.time(i), grid.time(j)))
            .collect();
        pairs.dedup();
        if pairs.is_empty() {
            // coarse grids
            pairs.push((grid.time(0), grid.time(n)));
        }
        Ok(pairs)
    }
}

/// Resolved `r` for reports: coefficients when it is a polynomial, node values
/// otherwise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedR {
    pub mode: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node_values: Option<Vec<f64>>,
}

impl ResolvedR {
    pub fn from_setup(cfg: &ExperimentConfig, setup: &GirsanovSetup) -> CliResult<Self> {
        let mode = match cfg.girsanov.r {
            RSetting::Keyword(_) => "auto",
            _ => "explicit",
        };
        Ok(match setup.r().as_polynomial() {
            Some(p) => Self {
                mode,
                coefficients: Some(p.coeffs().to_vec()),
                node_values: None,
            },
            None => Self {
                mode,
                coefficients: None,
                node_values: Some(setup.r().node_values(setup.grid())?),
            },
        })
    }
}
