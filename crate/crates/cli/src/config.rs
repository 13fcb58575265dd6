//! Experiment configuration read from TOML.
//!
//! Every section is optional; missing sections fall back to the defaults
//! below. Unknown keys are rejected so typos surface as configuration errors.

use std::path::{Path, PathBuf};

use backheat::coefficients::{FamilySpec, ProfileSpec};
use backheat::spectral::GridSpec;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "unit", rename = "T")]
    pub horizon: f64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "heat_family")]
    pub family: FamilySpec,
    #[serde(default)]
    pub lp: LpConfig,
    #[serde(default)]
    pub energy: EnergyConfig,
    #[serde(default)]
    pub reconstruction: ReconstructionConfig,
    #[serde(default)]
    pub forward: ForwardConfig,
    #[serde(default)]
    pub weights_table: WeightsTableConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config parses")
    }
}

fn unit() -> f64 {
    1.0
}

fn heat_family() -> FamilySpec {
    FamilySpec { dim: 1, entries: vec![ProfileSpec::new("constant", &[("value", 1.0)])], spatial: None, kappa: None }
}

/// `a(x) = mean + amplitude sin(mode x_1)`, the spatial coefficient of the paraproduct sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialCoefficient {
    pub mean: f64,
    pub amplitude: f64,
    pub mode: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LpConfig {
    /// Probe names; empty means every registered probe.
    pub estimates: Vec<String>,
    pub coefficient: SpatialCoefficient,
    pub kappa: f64,
    /// Fixed paraproduct order; when absent the smallest positive order is searched.
    pub order: Option<u32>,
    pub max_order: u32,
    pub thetas: Vec<f64>,
    pub sweep_size: usize,
    /// Largest accepted `max(r, 1/r)` for the Sobolev equivalence ratio.
    pub equivalence_bound: f64,
}

impl Default for LpConfig {
    fn default() -> Self {
        Self {
            estimates: Vec::new(),
            coefficient: SpatialCoefficient { mean: 1.0, amplitude: 0.5, mode: 1.0 },
            kappa: 0.5,
            order: None,
            max_order: 20,
            thetas: vec![-1.0, 0.0, 1.0],
            sweep_size: 100,
            equivalence_bound: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyConfig {
    pub kappa: f64,
    pub alpha1: f64,
    /// Explicit lambda; otherwise `lambda_factor` times the threshold derived from `kappa`.
    pub lambda: Option<f64>,
    pub lambda_factor: f64,
    pub gammas: Vec<f64>,
    pub corpus_size: usize,
    pub snapshots: usize,
    pub band: [i32; 2],
    pub gap: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            kappa: 0.5,
            alpha1: 1.0,
            lambda: None,
            lambda_factor: 1.0,
            gammas: vec![1.0, 10.0, 100.0, 1000.0],
            corpus_size: 50,
            snapshots: 200,
            band: [0, 1],
            gap: backheat::energy::DEFAULT_GAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructionConfig {
    pub thetas: Vec<f64>,
    pub seeds: Vec<u64>,
    /// A-priori `H1` bound; defaults to the norm of the truth.
    pub bound_d: Option<f64>,
    /// Width of the Gaussian bump used as the initial state.
    pub truth_width: f64,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            thetas: (2..=12).map(|k| 10f64.powi(-k)).collect(),
            seeds: (1..=5).collect(),
            bound_d: None,
            truth_width: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForwardConfig {
    pub solver: String,
    pub steps: usize,
    /// Dyadic shells of the random initial state.
    pub band: [i32; 2],
}

impl Default for ForwardConfig {
    fn default() -> Self {
        Self { solver: "spectral-exact".into(), steps: 100, band: [0, 3] }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightsTableConfig {
    pub lambdas: Vec<f64>,
    /// Number of `y` samples, equally spaced on `(0, 1]`.
    pub samples: usize,
}

impl Default for WeightsTableConfig {
    fn default() -> Self {
        Self { lambdas: vec![1.5, 2.0, 4.0], samples: 64 }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // sampled profiles resolve relative to the config file
        if let Some(dir) = path.parent() {
            for e in &mut cfg.family.entries {
                if let Some(p) = &e.csv {
                    if p.is_relative() {
                        e.csv = Some(dir.join(p));
                    }
                }
            }
        }
        Ok(cfg)
    }
}

/// Parse a comma-separated list of noise levels.
pub fn parse_theta_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| CliError::Config(format!("bad theta '{t}'"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let c = ExperimentConfig::default();
        assert_eq!(c.horizon, 1.0);
        assert_eq!(c.grid.points, 2048);
        assert_eq!(c.energy.gammas.len(), 4);
        assert_eq!(c.reconstruction.thetas.len(), 11);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(ExperimentConfig::from_toml("sede = 3"), Err(CliError::Config(_))));
        assert!(matches!(ExperimentConfig::from_toml("[lp]\nkapa = 1"), Err(CliError::Config(_))));
    }

    #[test]
    fn family_entries_parse() {
        let c = ExperimentConfig::from_toml(
            "[family]\nkappa = 0.5\n[[family.entries]]\nkind = \"ll_exemplar\"\nparams = { base = 1.0, amplitude = 0.5 }\n",
        )
        .unwrap();
        assert_eq!(c.family.entries[0].kind, "ll_exemplar");
        assert_eq!(c.family.entries[0].params["amplitude"], 0.5);
    }

    #[test]
    fn theta_lists() {
        assert_eq!(parse_theta_list("1e-2, 1e-4,").unwrap(), vec![1e-2, 1e-4]);
        assert!(parse_theta_list("1e-2,x").is_err());
    }
}
