use std::path::{Path, PathBuf};

use romes::problems::BenchmarkKind;
use romes::romes::{ParetoMethod, ParetoPoint, RomesConfig, Seeds, VALIDATION_OMEGAS};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

fn default_grid_m() -> usize {
    16
}
fn default_online_seed() -> u64 {
    5
}
fn default_samples() -> usize {
    100
}
fn default_omegas() -> Vec<f64> {
    VALIDATION_OMEGAS.to_vec()
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("romes-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnlineSettings {
    /// `|D_online|`
    pub size: usize,
    #[serde(default = "default_online_seed")]
    pub seed: u64,
    /// Monte-Carlo draws per QoI model.
    #[serde(default = "default_samples")]
    pub n_samples: usize,
}

fn default_pareto_n() -> Vec<usize> {
    (2..=6).collect()
}
fn default_offsets() -> Vec<usize> {
    vec![4, 10]
}
fn default_pareto_perp() -> usize {
    2
}

/// Either an explicit point list or the product `n x n_p offsets` for every method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParetoSettings {
    #[serde(default)]
    pub points: Option<Vec<ParetoPoint>>,
    #[serde(default = "default_pareto_n")]
    pub n: Vec<usize>,
    /// `n_p = n + offset`
    #[serde(default = "default_offsets")]
    pub n_p_offsets: Vec<usize>,
    /// `n_perp` of the `romes_full` points.
    #[serde(default = "default_pareto_perp")]
    pub n_perp: usize,
}

impl Default for ParetoSettings {
    fn default() -> Self {
        Self {
            points: None,
            n: default_pareto_n(),
            n_p_offsets: default_offsets(),
            n_perp: default_pareto_perp(),
        }
    }
}

impl ParetoSettings {
    pub fn grid(&self) -> Vec<ParetoPoint> {
        if let Some(points) = &self.points {
            return points.clone();
        }
        let mut grid = Vec::new();
        for &n in &self.n {
            grid.push(ParetoPoint {
                method: ParetoMethod::RomOnly,
                n,
                n_perp: 0,
                n_p: None,
            });
            for (method, n_perp) in [(ParetoMethod::RomesInplane, 0), (ParetoMethod::RomesFull, self.n_perp)] {
                for &k in &self.n_p_offsets {
                    grid.push(ParetoPoint {
                        method,
                        n,
                        n_perp,
                        n_p: Some(n + k),
                    });
                }
            }
        }
        grid
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub benchmark: BenchmarkKind,
    /// Grid intervals per side.
    #[serde(default = "default_grid_m")]
    pub grid_m: usize,
    pub model: RomesConfig,
    pub online: OnlineSettings,
    /// Coverage levels of the validation-frequency columns.
    #[serde(default = "default_omegas")]
    pub omegas: Vec<f64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub pareto: ParetoSettings,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: Self =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return fail(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.grid_m < 3 {
            return fail(format!("grid_m must be at least 3, got {}", self.grid_m));
        }
        if self.online.size == 0 {
            return fail("online.size must be at least 1".into());
        }
        if self.omegas.is_empty() || self.omegas.iter().any(|w| !(*w > 0.0 && *w < 1.0)) {
            return fail("omegas must be a nonempty list of values in (0, 1)".into());
        }
        self.model.validate().map_err(|e| CliError::Config(format!("model: {e}")))
    }

    /// Derives every seed from one value.
    pub fn override_seeds(&mut self, seed: u64) {
        self.model.seeds = Seeds {
            pod: seed,
            dual: seed.wrapping_add(1),
            romes: seed.wrapping_add(2),
            cv: seed.wrapping_add(3),
        };
        self.online.seed = seed.wrapping_add(4);
    }
}
