//! Directory checkpoints of an [`OfflinePackage`].
//!
//! Matrices and vectors go to CSV, GP models to JSON, and everything needed to
//! reassemble the package (config, sizes, scalar type) to `manifest.json`.
//! The metric is rebuilt from the problem on load.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{OfflinePackage, RomesConfig, TrainingPairs, TrainingSets};
use crate::duals::DualBasis;
use crate::error::{Result, RomError};
use crate::gpr::GpErrorModel;
use crate::io::{read_matrix_csv, read_vector_csv, write_matrix_csv, write_vector_csv};
use crate::problems::{FomProblem, ParameterVector};
use crate::scalar::Real;
use crate::subspaces::{build_metric, SubspaceSet};

const FORMAT_VERSION: u32 = 1;
const SET_NAMES: [&str; 3] = ["pod", "dual", "romes"];

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    scalar: String,
    problem: String,
    state_dim: usize,
    n: usize,
    n_perp: usize,
    dual_bases: usize,
    config: RomesConfig,
}

fn ckpt_err(context: &str, e: impl std::fmt::Display) -> RomError {
    RomError::Checkpoint(format!("{context}: {e}"))
}

fn scalar_name<T: 'static>() -> String {
    std::any::type_name::<T>().to_string()
}

/// Reads a CSV matrix with a known row count; zero-column files come back 0x0.
fn read_columns<T: Real>(path: &Path, rows: usize) -> Result<DMatrix<T>> {
    let (_, m) = read_matrix_csv::<T>(path)?;
    if m.ncols() == 0 {
        return Ok(DMatrix::zeros(rows, 0));
    }
    if m.nrows() != rows {
        return Err(RomError::Checkpoint(format!(
            "{} has {} rows, expected {rows}",
            path.display(),
            m.nrows()
        )));
    }
    Ok(m)
}

fn params_matrix<T: Real>(params: &[ParameterVector<T>], dim: usize) -> DMatrix<T> {
    DMatrix::from_fn(params.len(), dim, |r, c| params[r].values()[c])
}

fn params_from_matrix<T: Real>(m: &DMatrix<T>) -> Vec<ParameterVector<T>> {
    m.row_iter().map(|r| ParameterVector::new(r.iter().copied().collect())).collect()
}

impl<T: Real> OfflinePackage<T> {
    /// Writes the package into `dir`, creating it if needed.
    pub fn save(&self, dir: &Path, problem: &dyn FomProblem<T>) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| ckpt_err("create directory", e))?;
        let sub = &self.subspaces;
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            scalar: scalar_name::<T>(),
            problem: problem.name().to_string(),
            state_dim: sub.state_dim(),
            n: sub.n(),
            n_perp: sub.n_perp(),
            dual_bases: self.dual_basis.bases().len(),
            config: self.config.clone(),
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| ckpt_err("manifest", e))?;
        fs::write(dir.join("manifest.json"), json).map_err(|e| ckpt_err("manifest", e))?;

        write_matrix_csv(&dir.join("phi.csv"), sub.phi(), None)?;
        write_matrix_csv(&dir.join("phi_perp.csv"), sub.phi_perp(), None)?;
        write_vector_csv(&dir.join("reference_state.csv"), sub.reference_state(), "x_ref")?;
        let sv = nalgebra::DVector::from_vec(self.singular_values.clone());
        write_vector_csv(&dir.join("singular_values.csv"), &sv, "sigma")?;
        for (k, b) in self.dual_basis.bases().iter().enumerate() {
            write_matrix_csv(&dir.join(format!("dual_basis_{k}.csv")), b, None)?;
        }

        let dim = self.sets.romes.first().or(self.sets.pod.first()).map_or(0, |p| p.len());
        for (name, set) in SET_NAMES.iter().zip([&self.sets.pod, &self.sets.dual, &self.sets.romes]) {
            let header: Vec<String> = (0..dim).map(|j| format!("mu{j}")).collect();
            write_matrix_csv(
                &dir.join(format!("training_params_{name}.csv")),
                &params_matrix(set, dim),
                Some(&header),
            )?;
        }
        let n_bar = self.training.features.ncols();
        let pairs = DMatrix::from_fn(self.training.features.nrows(), 2 * n_bar, |r, c| {
            if c < n_bar {
                self.training.features[(r, c)]
            } else {
                self.training.responses[(r, c - n_bar)]
            }
        });
        let header: Vec<String> = (0..n_bar)
            .map(|i| format!("rho{i}"))
            .chain((0..n_bar).map(|i| format!("delta{i}")))
            .collect();
        write_matrix_csv(&dir.join("training_pairs.csv"), &pairs, Some(&header))?;

        let models = serde_json::to_string_pretty(&self.gp_models).map_err(|e| ckpt_err("gp models", e))?;
        fs::write(dir.join("gp_models.json"), models).map_err(|e| ckpt_err("gp models", e))?;
        Ok(())
    }

    /// Reads a package written by [`OfflinePackage::save`] for the same problem.
    pub fn load(dir: &Path, problem: &dyn FomProblem<T>) -> Result<Self> {
        let text = fs::read_to_string(dir.join("manifest.json")).map_err(|e| ckpt_err("manifest", e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| ckpt_err("manifest", e))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(RomError::Checkpoint(format!(
                "unsupported format version {}",
                manifest.format_version
            )));
        }
        if manifest.scalar != scalar_name::<T>() {
            return Err(RomError::Checkpoint(format!(
                "checkpoint scalar {} does not match {}",
                manifest.scalar,
                scalar_name::<T>()
            )));
        }
        if manifest.problem != problem.name() || manifest.state_dim != problem.dimension() {
            return Err(RomError::Checkpoint(format!(
                "checkpoint was written for {} (N = {}), not {} (N = {})",
                manifest.problem,
                manifest.state_dim,
                problem.name(),
                problem.dimension()
            )));
        }
        let config = manifest.config;
        config.validate()?;
        let big_n = manifest.state_dim;

        let phi = read_columns::<T>(&dir.join("phi.csv"), big_n)?;
        let phi_perp = read_columns::<T>(&dir.join("phi_perp.csv"), big_n)?;
        if phi.ncols() != manifest.n || phi_perp.ncols() != manifest.n_perp {
            return Err(RomError::Checkpoint("basis sizes disagree with the manifest".into()));
        }
        let reference = read_vector_csv::<T>(&dir.join("reference_state.csv"))?;
        let metric = build_metric(problem, config.metric)?;
        let subspaces = SubspaceSet::new(phi, phi_perp, metric, reference)?;
        let singular_values = read_vector_csv::<T>(&dir.join("singular_values.csv"))?
            .iter()
            .copied()
            .collect();

        let n_bar = subspaces.n_bar();
        let bases = (0..manifest.dual_bases)
            .map(|k| read_columns::<T>(&dir.join(format!("dual_basis_{k}.csv")), big_n))
            .collect::<Result<Vec<_>>>()?;
        let dual_basis = DualBasis::new(config.dual_mode, bases, n_bar)?;

        let mut sets: Vec<Vec<ParameterVector<T>>> = Vec::with_capacity(3);
        for name in SET_NAMES {
            let (_, m) = read_matrix_csv::<T>(&dir.join(format!("training_params_{name}.csv")))?;
            sets.push(params_from_matrix(&m));
        }
        let romes = sets.pop().unwrap_or_default();
        let dual = sets.pop().unwrap_or_default();
        let pod = sets.pop().unwrap_or_default();

        let (_, pairs) = read_matrix_csv::<T>(&dir.join("training_pairs.csv"))?;
        if pairs.ncols() != 2 * n_bar || pairs.nrows() != romes.len() {
            return Err(RomError::Checkpoint("training pairs have the wrong shape".into()));
        }
        let training = TrainingPairs {
            features: pairs.columns(0, n_bar).into_owned(),
            responses: pairs.columns(n_bar, n_bar).into_owned(),
        };

        let text = fs::read_to_string(dir.join("gp_models.json")).map_err(|e| ckpt_err("gp models", e))?;
        let gp_models: Vec<GpErrorModel<T>> = serde_json::from_str(&text).map_err(|e| ckpt_err("gp models", e))?;
        if gp_models.len() != n_bar {
            return Err(RomError::Checkpoint(format!(
                "{} GP models for {n_bar} coordinates",
                gp_models.len()
            )));
        }

        Ok(Self {
            config,
            subspaces,
            singular_values,
            dual_basis,
            gp_models,
            training,
            sets: TrainingSets { pod, dual, romes },
        })
    }
}
