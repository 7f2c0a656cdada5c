//! JSON layout of task files read by the `gaussian-risk` command.
//!
//! ```json
//! {
//!   "source": { "dim_x": 2, "dim_y": 1, "mu_x": [0, 1], "mu_y": [0.5],
//!               "sigma_x": [[1, 0.2], [0.2, 2]], "sigma_xy": [[0.6], [0.3]],
//!               "sigma_y": [[1.5]] },
//!   "target": { ... },
//!   "augmentation": {
//!     "mode": "output",
//!     "mu_add": [0], "sigma_add_x": [[0.1], [0.4]], "sigma_add": [[1]], "sigma_add_y": [[0.2]],
//!     "init": { "w": [[0, 0.2]], "b": [0] }
//!   }
//! }
//! ```
//!
//! `augmentation` is optional. It extends the `target` block, which must then
//! equal the `source` block; `init` is required only in output mode.

use serde::{Deserialize, Serialize};

use super::{check_dim, AugmentationMode, AugmentedTargetTask, GaussianTask, LinearModel, Result};
use crate::spd::{Matrix, SymMatrix};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskFile {
    pub dim_x: usize,
    pub dim_y: usize,
    pub mu_x: Vec<f64>,
    pub mu_y: Vec<f64>,
    pub sigma_x: Vec<Vec<f64>>,
    pub sigma_xy: Vec<Vec<f64>>,
    pub sigma_y: Vec<Vec<f64>>,
}

impl TaskFile {
    pub fn to_task(&self) -> Result<GaussianTask> {
        check_dim("mu_x", self.dim_x, self.mu_x.len())?;
        check_dim("mu_y", self.dim_y, self.mu_y.len())?;
        check_dim("sigma_xy rows", self.dim_x, self.sigma_xy.len())?;
        GaussianTask::new(
            self.mu_x.clone(),
            self.mu_y.clone(),
            SymMatrix::from_rows(&self.sigma_x)?,
            Matrix::from_rows(&self.sigma_xy)?,
            SymMatrix::from_rows(&self.sigma_y)?,
        )
    }

    pub fn from_task(task: &GaussianTask) -> Self {
        Self {
            dim_x: task.dim_x(),
            dim_y: task.dim_y(),
            mu_x: task.mu_x().to_vec(),
            mu_y: task.mu_y().to_vec(),
            sigma_x: task.sigma_x().to_rows(),
            sigma_xy: task.sigma_xy().to_rows(),
            sigma_y: task.sigma_y().to_rows(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl ModelFile {
    pub fn to_model(&self) -> Result<LinearModel> {
        LinearModel::new(Matrix::from_rows(&self.w)?, self.b.clone())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationFile {
    pub mode: AugmentationMode,
    pub mu_add: Vec<f64>,
    pub sigma_add_x: Vec<Vec<f64>>,
    pub sigma_add: Vec<Vec<f64>>,
    pub sigma_add_y: Vec<Vec<f64>>,
    #[serde(default)]
    pub init: Option<ModelFile>,
}

impl AugmentationFile {
    pub fn to_augmented(&self, base: GaussianTask) -> Result<AugmentedTargetTask> {
        AugmentedTargetTask::new(
            base,
            self.mode,
            self.mu_add.clone(),
            Matrix::from_rows(&self.sigma_add_x)?,
            SymMatrix::from_rows(&self.sigma_add)?,
            Matrix::from_rows(&self.sigma_add_y)?,
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskPairFile {
    pub source: TaskFile,
    pub target: TaskFile,
    #[serde(default)]
    pub augmentation: Option<AugmentationFile>,
}
