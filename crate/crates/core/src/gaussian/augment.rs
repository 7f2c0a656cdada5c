//! Targets that extend the source task by extra inputs or extra outputs.
//!
//! The input transport is fixed to the coordinate projection `(x, z) ↦ x`
//! for added features and to the identity for added outputs.

use serde::{Deserialize, Serialize};

use super::{
    check_dim, h, optimal_linear_model, scalar_tolerance, GaussianError, GaussianTask, LinearModel,
    Result, RiskDecomposition, RiskKind,
};
use crate::divergence::{
    bures_sq, kl_gaussian_multi, mahalanobis_sq, DivergenceError, GaussianDist,
};
use crate::spd::{Matrix, SymMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentationMode {
    Feature,
    Output,
}

/// Source-aligned base task plus a `k`-dimensional added block `A`.
///
/// In feature mode `A` is an extra input, in output mode an extra output.
/// `sigma_add_x` is `Cov(X, A)` (d×k), `sigma_add_y` is `Cov(Y, A)` (l×k).
#[derive(Debug, Clone)]
pub struct AugmentedTargetTask {
    base: GaussianTask,
    mode: AugmentationMode,
    mu_add: Vec<f64>,
    sigma_add_x: Matrix,
    sigma_add: SymMatrix,
    sigma_add_y: Matrix,
    full: GaussianTask,
}

impl AugmentedTargetTask {
    pub fn new(
        base: GaussianTask,
        mode: AugmentationMode,
        mu_add: Vec<f64>,
        sigma_add_x: Matrix,
        sigma_add: SymMatrix,
        sigma_add_y: Matrix,
    ) -> Result<Self> {
        let (d, l, k) = (base.dim_x(), base.dim_y(), mu_add.len());
        check_dim("added block covariance", k, sigma_add.dim())?;
        check_dim("sigma_add_x rows", d, sigma_add_x.rows())?;
        check_dim("sigma_add_x cols", k, sigma_add_x.cols())?;
        check_dim("sigma_add_y rows", l, sigma_add_y.rows())?;
        check_dim("sigma_add_y cols", k, sigma_add_y.cols())?;

        let full = match mode {
            AugmentationMode::Feature => {
                let sx = base.sigma_x();
                let sigma_x =
                    SymMatrix::from_matrix(&Matrix::from_fn(d + k, d + k, |i, j| {
                        match (i < d, j < d) {
                            (true, true) => sx[(i, j)],
                            (true, false) => sigma_add_x[(i, j - d)],
                            (false, true) => sigma_add_x[(j, i - d)],
                            (false, false) => sigma_add[(i - d, j - d)],
                        }
                    }))?;
                let sigma_xy = Matrix::from_fn(d + k, l, |i, j| {
                    if i < d {
                        base.sigma_xy()[(i, j)]
                    } else {
                        sigma_add_y[(j, i - d)]
                    }
                });
                GaussianTask::new(
                    [base.mu_x(), mu_add.as_slice()].concat(),
                    base.mu_y().to_vec(),
                    sigma_x,
                    sigma_xy,
                    base.sigma_y().clone(),
                )?
            }
            AugmentationMode::Output => {
                let sy = base.sigma_y();
                let sigma_y =
                    SymMatrix::from_matrix(&Matrix::from_fn(l + k, l + k, |i, j| {
                        match (i < l, j < l) {
                            (true, true) => sy[(i, j)],
                            (true, false) => sigma_add_y[(i, j - l)],
                            (false, true) => sigma_add_y[(j, i - l)],
                            (false, false) => sigma_add[(i - l, j - l)],
                        }
                    }))?;
                let sigma_xy = Matrix::from_fn(d, l + k, |i, j| {
                    if j < l {
                        base.sigma_xy()[(i, j)]
                    } else {
                        sigma_add_x[(i, j - l)]
                    }
                });
                GaussianTask::new(
                    base.mu_x().to_vec(),
                    [base.mu_y(), mu_add.as_slice()].concat(),
                    base.sigma_x().clone(),
                    sigma_xy,
                    sigma_y,
                )?
            }
        };
        Ok(Self {
            base,
            mode,
            mu_add,
            sigma_add_x,
            sigma_add,
            sigma_add_y,
            full,
        })
    }

    pub fn base(&self) -> &GaussianTask {
        &self.base
    }

    pub fn mode(&self) -> AugmentationMode {
        self.mode
    }

    pub fn added_dim(&self) -> usize {
        self.mu_add.len()
    }

    pub fn mu_add(&self) -> &[f64] {
        &self.mu_add
    }

    pub fn sigma_add_x(&self) -> &Matrix {
        &self.sigma_add_x
    }

    pub fn sigma_add(&self) -> &SymMatrix {
        &self.sigma_add
    }

    pub fn sigma_add_y(&self) -> &Matrix {
        &self.sigma_add_y
    }

    /// The augmented target as a single task over the enlarged input or output space.
    pub fn as_task(&self) -> &GaussianTask {
        &self.full
    }

    fn check_against(&self, source: &GaussianTask, mode: AugmentationMode) -> Result<()> {
        if self.mode != mode {
            return Err(GaussianError::StructureMismatch(format!(
                "expected a {mode:?} augmentation, got {:?}",
                self.mode
            )));
        }
        let scale = 1.0
            + source.joint_cov().as_matrix().max_abs().max(
                source
                    .mu_x()
                    .iter()
                    .chain(source.mu_y())
                    .fold(0.0, |m, x| m.max(x.abs())),
            );
        match self.base.max_abs_diff(source) {
            None => Err(GaussianError::StructureMismatch(format!(
                "base block is {}x{}, source is {}x{}",
                self.base.dim_x(),
                self.base.dim_y(),
                source.dim_x(),
                source.dim_y()
            ))),
            Some(diff) if diff > 1e-12 * scale => Err(GaussianError::StructureMismatch(format!(
                "base block differs from the source moments by {diff:e}"
            ))),
            Some(_) => Ok(()),
        }
    }
}

/// Risk of reusing the source model on a target with extra input features.
///
/// The pretrained model sees only the original coordinates, so both output
/// laws share the mean and the risk is pure variance.
pub fn feature_augmented_risk(
    source: &GaussianTask,
    target: &AugmentedTargetTask,
    kind: RiskKind,
) -> Result<RiskDecomposition> {
    source.require_scalar_output()?;
    target.check_against(source, AugmentationMode::Feature)?;
    let ws = optimal_linear_model(source)?;
    let wt = optimal_linear_model(target.as_task())?;
    let den = source.sigma_x().quad_form(ws.weights(0))?;
    let num = target.as_task().sigma_x().quad_form(wt.weights(0))?;
    let variance = match kind {
        RiskKind::Kl => {
            if den <= scalar_tolerance(den) {
                return Err(GaussianError::ZeroPretrainedSignal(den));
            }
            if num <= scalar_tolerance(num) {
                return Err(GaussianError::ZeroTargetSignal(num));
            }
            h(num / den)
        }
        RiskKind::W2 => (num.sqrt() - den.sqrt()).powi(2),
    };
    Ok(RiskDecomposition::new(variance, 0.0))
}

fn predictive(mean: Vec<f64>, cov: SymMatrix) -> Result<GaussianDist> {
    GaussianDist::new(mean, cov).map_err(|e| match e {
        DivergenceError::Spd(e) => GaussianError::Spd(e),
        other => GaussianError::Divergence(other),
    })
}

/// Risk of the stacked model `[f*_S; init]` on a target with extra outputs.
pub fn output_augmented_risk(
    source: &GaussianTask,
    target: &AugmentedTargetTask,
    init: &LinearModel,
    kind: RiskKind,
) -> Result<RiskDecomposition> {
    target.check_against(source, AugmentationMode::Output)?;
    check_dim("init model inputs", source.dim_x(), init.dim_in())?;
    check_dim("init model outputs", target.added_dim(), init.dim_out())?;

    let full = target.as_task();
    let sx = full.sigma_x();
    let opt = optimal_linear_model(full)?;
    let p1 = predictive(opt.apply(full.mu_x())?, sx.congruence(opt.w())?)?;
    let inter = optimal_linear_model(source)?.stack(init)?;
    let p2 = predictive(inter.apply(full.mu_x())?, sx.congruence(inter.w())?)?;

    let delta: Vec<f64> = p1
        .mean()
        .iter()
        .zip(p2.mean())
        .map(|(a, b)| a - b)
        .collect();
    match kind {
        RiskKind::Kl => {
            let total = kl_gaussian_multi(&p1, &p2)?;
            let bias = 0.5 * mahalanobis_sq(&p2, &delta)?;
            Ok(RiskDecomposition::new((total - bias).max(0.0), bias))
        }
        RiskKind::W2 => {
            let bias = delta.iter().map(|x| x * x).sum();
            let variance = bures_sq(p1.cov(), p2.cov())?;
            Ok(RiskDecomposition::new(variance, bias))
        }
    }
}
