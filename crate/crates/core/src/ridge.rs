//! Ridge regression with an optional anchor, plus evaluation metrics.
//!
//! Fits minimize `(1/T) Σ_t (x_t·θ − y_t)² + λ‖θ − θ_S‖²` on standardized
//! data with no intercept; `θ_S = 0` is plain ridge.

use serde::Serialize;
use thiserror::Error;

use crate::divergence::w2sq_empirical_1d;
use crate::spd::{dot, Cholesky, Matrix, SpdError, SymMatrix};
use crate::stats::{is_constant, mean, pearson, std_pop};

/// Columns whose standard deviation does not exceed this are dropped.
pub const MIN_FEATURE_STD: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RidgeError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("lambda must be finite and nonnegative, got {0}")]
    InvalidLambda(f64),
    #[error("normal equations are singular; use lambda > 0")]
    SingularSystem,
    #[error("target has zero variance and cannot be standardized")]
    ConstantTarget,
    #[error("actuals are constant, R^2 is undefined")]
    ConstantActuals,
    #[error("a series is constant, correlation is undefined")]
    ConstantSeries,
    #[error(
        "source and target keep different feature columns ({source_kept:?} vs {target_kept:?})"
    )]
    FeatureMismatch {
        source_kept: Vec<usize>,
        target_kept: Vec<usize>,
    },
    #[error("non-finite value in input data")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, RidgeError>;

/// Per-column z-score transform learned on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Standardization {
    pub n_features: usize,
    /// Indices of retained columns in the raw feature matrix.
    pub kept: Vec<usize>,
    /// Mean and std of each retained column.
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
}

impl Standardization {
    pub fn transform_features(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.n_features {
            return Err(RidgeError::DimensionMismatch {
                expected: self.n_features,
                found: x.cols(),
            });
        }
        Ok(Matrix::from_fn(x.rows(), self.kept.len(), |i, j| {
            (x[(i, self.kept[j])] - self.feature_mean[j]) / self.feature_std[j]
        }))
    }

    pub fn transform_targets(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .map(|v| (v - self.target_mean) / self.target_std)
            .collect()
    }
}

/// Z-scores features and targets.
///
/// Without `stats`, means and population stds are computed from the data
/// and near-constant columns are dropped; with `stats`, the stored
/// transform is applied unchanged.
pub fn standardize(
    x: &Matrix,
    y: &[f64],
    stats: Option<&Standardization>,
) -> Result<(Matrix, Vec<f64>, Standardization)> {
    if x.rows() == 0 || y.is_empty() {
        return Err(RidgeError::EmptyDataset);
    }
    if x.rows() != y.len() {
        return Err(RidgeError::DimensionMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(RidgeError::NonFinite);
    }
    let stats = match stats {
        Some(s) => s.clone(),
        None => {
            let mut st = Standardization {
                n_features: x.cols(),
                kept: Vec::new(),
                feature_mean: Vec::new(),
                feature_std: Vec::new(),
                target_mean: mean(y),
                target_std: std_pop(y),
            };
            if st.target_std <= MIN_FEATURE_STD || is_constant(y) {
                return Err(RidgeError::ConstantTarget);
            }
            for j in 0..x.cols() {
                let col = x.col(j);
                let sd = std_pop(&col);
                if sd > MIN_FEATURE_STD && !is_constant(&col) {
                    st.kept.push(j);
                    st.feature_mean.push(mean(&col));
                    st.feature_std.push(sd);
                }
            }
            st
        }
    };
    let xs = stats.transform_features(x)?;
    let ys = stats.transform_targets(y);
    Ok((xs, ys, stats))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RidgeModel {
    pub theta: Vec<f64>,
    pub lambda: f64,
    /// Transform of the data the model was fitted on, when known.
    pub stats: Option<Standardization>,
}

impl RidgeModel {
    /// Retained raw-column indices; all columns when no transform is attached.
    pub fn kept_features(&self) -> Vec<usize> {
        match &self.stats {
            Some(s) => s.kept.clone(),
            None => (0..self.theta.len()).collect(),
        }
    }

    pub fn with_stats(mut self, stats: Standardization) -> Result<Self> {
        if stats.kept.len() != self.theta.len() {
            return Err(RidgeError::DimensionMismatch {
                expected: self.theta.len(),
                found: stats.kept.len(),
            });
        }
        self.stats = Some(stats);
        Ok(self)
    }

    /// Predictions on an already standardized design.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        x.matvec(&self.theta)
            .map_err(|_| RidgeError::DimensionMismatch {
                expected: self.theta.len(),
                found: x.cols(),
            })
    }
}

fn check_design(x: &Matrix, y: &[f64], lambda: f64) -> Result<()> {
    if x.rows() == 0 {
        return Err(RidgeError::EmptyDataset);
    }
    if x.rows() != y.len() {
        return Err(RidgeError::DimensionMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(RidgeError::InvalidLambda(lambda));
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(RidgeError::NonFinite);
    }
    Ok(())
}

/// `XᵀX/T + λI` and `Xᵀy/T + λθ_S`.
fn normal_equations(x: &Matrix, y: &[f64], lambda: f64, anchor: &[f64]) -> (SymMatrix, Vec<f64>) {
    let (t, p) = x.shape();
    let inv_t = 1.0 / t as f64;
    let mut gram = Matrix::zeros(p, p);
    for r in 0..t {
        let row = x.row(r);
        for i in 0..p {
            if row[i] == 0.0 {
                continue;
            }
            for j in i..p {
                gram[(i, j)] += row[i] * row[j];
            }
        }
    }
    for i in 0..p {
        for j in i..p {
            let v = gram[(i, j)] * inv_t + if i == j { lambda } else { 0.0 };
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let xty = x.tr_matvec(y).expect("shape checked");
    let rhs = xty
        .iter()
        .zip(anchor)
        .map(|(v, a)| v * inv_t + lambda * a)
        .collect();
    let a = SymMatrix::from_matrix(&gram).expect("square by construction");
    (a, rhs)
}

fn solve_normal(a: &SymMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let chol = match Cholesky::new(a) {
        Ok(c) => c,
        Err(SpdError::NotSpd { .. }) => return Err(RidgeError::SingularSystem),
        Err(_) => return Err(RidgeError::NonFinite),
    };
    let mut theta = chol.solve(rhs).map_err(|_| RidgeError::SingularSystem)?;
    // One step of iterative refinement.
    let ax = a.matvec(&theta).expect("shape checked");
    let resid: Vec<f64> = rhs.iter().zip(&ax).map(|(b, v)| b - v).collect();
    let corr = chol.solve(&resid).map_err(|_| RidgeError::SingularSystem)?;
    for (t, c) in theta.iter_mut().zip(corr) {
        *t += c;
    }
    Ok(theta)
}

pub fn fit_ridge(x: &Matrix, y: &[f64], lambda: f64) -> Result<RidgeModel> {
    fit_transfer_ridge(x, y, lambda, &vec![0.0; x.cols()])
}

/// Ridge shrunk towards `theta_source` instead of zero.
pub fn fit_transfer_ridge(
    x: &Matrix,
    y: &[f64],
    lambda: f64,
    theta_source: &[f64],
) -> Result<RidgeModel> {
    check_design(x, y, lambda)?;
    if theta_source.len() != x.cols() {
        return Err(RidgeError::DimensionMismatch {
            expected: x.cols(),
            found: theta_source.len(),
        });
    }
    if x.cols() == 0 {
        return Ok(RidgeModel {
            theta: Vec::new(),
            lambda,
            stats: None,
        });
    }
    let (a, rhs) = normal_equations(x, y, lambda, theta_source);
    let theta = solve_normal(&a, &rhs)?;
    Ok(RidgeModel {
        theta,
        lambda,
        stats: None,
    })
}

/// `(1/T) Σ (x_t·θ − y_t)² + λ‖θ − anchor‖²`.
pub fn ridge_objective(x: &Matrix, y: &[f64], theta: &[f64], lambda: f64, anchor: &[f64]) -> f64 {
    let t = x.rows() as f64;
    let fit: f64 = (0..x.rows())
        .map(|r| (dot(x.row(r), theta) - y[r]).powi(2))
        .sum::<f64>()
        / t;
    let pen: f64 = theta.iter().zip(anchor).map(|(a, b)| (a - b).powi(2)).sum();
    fit + lambda * pen
}

/// Max-norm of `(XᵀX/T + λI)θ − (Xᵀy/T + λθ_S)`.
pub fn normal_equation_residual(
    x: &Matrix,
    y: &[f64],
    lambda: f64,
    anchor: &[f64],
    theta: &[f64],
) -> f64 {
    let (a, rhs) = normal_equations(x, y, lambda, anchor);
    let ax = a.matvec(theta).expect("shape checked");
    ax.iter()
        .zip(&rhs)
        .fold(0.0, |m, (u, v)| m.max((u - v).abs()))
}

/// Maps a source coefficient vector onto the target's retained columns.
/// Both fits must have dropped the same raw columns.
pub fn align_source_theta(source: &RidgeModel, target_stats: &Standardization) -> Result<Vec<f64>> {
    let source_kept = source.kept_features();
    if source_kept != target_stats.kept {
        return Err(RidgeError::FeatureMismatch {
            source_kept,
            target_kept: target_stats.kept.clone(),
        });
    }
    Ok(source.theta.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    pub mse: f64,
    pub r2: f64,
    pub corr: f64,
}

fn check_pair(predictions: &[f64], actuals: &[f64]) -> Result<()> {
    if actuals.is_empty() {
        return Err(RidgeError::EmptyDataset);
    }
    if predictions.len() != actuals.len() {
        return Err(RidgeError::DimensionMismatch {
            expected: actuals.len(),
            found: predictions.len(),
        });
    }
    Ok(())
}

pub fn mse(predictions: &[f64], actuals: &[f64]) -> Result<f64> {
    check_pair(predictions, actuals)?;
    Ok(predictions
        .iter()
        .zip(actuals)
        .map(|(p, a)| (p - a).powi(2))
        .sum::<f64>()
        / actuals.len() as f64)
}

/// `1 − SSE/SST` with `SST` about the mean of the actuals.
pub fn r_squared(predictions: &[f64], actuals: &[f64]) -> Result<f64> {
    check_pair(predictions, actuals)?;
    if is_constant(actuals) {
        return Err(RidgeError::ConstantActuals);
    }
    let m = mean(actuals);
    let sst: f64 = actuals.iter().map(|a| (a - m).powi(2)).sum();
    let sse: f64 = predictions
        .iter()
        .zip(actuals)
        .map(|(p, a)| (p - a).powi(2))
        .sum();
    Ok(1.0 - sse / sst)
}

pub fn evaluate(predictions: &[f64], actuals: &[f64]) -> Result<MetricsReport> {
    let mse = mse(predictions, actuals)?;
    let r2 = r_squared(predictions, actuals)?;
    let corr = pearson(predictions, actuals).ok_or(RidgeError::ConstantSeries)?;
    Ok(MetricsReport { mse, r2, corr })
}

/// Empirical `W₂²` between the source model's predictions on the target
/// test design and the realized target values.
pub fn prediction_transfer_risk(
    theta_source: &[f64],
    x_test: &Matrix,
    y_test: &[f64],
) -> Result<f64> {
    if y_test.is_empty() || x_test.rows() == 0 {
        return Err(RidgeError::EmptyDataset);
    }
    if x_test.rows() != y_test.len() || x_test.cols() != theta_source.len() {
        return Err(RidgeError::DimensionMismatch {
            expected: theta_source.len(),
            found: x_test.cols(),
        });
    }
    let pred = x_test.matvec(theta_source).expect("shape checked");
    w2sq_empirical_1d(&pred, y_test).map_err(|_| RidgeError::NonFinite)
}
