//! Closed-form transfer risk for Gaussian linear regression.
//!
//! Source and target data are jointly Gaussian `(X, Y) ~ N(μ, Σ)`, models
//! are affine, and the loss is expected squared error. In this setting the
//! output transport risks (KL and W₂) and the regret of reusing the
//! pretrained model have explicit forms, each splitting into a variance
//! part driven by covariances and a bias part driven by mean mismatch.

mod augment;
mod file;
mod risk;

use thiserror::Error;

use crate::divergence::{DivergenceError, GaussianDist};
use crate::spd::{dot, spd_tolerance, Matrix, SpdError, SymMatrix};

pub use augment::{
    feature_augmented_risk, output_augmented_risk, AugmentationMode, AugmentedTargetTask,
};
pub use file::{AugmentationFile, ModelFile, TaskFile, TaskPairFile};
pub use risk::{
    output_risk_kl, output_risk_w, predictive_laws, regret, RegretReport, RiskDecomposition,
    RiskKind,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaussianError {
    #[error(transparent)]
    Spd(#[from] SpdError),
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
    #[error("{what}: expected dimension {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("this operation needs a scalar output, task has dim_y = {0}")]
    ScalarOutputRequired(usize),
    #[error("pretrained model carries no signal on the target inputs (w_S' Sigma w_S = {0:e})")]
    ZeroPretrainedSignal(f64),
    #[error("optimal target model carries no signal (w_T' Sigma w_T = {0:e})")]
    ZeroTargetSignal(f64),
    #[error("pushforward covariance is degenerate: {0}")]
    DegenerateOutputCovariance(SpdError),
    #[error("augmented target does not match the source task: {0}")]
    StructureMismatch(String),
    #[error("model has non-finite entries")]
    NonFiniteModel,
}

pub type Result<T> = std::result::Result<T, GaussianError>;

fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(GaussianError::DimensionMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

/// Jointly Gaussian input/output task, stored as blocks of the joint
/// moments. The assembled joint covariance is validated SPD.
#[derive(Debug, Clone)]
pub struct GaussianTask {
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    sigma_x: SymMatrix,
    sigma_xy: Matrix,
    sigma_y: SymMatrix,
}

impl GaussianTask {
    pub fn new(
        mu_x: Vec<f64>,
        mu_y: Vec<f64>,
        sigma_x: SymMatrix,
        sigma_xy: Matrix,
        sigma_y: SymMatrix,
    ) -> Result<Self> {
        let (d, l) = (mu_x.len(), mu_y.len());
        if d == 0 || l == 0 {
            return Err(GaussianError::DimensionMismatch {
                what: "task dimensions",
                expected: 1,
                found: 0,
            });
        }
        check_dim("sigma_x", d, sigma_x.dim())?;
        check_dim("sigma_y", l, sigma_y.dim())?;
        check_dim("sigma_xy rows", d, sigma_xy.rows())?;
        check_dim("sigma_xy cols", l, sigma_xy.cols())?;
        let task = Self {
            mu_x,
            mu_y,
            sigma_x,
            sigma_xy,
            sigma_y,
        };
        task.joint_cov().spd_factor()?;
        Ok(task)
    }

    /// Splits a joint law over `(X, Y)` with the first `dim_x` coordinates as inputs.
    pub fn from_joint(joint: &GaussianDist, dim_x: usize) -> Result<Self> {
        let n = joint.dim();
        if dim_x == 0 || dim_x >= n {
            return Err(GaussianError::DimensionMismatch {
                what: "input block of joint law",
                expected: n.saturating_sub(1).max(1),
                found: dim_x,
            });
        }
        let c = joint.cov();
        let l = n - dim_x;
        let sigma_x = SymMatrix::from_matrix(&Matrix::from_fn(dim_x, dim_x, |i, j| c[(i, j)]))?;
        let sigma_y =
            SymMatrix::from_matrix(&Matrix::from_fn(l, l, |i, j| c[(dim_x + i, dim_x + j)]))?;
        let sigma_xy = Matrix::from_fn(dim_x, l, |i, j| c[(i, dim_x + j)]);
        Self::new(
            joint.mean()[..dim_x].to_vec(),
            joint.mean()[dim_x..].to_vec(),
            sigma_x,
            sigma_xy,
            sigma_y,
        )
    }

    pub fn dim_x(&self) -> usize {
        self.mu_x.len()
    }

    pub fn dim_y(&self) -> usize {
        self.mu_y.len()
    }

    pub fn mu_x(&self) -> &[f64] {
        &self.mu_x
    }

    pub fn mu_y(&self) -> &[f64] {
        &self.mu_y
    }

    pub fn sigma_x(&self) -> &SymMatrix {
        &self.sigma_x
    }

    pub fn sigma_xy(&self) -> &Matrix {
        &self.sigma_xy
    }

    pub fn sigma_y(&self) -> &SymMatrix {
        &self.sigma_y
    }

    /// `[[Σ_X, Σ_XY], [Σ_YX, Σ_Y]]`.
    pub fn joint_cov(&self) -> SymMatrix {
        let (d, l) = (self.dim_x(), self.dim_y());
        let m = Matrix::from_fn(d + l, d + l, |i, j| match (i < d, j < d) {
            (true, true) => self.sigma_x[(i, j)],
            (true, false) => self.sigma_xy[(i, j - d)],
            (false, true) => self.sigma_xy[(j, i - d)],
            (false, false) => self.sigma_y[(i - d, j - d)],
        });
        SymMatrix::from_symmetric_unchecked(m)
    }

    pub fn joint(&self) -> GaussianDist {
        let mean = [self.mu_x.as_slice(), self.mu_y.as_slice()].concat();
        GaussianDist::new(mean, self.joint_cov()).expect("validated at construction")
    }

    pub fn input_law(&self) -> GaussianDist {
        GaussianDist::new(self.mu_x.clone(), self.sigma_x.clone())
            .expect("validated at construction")
    }

    /// Largest absolute blockwise difference to `other`; `None` when shapes differ.
    pub fn max_abs_diff(&self, other: &GaussianTask) -> Option<f64> {
        if self.dim_x() != other.dim_x() || self.dim_y() != other.dim_y() {
            return None;
        }
        let vec_diff = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        };
        let diffs = [
            vec_diff(&self.mu_x, &other.mu_x),
            vec_diff(&self.mu_y, &other.mu_y),
            self.joint_cov()
                .as_matrix()
                .max_abs_diff(other.joint_cov().as_matrix())?,
        ];
        Some(diffs.into_iter().fold(0.0, f64::max))
    }

    pub(crate) fn require_scalar_output(&self) -> Result<()> {
        if self.dim_y() != 1 {
            return Err(GaussianError::ScalarOutputRequired(self.dim_y()));
        }
        Ok(())
    }
}

/// Affine model `y = W x + b` with `W` of shape `l × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    w: Matrix,
    b: Vec<f64>,
}

impl LinearModel {
    pub fn new(w: Matrix, b: Vec<f64>) -> Result<Self> {
        check_dim("model intercept", w.rows(), b.len())?;
        if !w.is_finite() || b.iter().any(|x| !x.is_finite()) {
            return Err(GaussianError::NonFiniteModel);
        }
        Ok(Self { w, b })
    }

    /// Scalar-output model `y = wᵀx + b`.
    pub fn scalar(w: &[f64], b: f64) -> Result<Self> {
        Self::new(Matrix::row_vector(w), vec![b])
    }

    pub fn identity(n: usize) -> Self {
        Self {
            w: Matrix::identity(n),
            b: vec![0.0; n],
        }
    }

    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn dim_in(&self) -> usize {
        self.w.cols()
    }

    pub fn dim_out(&self) -> usize {
        self.w.rows()
    }

    /// Row `i` of `W`, i.e. the weight vector of output `i`.
    pub fn weights(&self, i: usize) -> &[f64] {
        self.w.row(i)
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("model input", self.dim_in(), x.len())?;
        let wx = self.w.matvec(x)?;
        Ok(wx.iter().zip(&self.b).map(|(a, b)| a + b).collect())
    }

    /// The same model reading only the first `dim_in()` of `dim_in() + extra`
    /// inputs (composition with a coordinate projection).
    pub fn pad_inputs(&self, extra: usize) -> Self {
        let d = self.dim_in();
        let w = Matrix::from_fn(self.dim_out(), d + extra, |i, j| {
            if j < d {
                self.w[(i, j)]
            } else {
                0.0
            }
        });
        Self {
            w,
            b: self.b.clone(),
        }
    }

    /// Stacks the outputs of `self` above those of `lower`.
    pub fn stack(&self, lower: &LinearModel) -> Result<Self> {
        check_dim("stacked model inputs", self.dim_in(), lower.dim_in())?;
        let (l1, l2, d) = (self.dim_out(), lower.dim_out(), self.dim_in());
        let w = Matrix::from_fn(l1 + l2, d, |i, j| {
            if i < l1 {
                self.w[(i, j)]
            } else {
                lower.w[(i - l1, j)]
            }
        });
        Ok(Self {
            w,
            b: [self.b.as_slice(), lower.b.as_slice()].concat(),
        })
    }
}

/// Minimizer of the expected squared loss over affine models:
/// `W = (Σ_X⁻¹ Σ_XY)ᵀ`, `b = μ_Y − W μ_X`.
pub fn optimal_linear_model(task: &GaussianTask) -> Result<LinearModel> {
    let factor = task.sigma_x.spd_factor()?;
    let w = factor.solve_matrix(&task.sigma_xy)?.transpose();
    let wmu = w.matvec(&task.mu_x)?;
    let b = task.mu_y.iter().zip(&wmu).map(|(m, p)| m - p).collect();
    LinearModel::new(w, b)
}

/// `E‖Y − W X − b‖²` under the task law:
/// `‖μ_Y − Wμ_X − b‖² + tr Σ_Y − 2 tr(W Σ_XY) + tr(W Σ_X Wᵀ)`.
pub fn expected_loss(model: &LinearModel, task: &GaussianTask) -> Result<f64> {
    check_dim("model input", task.dim_x(), model.dim_in())?;
    check_dim("model output", task.dim_y(), model.dim_out())?;
    let pred_mean = model.apply(&task.mu_x)?;
    let bias: f64 = task
        .mu_y
        .iter()
        .zip(&pred_mean)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    let mut cross = 0.0;
    let mut quad = 0.0;
    for i in 0..model.dim_out() {
        let wi = model.weights(i);
        cross += dot(wi, &task.sigma_xy.col(i));
        quad += task.sigma_x.quad_form(wi)?;
    }
    Ok((bias + task.sigma_y.trace() - 2.0 * cross + quad).max(0.0))
}

/// Law of `W X + b` for `X ~ input`: `N(Wμ + b, W Σ Wᵀ)`.
pub fn pushforward_law(model: &LinearModel, input: &GaussianDist) -> Result<GaussianDist> {
    check_dim("model input", input.dim(), model.dim_in())?;
    let mean = model.apply(input.mean())?;
    let cov = input.cov().congruence(model.w())?;
    if let Err(e) = cov.spd_factor() {
        return Err(GaussianError::DegenerateOutputCovariance(e));
    }
    Ok(GaussianDist::new(mean, cov)?)
}

/// `h(x) = ½(x − ln x − 1)`: zero at 1, positive elsewhere, convex.
pub fn h(x: f64) -> f64 {
    0.5 * (x - x.ln() - 1.0)
}

fn scalar_tolerance(s: f64) -> f64 {
    spd_tolerance(&SymMatrix::scalar(s))
}
