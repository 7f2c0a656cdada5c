//! KL and 2-Wasserstein divergences between Gaussians, the empirical 1D
//! Wasserstein estimator, cross-entropy brackets for the KL output risk,
//! and the linear combination of input and output transport risks.
//!
//! KL arguments are ordered `(p ‖ q)`: `p` is the target law and `q` the
//! law produced by the intermediate (transferred) model. Only the
//! absolutely continuous case is handled; singular covariances are
//! rejected instead of being assigned an entropy term.

use thiserror::Error;

use crate::spd::{SpdError, SymMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DivergenceError {
    #[error("variance must be strictly positive, got {0}")]
    NonPositiveVariance(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error(transparent)]
    Spd(#[from] SpdError),
    #[error("empty sample")]
    EmptySample,
    #[error("invalid probability vector: {0}")]
    InvalidProbabilityVector(String),
    #[error("risk must be nonnegative, got {0}")]
    NegativeRisk(f64),
    #[error("linear risk weight must be nonnegative and finite, got {0}")]
    InvalidWeight(f64),
}

pub type Result<T> = std::result::Result<T, DivergenceError>;

/// Univariate normal law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian1D {
    mean: f64,
    var: f64,
}

impl Gaussian1D {
    pub fn new(mean: f64, var: f64) -> Result<Self> {
        if !(var > 0.0) || !var.is_finite() || !mean.is_finite() {
            return Err(DivergenceError::NonPositiveVariance(var));
        }
        Ok(Self { mean, var })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn var(&self) -> f64 {
        self.var
    }

    pub fn std(&self) -> f64 {
        self.var.sqrt()
    }
}

/// Multivariate normal law with SPD covariance.
#[derive(Debug, Clone)]
pub struct GaussianDist {
    mean: Vec<f64>,
    cov: SymMatrix,
}

impl GaussianDist {
    pub fn new(mean: Vec<f64>, cov: SymMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(DivergenceError::DimensionMismatch(mean.len(), cov.dim()));
        }
        cov.spd_factor()?;
        Ok(Self { mean, cov })
    }

    pub fn standard(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            cov: SymMatrix::identity(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &SymMatrix {
        &self.cov
    }

    /// The 1D law, when `dim() == 1`.
    pub fn as_1d(&self) -> Option<Gaussian1D> {
        (self.dim() == 1).then(|| Gaussian1D {
            mean: self.mean[0],
            var: self.cov[(0, 0)],
        })
    }
}

impl From<Gaussian1D> for GaussianDist {
    fn from(g: Gaussian1D) -> Self {
        Self {
            mean: vec![g.mean],
            cov: SymMatrix::scalar(g.var),
        }
    }
}

/// Weight of the input transport risk in the linear transfer risk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearRiskParams {
    lambda: f64,
}

impl LinearRiskParams {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(DivergenceError::InvalidWeight(lambda));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// `KL(p ‖ q)` for univariate normals.
pub fn kl_gaussian_1d(p: Gaussian1D, q: Gaussian1D) -> f64 {
    let dm = p.mean - q.mean;
    let kl = 0.5 * (q.var / p.var).ln() + (p.var + dm * dm) / (2.0 * q.var) - 0.5;
    kl.max(0.0)
}

/// `KL(p ‖ q) = ½[tr(Σ_q⁻¹Σ_p) − ln(det Σ_p / det Σ_q) − n + δᵀΣ_q⁻¹δ]`.
pub fn kl_gaussian_multi(p: &GaussianDist, q: &GaussianDist) -> Result<f64> {
    let n = p.dim();
    if n != q.dim() {
        return Err(DivergenceError::DimensionMismatch(n, q.dim()));
    }
    let fp = p.cov.spd_factor()?;
    let fq = q.cov.spd_factor()?;
    let q_inv_p = fq.solve_matrix(p.cov.as_matrix())?;
    let trace: f64 = (0..n).map(|i| q_inv_p[(i, i)]).sum();
    let delta: Vec<f64> = p.mean.iter().zip(&q.mean).map(|(a, b)| a - b).collect();
    let mahalanobis = mahalanobis_sq(q, &delta)?;
    let kl = 0.5 * (trace - (fp.logdet() - fq.logdet()) - n as f64 + mahalanobis);
    Ok(kl.max(0.0))
}

/// `δᵀ Σ⁻¹ δ` under the covariance of `q`.
pub(crate) fn mahalanobis_sq(q: &GaussianDist, delta: &[f64]) -> Result<f64> {
    let x = crate::spd::spd_solve(&q.cov, delta)?;
    Ok(crate::spd::dot(delta, &x).max(0.0))
}

/// `W₂²(p, q) = (μ_p − μ_q)² + (σ_p − σ_q)²`.
pub fn w2sq_gaussian_1d(p: Gaussian1D, q: Gaussian1D) -> f64 {
    let dm = p.mean - q.mean;
    let ds = p.std() - q.std();
    dm * dm + ds * ds
}

/// Bures trace term `tr(Σ_p + Σ_q − 2(Σ_p^{1/2} Σ_q Σ_p^{1/2})^{1/2})`.
pub fn bures_sq(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(DivergenceError::DimensionMismatch(a.dim(), b.dim()));
    }
    let root_a = a.spd_factor()?.sqrt();
    b.spd_factor()?;
    let inner = b.congruence(root_a.as_matrix())?;
    // inner is PSD in exact arithmetic; clip roundoff below zero.
    let cross: f64 = inner.eigen().values.iter().map(|l| l.max(0.0).sqrt()).sum();
    Ok((a.trace() + b.trace() - 2.0 * cross).max(0.0))
}

/// `W₂²(p, q) = ‖μ_p − μ_q‖² + bures_sq(Σ_p, Σ_q)`.
pub fn w2sq_gaussian_multi(p: &GaussianDist, q: &GaussianDist) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(DivergenceError::DimensionMismatch(p.dim(), q.dim()));
    }
    let mean_sq: f64 = p
        .mean
        .iter()
        .zip(&q.mean)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Ok(mean_sq + bures_sq(&p.cov, &q.cov)?)
}

const QUANTILE_GRID: usize = 1000;

/// Empirical `W₂²` between two 1D samples.
///
/// Equal sizes pair order statistics directly. Otherwise both
/// left-continuous empirical quantile functions are evaluated on the
/// midpoint grid `(k − ½)/1000` and the squared gaps averaged.
pub fn w2sq_empirical_1d(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(DivergenceError::EmptySample);
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        let s: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
        return Ok(s / a.len() as f64);
    }
    let s: f64 = (1..=QUANTILE_GRID)
        .map(|k| {
            let u = (k as f64 - 0.5) / QUANTILE_GRID as f64;
            (quantile_left(&a, u) - quantile_left(&b, u)).powi(2)
        })
        .sum();
    Ok(s / QUANTILE_GRID as f64)
}

/// `inf{x : F_n(x) ≥ u}` on sorted data.
fn quantile_left(sorted: &[f64], u: f64) -> f64 {
    let n = sorted.len();
    let idx = ((n as f64 * u).ceil() as usize).clamp(1, n) - 1;
    sorted[idx]
}

/// Brackets the target-vs-intermediate cross entropy given the observed
/// cross-entropy loss and the intermediate model's class probabilities:
/// `(ce + Σ ln qᵢ, ce − Σ ln qᵢ)`.
pub fn cross_entropy_bounds(target_ce: f64, q_mass: &[f64]) -> Result<(f64, f64)> {
    if q_mass.is_empty() {
        return Err(DivergenceError::InvalidProbabilityVector(
            "no classes".into(),
        ));
    }
    if let Some(bad) = q_mass.iter().find(|&&q| !(q > 0.0) || !q.is_finite()) {
        return Err(DivergenceError::InvalidProbabilityVector(format!(
            "nonpositive entry {bad}"
        )));
    }
    let total: f64 = q_mass.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(DivergenceError::InvalidProbabilityVector(format!(
            "entries sum to {total}"
        )));
    }
    let log_mass: f64 = q_mass.iter().map(|q| q.ln()).sum();
    Ok((target_ce + log_mass, target_ce - log_mass))
}

/// `output_risk + λ · input_risk`.
pub fn combine_linear_risk(
    output_risk: f64,
    input_risk: f64,
    params: LinearRiskParams,
) -> Result<f64> {
    for r in [output_risk, input_risk] {
        if !(r >= 0.0) {
            return Err(DivergenceError::NegativeRisk(r));
        }
    }
    Ok(output_risk + params.lambda * input_risk)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spd::Matrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn g(m: f64, v: f64) -> Gaussian1D {
        Gaussian1D::new(m, v).unwrap()
    }

    fn random_gaussian(rng: &mut impl Rng, n: usize) -> GaussianDist {
        let b = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let cov = SymMatrix::from_matrix(&b.matmul(&b.transpose()).unwrap())
            .unwrap()
            .add_diagonal(0.05);
        let mean = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        GaussianDist::new(mean, cov).unwrap()
    }

    /// Trapezoid quadrature of p·ln(p/q) over ±12 standard deviations.
    fn kl_quadrature(p: Gaussian1D, q: Gaussian1D) -> f64 {
        let pdf = |x: f64, g: Gaussian1D| {
            (-(x - g.mean()).powi(2) / (2.0 * g.var())).exp()
                / (2.0 * std::f64::consts::PI * g.var()).sqrt()
        };
        let lo = p.mean() - 12.0 * p.std();
        let hi = p.mean() + 12.0 * p.std();
        let n = 200_000;
        let h = (hi - lo) / n as f64;
        (0..=n)
            .map(|i| {
                let x = lo + i as f64 * h;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                let px = pdf(x, p);
                w * px * (px / pdf(x, q)).ln()
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn kl_1d_examples() {
        assert_eq!(kl_gaussian_1d(g(0.0, 1.0), g(0.0, 1.0)), 0.0);
        assert!((kl_gaussian_1d(g(1.0, 1.0), g(0.0, 1.0)) - 0.5).abs() < 1e-15);
        let oracle = kl_quadrature(g(0.0, 0.64), g(0.0, 0.25));
        assert!((oracle - 0.3100).abs() < 1e-4);
        assert!((kl_gaussian_1d(g(0.0, 0.64), g(0.0, 0.25)) - oracle).abs() < 1e-8);
    }

    #[test]
    fn kl_1d_agrees_with_quadrature_off_center() {
        let (p, q) = (g(0.3, 2.0), g(-0.5, 0.7));
        assert!((kl_gaussian_1d(p, q) - kl_quadrature(p, q)).abs() < 1e-8);
    }

    #[test]
    fn nonpositive_variance_rejected() {
        assert_eq!(
            Gaussian1D::new(0.0, 0.0),
            Err(DivergenceError::NonPositiveVariance(0.0))
        );
        assert!(Gaussian1D::new(0.0, -1.0).is_err());
    }

    #[test]
    fn kl_multi_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_gaussian(&mut rng, 3);
        assert!(kl_gaussian_multi(&p, &p).unwrap().abs() < 1e-12);

        let p = GaussianDist::new(vec![1.0, 0.0], SymMatrix::identity(2)).unwrap();
        let q = GaussianDist::standard(2);
        assert!((kl_gaussian_multi(&p, &q).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn kl_multi_factorizes_over_diagonal_covariances() {
        let pm = [0.2, -1.0, 3.0];
        let pv = [0.5, 2.0, 1.3];
        let qm = [0.0, 0.4, 2.0];
        let qv = [1.5, 0.3, 1.0];
        let p = GaussianDist::new(pm.to_vec(), SymMatrix::diag(&pv)).unwrap();
        let q = GaussianDist::new(qm.to_vec(), SymMatrix::diag(&qv)).unwrap();
        let sum: f64 = (0..3)
            .map(|i| kl_gaussian_1d(g(pm[i], pv[i]), g(qm[i], qv[i])))
            .sum();
        assert!((kl_gaussian_multi(&p, &q).unwrap() - sum).abs() < 1e-10);
    }

    #[test]
    fn kl_multi_rejects_mismatched_dims() {
        let p = GaussianDist::standard(2);
        let q = GaussianDist::standard(3);
        assert_eq!(
            kl_gaussian_multi(&p, &q),
            Err(DivergenceError::DimensionMismatch(2, 3))
        );
    }

    #[test]
    fn gaussian_dist_rejects_singular_cov() {
        let r = GaussianDist::new(vec![0.0, 0.0], SymMatrix::diag(&[1.0, 0.0]));
        assert!(matches!(
            r,
            Err(DivergenceError::Spd(SpdError::NotSpd { .. }))
        ));
    }

    #[test]
    fn w2_1d_examples() {
        assert_eq!(w2sq_gaussian_1d(g(0.0, 1.0), g(0.0, 1.0)), 0.0);
        assert_eq!(w2sq_gaussian_1d(g(0.0, 4.0), g(0.0, 1.0)), 1.0);
        assert!((w2sq_gaussian_1d(g(0.0, 0.64), g(0.0, 0.25)) - 0.09).abs() < 1e-15);
    }

    #[test]
    fn w2_multi_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_gaussian(&mut rng, 4);
        assert!(w2sq_gaussian_multi(&p, &p).unwrap() < 1e-10);

        let cov = SymMatrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 2.0]]).unwrap();
        let p = GaussianDist::new(vec![0.0, 0.0], cov.clone()).unwrap();
        let q = GaussianDist::new(vec![3.0, 4.0], cov).unwrap();
        assert!((w2sq_gaussian_multi(&p, &q).unwrap() - 25.0).abs() < 1e-10);

        // Commuting covariances: Bures term reduces to Σ(√a_i − √b_i)².
        let p = GaussianDist::new(vec![0.0, 0.0], SymMatrix::diag(&[4.0, 1.0])).unwrap();
        let q = GaussianDist::new(vec![0.0, 0.0], SymMatrix::diag(&[1.0, 4.0])).unwrap();
        assert!((w2sq_gaussian_multi(&p, &q).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn w2_multi_matches_1d() {
        let (p, q) = (g(0.7, 0.3), g(-0.1, 2.2));
        let m = w2sq_gaussian_multi(&p.into(), &q.into()).unwrap();
        assert!((m - w2sq_gaussian_1d(p, q)).abs() < 1e-12);
    }

    #[test]
    fn empirical_w2_examples() {
        assert_eq!(w2sq_empirical_1d(&[0.0, 1.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(w2sq_empirical_1d(&[0.0, 1.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(w2sq_empirical_1d(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(
            w2sq_empirical_1d(&[], &[1.0]),
            Err(DivergenceError::EmptySample)
        );
    }

    #[test]
    fn empirical_w2_unequal_lengths_uses_quantile_grid() {
        // Point mass vs two atoms: every grid quantile of ys is 0 or 2.
        let v = w2sq_empirical_1d(&[1.0], &[0.0, 2.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        // Shift of a 3-sample set against its 6-sample duplicate.
        let v = w2sq_empirical_1d(&[0.0, 1.0, 2.0], &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn cross_entropy_bracket_examples() {
        let (lo, hi) = cross_entropy_bounds(0.6931, &[0.5, 0.5]).unwrap();
        assert!((lo + 0.6932).abs() < 1e-3 && (hi - 2.0794).abs() < 1e-3);
        assert_eq!(cross_entropy_bounds(0.0, &[1.0]).unwrap(), (0.0, 0.0));
        let third = 1.0 / 3.0;
        let (lo, hi) = cross_entropy_bounds(1.0986, &[third, third, third]).unwrap();
        assert!((lo + 2.1972).abs() < 1e-3 && (hi - 4.3944).abs() < 1e-3);
        assert!(cross_entropy_bounds(0.0, &[0.5, 0.6]).is_err());
        assert!(cross_entropy_bounds(0.0, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn linear_risk_examples() {
        let p = |l| LinearRiskParams::new(l).unwrap();
        assert_eq!(combine_linear_risk(0.0, 0.0, p(1.0)).unwrap(), 0.0);
        assert_eq!(combine_linear_risk(1.0, 2.0, p(0.5)).unwrap(), 2.0);
        assert_eq!(combine_linear_risk(0.3, 0.0, p(7.0)).unwrap(), 0.3);
        assert_eq!(
            combine_linear_risk(-0.1, 0.0, p(1.0)),
            Err(DivergenceError::NegativeRisk(-0.1))
        );
        assert!(LinearRiskParams::new(-1.0).is_err());
    }

    proptest! {
        #[test]
        fn divergences_nonnegative_and_zero_on_diagonal(seed in any::<u64>(), n in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_gaussian(&mut rng, n);
            let q = random_gaussian(&mut rng, n);
            prop_assert!(kl_gaussian_multi(&p, &q).unwrap() >= 0.0);
            prop_assert!(w2sq_gaussian_multi(&p, &q).unwrap() >= 0.0);
            prop_assert!(kl_gaussian_multi(&p, &p).unwrap() < 1e-10);
            prop_assert!(w2sq_gaussian_multi(&p, &p).unwrap() < 1e-9);
        }

        #[test]
        fn bures_is_symmetric(seed in any::<u64>(), n in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_gaussian(&mut rng, n);
            let q = random_gaussian(&mut rng, n);
            let a = w2sq_gaussian_multi(&p, &q).unwrap();
            let b = w2sq_gaussian_multi(&q, &p).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn empirical_w2_triangle(seed in any::<u64>(), n in 1usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut draw = || (0..n).map(|_| rng.random_range(-5.0..5.0)).collect::<Vec<f64>>();
            let (a, b, c) = (draw(), draw(), draw());
            let d = |x: &[f64], y: &[f64]| w2sq_empirical_1d(x, y).unwrap().sqrt();
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-9);
        }
    }
}
