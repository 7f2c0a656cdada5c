//! Long-only maximum-Sharpe portfolios and their transfer.
//!
//! The Sharpe ratio is not concave on the simplex, so the optimizer runs
//! projected-gradient ascent from several starts and keeps the best.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::data::ReturnPanel;
use crate::divergence::{w2sq_gaussian_multi, GaussianDist};
use crate::spd::{dot, Matrix, SpdError, SymMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PortfolioError {
    #[error(transparent)]
    NotSpd(#[from] SpdError),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("need at least 2 observations per asset, got {0}")]
    InsufficientData(usize),
    #[error("portfolio variance is zero")]
    ZeroVariancePortfolio,
    #[error("invalid portfolio: {0}")]
    InvalidPortfolio(String),
    #[error("source Sharpe ratio {0} is not positive, R1 is undefined")]
    NonPositiveSourceSharpe(f64),
    #[error("grid oracle supports d <= 4, got {0}")]
    DimensionTooLarge(usize),
    #[error("grid step must lie in (0, 0.5], got {0}")]
    InvalidStep(f64),
    #[error("invalid optimizer options: {0}")]
    InvalidOptions(String),
    #[error("lambda must be finite and nonnegative, got {0}")]
    InvalidLambda(f64),
    #[error("annualization factor must be positive, got {0}")]
    InvalidAnnualization(f64),
}

pub type Result<T> = std::result::Result<T, PortfolioError>;

#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mu: Vec<f64>,
    pub sigma: SymMatrix,
    pub annualization_factor: f64,
    /// Set when `ridge_eps · I` was added to make `sigma` SPD.
    pub regularized: bool,
}

impl Moments {
    pub fn new(mu: Vec<f64>, sigma: SymMatrix, annualization_factor: f64) -> Result<Self> {
        if mu.len() != sigma.dim() {
            return Err(PortfolioError::DimensionMismatch {
                expected: mu.len(),
                found: sigma.dim(),
            });
        }
        if !(annualization_factor > 0.0 && annualization_factor.is_finite()) {
            return Err(PortfolioError::InvalidAnnualization(annualization_factor));
        }
        sigma.spd_factor()?;
        Ok(Self {
            mu,
            sigma,
            annualization_factor,
            regularized: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn as_gaussian(&self) -> GaussianDist {
        GaussianDist::new(self.mu.clone(), self.sigma.clone()).expect("validated SPD")
    }
}

/// Scaled sample moments of a return panel: `factor · mean` and
/// `factor · unbiased covariance`.
pub fn estimate_moments(
    panel: &ReturnPanel,
    annualization_factor: f64,
    ridge_eps: f64,
) -> Result<Moments> {
    estimate_moments_from_returns(panel.returns(), annualization_factor, ridge_eps)
}

/// As [`estimate_moments`] for an `assets × time` matrix.
pub fn estimate_moments_from_returns(
    returns: &Matrix,
    annualization_factor: f64,
    ridge_eps: f64,
) -> Result<Moments> {
    let (d, n) = returns.shape();
    if n < 2 {
        return Err(PortfolioError::InsufficientData(n));
    }
    if d == 0 {
        return Err(PortfolioError::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    if !(annualization_factor > 0.0 && annualization_factor.is_finite()) {
        return Err(PortfolioError::InvalidAnnualization(annualization_factor));
    }
    let means: Vec<f64> = (0..d)
        .map(|i| returns.row(i).iter().sum::<f64>() / n as f64)
        .collect();
    let cov = Matrix::from_fn(d, d, |i, j| {
        let (ri, rj) = (returns.row(i), returns.row(j));
        let s: f64 = ri
            .iter()
            .zip(rj)
            .map(|(a, b)| (a - means[i]) * (b - means[j]))
            .sum();
        annualization_factor * s / (n - 1) as f64
    });
    let mut sigma = SymMatrix::from_matrix(&cov)?;
    let mut regularized = false;
    if !sigma.is_spd() {
        sigma = sigma.add_diagonal(ridge_eps);
        regularized = true;
        sigma.spd_factor()?;
    }
    Ok(Moments {
        mu: means.iter().map(|m| annualization_factor * m).collect(),
        sigma,
        annualization_factor,
        regularized,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Portfolio {
    weights: Vec<f64>,
}

impl Portfolio {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(PortfolioError::InvalidPortfolio("no assets".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < -1e-12) {
            return Err(PortfolioError::InvalidPortfolio(format!(
                "weight {w} below zero"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(PortfolioError::InvalidPortfolio(format!(
                "weights sum to {sum}"
            )));
        }
        Ok(Self { weights })
    }

    pub fn uniform(d: usize) -> Self {
        Self {
            weights: vec![1.0 / d as f64; d],
        }
    }

    pub fn vertex(d: usize, i: usize) -> Self {
        let mut weights = vec![0.0; d];
        weights[i] = 1.0;
        Self { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn distance(&self, other: &Portfolio) -> f64 {
        sq_dist(&self.weights, &other.weights).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PortfolioRisk {
    pub r1: f64,
    pub r2: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizerOptions {
    /// Random starts in addition to the vertices and the uniform point.
    pub restarts: usize,
    pub max_iters: usize,
    pub step_init: f64,
    pub tol: f64,
    pub ridge_eps: f64,
    pub seed: u64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            max_iters: 10_000,
            step_init: 0.1,
            tol: 1e-8,
            ridge_eps: 1e-8,
            seed: 0,
        }
    }
}

impl OptimizerOptions {
    fn validate(&self) -> Result<()> {
        let ok = self.max_iters > 0
            && self.step_init > 0.0
            && self.tol > 0.0
            && self.ridge_eps > 0.0
            && self.step_init.is_finite();
        if !ok {
            return Err(PortfolioError::InvalidOptions(format!("{self:?}")));
        }
        Ok(())
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn check_dim(m: &Moments, d: usize) -> Result<()> {
    if m.dim() != d {
        return Err(PortfolioError::DimensionMismatch {
            expected: m.dim(),
            found: d,
        });
    }
    Ok(())
}

/// `μᵀφ / √(φᵀΣφ)`.
pub fn sharpe(phi: &Portfolio, m: &Moments) -> Result<f64> {
    check_dim(m, phi.dim())?;
    sharpe_raw(&phi.weights, m)
}

fn sharpe_raw(w: &[f64], m: &Moments) -> Result<f64> {
    let var = m.sigma.quad_form(w)?;
    if var <= 0.0 {
        return Err(PortfolioError::ZeroVariancePortfolio);
    }
    Ok(dot(&m.mu, w) / var.sqrt())
}

/// Euclidean projection onto `{φ ≥ 0, Σφ = 1}` by sort-and-threshold.
pub fn project_simplex(v: &[f64]) -> Portfolio {
    assert!(!v.is_empty(), "projection needs at least one coordinate");
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    let mut weights: Vec<f64> = v.iter().map(|x| (x - theta).max(0.0)).collect();
    // Renormalize away rounding so the sum is 1 to machine precision.
    let s: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= s);
    Portfolio { weights }
}

/// `sharpe(φ) − λ‖φ − anchor‖²` and its gradient.
struct Objective<'a> {
    m: &'a Moments,
    anchor: Option<&'a [f64]>,
    lambda: f64,
}

impl Objective<'_> {
    fn value(&self, w: &[f64]) -> f64 {
        let s = sharpe_raw(w, self.m).unwrap_or(f64::NEG_INFINITY);
        match self.anchor {
            Some(a) => s - self.lambda * sq_dist(w, a),
            None => s,
        }
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let sw = self.m.sigma.matvec(w).expect("dimension checked");
        let v = dot(w, &sw);
        let a = dot(&self.m.mu, w);
        let sd = v.sqrt();
        let mut g: Vec<f64> = self
            .m
            .mu
            .iter()
            .zip(&sw)
            .map(|(mu, s)| mu / sd - a * s / (v * sd))
            .collect();
        if let Some(anchor) = self.anchor {
            for ((gi, wi), ai) in g.iter_mut().zip(w).zip(anchor) {
                *gi -= 2.0 * self.lambda * (wi - ai);
            }
        }
        g
    }

    /// Projected-gradient ascent from `start`; the step is reset to
    /// `step_init` each iteration and halved until the objective increases.
    fn ascend(&self, start: &[f64], opts: &OptimizerOptions) -> (Vec<f64>, f64) {
        let mut w = start.to_vec();
        let mut f = self.value(&w);
        for _ in 0..opts.max_iters {
            let g = self.gradient(&w);
            let mut step = opts.step_init;
            let mut accepted = None;
            while step > 1e-20 {
                let trial: Vec<f64> = w.iter().zip(&g).map(|(x, d)| x + step * d).collect();
                let cand = project_simplex(&trial).weights;
                let fc = self.value(&cand);
                if fc > f {
                    accepted = Some((cand, fc));
                    break;
                }
                step *= 0.5;
            }
            let Some((cand, fc)) = accepted else { break };
            let moved = cand
                .iter()
                .zip(&w)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            w = cand;
            f = fc;
            if moved <= opts.tol {
                break;
            }
        }
        (w, f)
    }
}

fn starting_points(d: usize, opts: &OptimizerOptions, extra: Option<&Portfolio>) -> Vec<Vec<f64>> {
    let mut starts: Vec<Vec<f64>> = (0..d).map(|i| Portfolio::vertex(d, i).weights).collect();
    starts.push(Portfolio::uniform(d).weights);
    if let Some(p) = extra {
        starts.push(p.weights.clone());
    }
    // Uniform draws on the simplex: normalized unit exponentials.
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.restarts {
        let e: Vec<f64> = (0..d).map(|_| Exp1.sample(&mut rng)).collect();
        let s: f64 = e.iter().sum();
        starts.push(e.iter().map(|x| x / s).collect());
    }
    starts
}

fn optimize(
    obj: &Objective,
    opts: &OptimizerOptions,
    extra: Option<&Portfolio>,
) -> Result<Portfolio> {
    opts.validate()?;
    obj.m.sigma.spd_factor()?;
    let starts = starting_points(obj.m.dim(), opts, extra);
    let mut results: Vec<(Vec<f64>, f64)> =
        starts.par_iter().map(|s| obj.ascend(s, opts)).collect();
    // Best objective, earliest start on ties.
    let mut best = 0;
    for (i, r) in results.iter().enumerate() {
        if r.1 > results[best].1 {
            best = i;
        }
    }
    Ok(Portfolio {
        weights: results.swap_remove(best).0,
    })
}

/// Long-only portfolio maximizing the Sharpe ratio under `m`.
pub fn max_sharpe(m: &Moments, opts: &OptimizerOptions) -> Result<Portfolio> {
    let obj = Objective {
        m,
        anchor: None,
        lambda: 0.0,
    };
    optimize(&obj, opts, None)
}

/// Maximizes `sharpe(φ, m_target) − λ‖φ_S − φ‖²` over the simplex.
pub fn transfer_portfolio(
    m_target: &Moments,
    phi_source: &Portfolio,
    lambda: f64,
    opts: &OptimizerOptions,
) -> Result<Portfolio> {
    check_dim(m_target, phi_source.dim())?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(PortfolioError::InvalidLambda(lambda));
    }
    let obj = Objective {
        m: m_target,
        anchor: Some(&phi_source.weights),
        lambda,
    };
    optimize(&obj, opts, Some(phi_source))
}

/// Penalized objective value used by [`transfer_portfolio`].
pub fn transfer_objective(
    phi: &Portfolio,
    m: &Moments,
    phi_source: &Portfolio,
    lambda: f64,
) -> Result<f64> {
    check_dim(m, phi.dim())?;
    check_dim(m, phi_source.dim())?;
    Ok(sharpe(phi, m)? - lambda * sq_dist(&phi.weights, &phi_source.weights))
}

/// `R1 = 1 / sharpe(φ_S, m_S)`, `R2 = W₂(N(μ_S, Σ_S), N(μ_T, Σ_T))`.
pub fn portfolio_transfer_risk(
    m_source: &Moments,
    phi_source: &Portfolio,
    m_target: &Moments,
) -> Result<PortfolioRisk> {
    check_dim(m_source, m_target.dim())?;
    let s = sharpe(phi_source, m_source)?;
    if s <= 0.0 {
        return Err(PortfolioError::NonPositiveSourceSharpe(s));
    }
    let r1 = 1.0 / s;
    let w2 = w2sq_gaussian_multi(&m_source.as_gaussian(), &m_target.as_gaussian())
        .map_err(|e| PortfolioError::InvalidPortfolio(e.to_string()))?;
    let r2 = w2.sqrt();
    Ok(PortfolioRisk {
        r1,
        r2,
        total: r1 + r2,
    })
}

/// Exhaustive search over the simplex lattice with spacing `step`.
pub fn grid_oracle(
    m: &Moments,
    phi_source: Option<&Portfolio>,
    lambda: f64,
    step: f64,
) -> Result<Portfolio> {
    let d = m.dim();
    if d > 4 {
        return Err(PortfolioError::DimensionTooLarge(d));
    }
    if !(step > 0.0 && step <= 0.5) {
        return Err(PortfolioError::InvalidStep(step));
    }
    if let Some(p) = phi_source {
        check_dim(m, p.dim())?;
    }
    let n = (1.0 / step).round() as usize;
    let obj = Objective {
        m,
        anchor: phi_source.map(|p| p.weights.as_slice()),
        lambda,
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut counts = vec![0usize; d];
    lattice(&mut counts, 0, n, &mut |c| {
        let w: Vec<f64> = c.iter().map(|&k| k as f64 / n as f64).collect();
        let f = obj.value(&w);
        if best.as_ref().is_none_or(|(_, bf)| f > *bf) {
            best = Some((w, f));
        }
    });
    Ok(Portfolio {
        weights: best.expect("lattice is nonempty").0,
    })
}

/// Visits every composition of `remaining` into `counts[pos..]`.
fn lattice(counts: &mut [usize], pos: usize, remaining: usize, visit: &mut impl FnMut(&[usize])) {
    if pos + 1 == counts.len() {
        counts[pos] = remaining;
        visit(counts);
        return;
    }
    for k in (0..=remaining).rev() {
        counts[pos] = k;
        lattice(counts, pos + 1, remaining - k, visit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn moments(mu: &[f64], sigma: &[Vec<f64>]) -> Moments {
        Moments::new(mu.to_vec(), SymMatrix::from_rows(sigma).unwrap(), 1.0).unwrap()
    }

    fn close_vec(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn estimate_single_asset() {
        let r = Matrix::from_rows(&[vec![0.01, 0.03]]).unwrap();
        let m = estimate_moments_from_returns(&r, 252.0, 1e-8).unwrap();
        assert!((m.mu[0] - 5.04).abs() < 1e-12);
        assert!((m.sigma[(0, 0)] - 0.0504).abs() < 1e-12);
        assert!(!m.regularized);
        let raw = estimate_moments_from_returns(&r, 1.0, 1e-8).unwrap();
        assert!((raw.mu[0] - 0.02).abs() < 1e-15);
        assert!((raw.sigma[(0, 0)] - 2e-4).abs() < 1e-15);
        assert!(matches!(
            estimate_moments_from_returns(&Matrix::from_rows(&[vec![0.1]]).unwrap(), 1.0, 1e-8),
            Err(PortfolioError::InsufficientData(1))
        ));
    }

    #[test]
    fn collinear_assets_get_regularized() {
        let r = Matrix::from_rows(&[vec![0.01, 0.02, -0.01], vec![0.02, 0.04, -0.02]]).unwrap();
        let m = estimate_moments_from_returns(&r, 1.0, 1e-8).unwrap();
        assert!(m.regularized);
        assert!(m.sigma.is_spd());
    }

    #[test]
    fn sharpe_examples() {
        let m = moments(&[0.1], &[vec![0.04]]);
        let phi = Portfolio::new(vec![1.0]).unwrap();
        assert!((sharpe(&phi, &m).unwrap() - 0.5).abs() < 1e-15);
        let m2 = moments(&[0.2], &[vec![0.04]]);
        assert!((sharpe(&phi, &m2).unwrap() - 1.0).abs() < 1e-15);
        let m4 = moments(&[0.1], &[vec![0.16]]);
        assert!((sharpe(&phi, &m4).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_simplex(&[0.3, 0.7]).weights(), &[0.3, 0.7]);
        assert_eq!(project_simplex(&[2.0, 0.0]).weights(), &[1.0, 0.0]);
        assert_eq!(project_simplex(&[0.6, 0.6]).weights(), &[0.5, 0.5]);
        assert_eq!(project_simplex(&[-3.0]).weights(), &[1.0]);
    }

    #[test]
    fn max_sharpe_examples() {
        let opts = OptimizerOptions::default();
        let m = moments(&[0.1, 0.1], &[vec![0.04, 0.0], vec![0.0, 0.01]]);
        let p = max_sharpe(&m, &opts).unwrap();
        assert!(close_vec(p.weights(), &[0.2, 0.8], 1e-4), "{p:?}");

        let m = moments(&[0.2, 0.1], &[vec![0.01, 0.0], vec![0.0, 0.01]]);
        let p = max_sharpe(&m, &opts).unwrap();
        assert!(
            close_vec(p.weights(), &[2.0 / 3.0, 1.0 / 3.0], 1e-4),
            "{p:?}"
        );
        let g = grid_oracle(&m, None, 0.0, 0.01).unwrap();
        assert!(sharpe(&p, &m).unwrap() >= sharpe(&g, &m).unwrap() - 1e-12);
    }

    #[test]
    fn transfer_limits() {
        let opts = OptimizerOptions::default();
        let m = moments(
            &[0.1, 0.05, 0.08],
            &[
                vec![0.04, 0.01, 0.0],
                vec![0.01, 0.02, 0.005],
                vec![0.0, 0.005, 0.03],
            ],
        );
        let anchor = Portfolio::new(vec![0.5, 0.3, 0.2]).unwrap();
        let free = transfer_portfolio(&m, &anchor, 0.0, &opts).unwrap();
        let direct = max_sharpe(&m, &opts).unwrap();
        assert!((sharpe(&free, &m).unwrap() - sharpe(&direct, &m).unwrap()).abs() < 1e-6);
        let pinned = transfer_portfolio(&m, &anchor, 1e9, &opts).unwrap();
        assert!(close_vec(pinned.weights(), anchor.weights(), 1e-4));
    }

    #[test]
    fn risk_examples() {
        let m = moments(&[0.2], &[vec![0.01]]);
        let phi = Portfolio::new(vec![1.0]).unwrap();
        let r = portfolio_transfer_risk(&m, &phi, &m).unwrap();
        assert_eq!((r.r1, r.r2, r.total), (0.5, 0.0, 0.5));
        let neg = moments(&[-0.2], &[vec![0.01]]);
        assert!(matches!(
            portfolio_transfer_risk(&neg, &phi, &m),
            Err(PortfolioError::NonPositiveSourceSharpe(_))
        ));
    }

    #[test]
    fn grid_examples() {
        let m = moments(&[0.1, 0.1], &[vec![0.04, 0.0], vec![0.0, 0.01]]);
        let mut seen = Vec::new();
        let mut counts = vec![0; 2];
        lattice(&mut counts, 0, 2, &mut |c| seen.push(c.to_vec()));
        assert_eq!(seen, vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        let g = grid_oracle(&m, None, 0.0, 0.01).unwrap();
        assert!(close_vec(g.weights(), &[0.2, 0.8], 1e-12));
        let one = moments(&[0.1], &[vec![0.04]]);
        assert_eq!(grid_oracle(&one, None, 0.0, 0.1).unwrap().weights(), &[1.0]);
        let five = Moments::new(vec![0.1; 5], SymMatrix::identity(5), 1.0).unwrap();
        assert!(matches!(
            grid_oracle(&five, None, 0.0, 0.1),
            Err(PortfolioError::DimensionTooLarge(5))
        ));
    }

    fn random_moments() -> impl Strategy<Value = Moments> {
        (
            prop::collection::vec(-0.05f64..0.2, 3),
            prop::collection::vec(-0.2f64..0.2, 9),
        )
            .prop_map(|(mu, a)| {
                let a = Matrix::from_vec(3, 3, a).unwrap();
                let s = SymMatrix::from_matrix(&a.matmul(&a.transpose()).unwrap())
                    .unwrap()
                    .add_diagonal(0.01);
                Moments::new(mu, s, 1.0).unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn projection_is_feasible(v in prop::collection::vec(-5.0f64..5.0, 1..10)) {
            let p = project_simplex(&v);
            prop_assert!(p.weights().iter().all(|w| *w >= 0.0));
            prop_assert!((p.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn optimizer_beats_its_starts(m in random_moments()) {
            let opts = OptimizerOptions::default();
            let p = max_sharpe(&m, &opts).unwrap();
            let best = sharpe(&p, &m).unwrap();
            for s in starting_points(3, &opts, None) {
                prop_assert!(best >= sharpe_raw(&s, &m).unwrap() - 1e-12);
            }
            prop_assert!(Portfolio::new(p.weights().to_vec()).is_ok());
        }

        #[test]
        fn transfer_improves_on_anchor(m in random_moments(), raw in prop::collection::vec(0.0f64..1.0, 3), lambda in 0.0f64..2.0) {
            let anchor = project_simplex(&raw);
            let p = transfer_portfolio(&m, &anchor, lambda, &OptimizerOptions::default()).unwrap();
            prop_assert!(
                transfer_objective(&p, &m, &anchor, lambda).unwrap()
                    >= transfer_objective(&anchor, &m, &anchor, lambda).unwrap() - 1e-9
            );
        }
    }
}
