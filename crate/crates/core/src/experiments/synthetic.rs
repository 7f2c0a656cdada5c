//! Built-in suites on Gaussian data with a known ground truth.
//!
//! A fixed target law is paired with sources drawn from a one-parameter
//! family: at level `u = 0` the source equals the target, and the source
//! moves away monotonically as `u` grows. Each trial draws `u` uniformly
//! from `[0, max_level]`; the target samples are shared by all trials.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::config::SyntheticSettings;
use super::{trial_seed, Result, TrialMetrics, TrialRow};
use crate::data::{synth_gaussian_samples, synth_task_samples};
use crate::divergence::GaussianDist;
use crate::gaussian::{expected_loss, optimal_linear_model, GaussianTask, LinearModel};
use crate::portfolio::{
    estimate_moments_from_returns, max_sharpe, portfolio_transfer_risk, sharpe, transfer_portfolio,
    OptimizerOptions,
};
use crate::ridge::{evaluate, fit_ridge, fit_transfer_ridge, prediction_transfer_risk};
use crate::spd::{Matrix, SymMatrix};

const NOISE_VAR: f64 = 0.25;

/// Equicorrelated covariance `scale · ((1 − ρ) I + ρ 11ᵀ)`.
fn equicorrelated(d: usize, scale: f64, rho: f64) -> SymMatrix {
    let rows: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| scale * if i == j { 1.0 } else { rho })
                .collect()
        })
        .collect();
    SymMatrix::from_rows(&rows).expect("equicorrelated matrix is symmetric")
}

/// Scalar regression task `y = wᵀx + ε` with `x ~ N(0, Σ)`.
fn regression_task(sigma_x: &SymMatrix, w: &[f64]) -> Result<GaussianTask> {
    let d = w.len();
    let sxy = sigma_x.matvec(w)?;
    let signal = sigma_x.quad_form(w)?;
    Ok(GaussianTask::new(
        vec![0.0; d],
        vec![0.0],
        sigma_x.clone(),
        Matrix::column(&sxy),
        SymMatrix::scalar(signal + NOISE_VAR),
    )?)
}

fn target_weights(d: usize) -> Vec<f64> {
    (0..d)
        .map(|i| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            sign * (1.0 - i as f64 / (2 * d) as f64)
        })
        .collect()
}

/// Splits joint samples into the design and the response column.
fn split_xy(joint: &Matrix) -> (Matrix, Vec<f64>) {
    let d = joint.cols() - 1;
    (
        Matrix::from_fn(joint.rows(), d, |i, j| joint[(i, j)]),
        joint.col(d),
    )
}

/// Level `u`, then the streams of the source sample, the target training
/// sample, the target test sample and the optimizer. The target streams
/// depend on `seed` only, so every trial sees the same target data.
fn level_and_streams(settings: &SyntheticSettings, seed: u64, index: usize) -> (f64, [u64; 4]) {
    let mut rng = ChaCha20Rng::seed_from_u64(trial_seed(seed, index));
    let u = settings.max_level * rng.random::<f64>();
    let mut target = ChaCha20Rng::seed_from_u64(trial_seed(seed, usize::MAX));
    (
        u,
        [rng.random(), target.random(), target.random(), rng.random()],
    )
}

fn row(index: usize, level: f64, outcome: Result<TrialMetrics>) -> TrialRow {
    TrialRow {
        trial_index: index,
        source_group: "synthetic".into(),
        target_group: "synthetic".into(),
        sources: Vec::new(),
        targets: Vec::new(),
        level: Some(level),
        outcome: outcome.map_err(|e| e.to_string()),
    }
}

/// One regression trial. The source slope is `(1 − u) w_T`; the source
/// model is a ridge fit on source samples, and the row records its
/// empirical transfer risk on target test samples together with its
/// population regret on the target law.
pub fn synthetic_prediction_trial(
    settings: &SyntheticSettings,
    seed: u64,
    index: usize,
) -> TrialRow {
    let (u, streams) = level_and_streams(settings, seed, index);
    row(index, u, prediction_metrics(settings, u, streams))
}

fn prediction_metrics(s: &SyntheticSettings, u: f64, streams: [u64; 4]) -> Result<TrialMetrics> {
    let sigma_x = equicorrelated(s.dim, 1.0, 0.3);
    let w_t = target_weights(s.dim);
    let w_s: Vec<f64> = w_t.iter().map(|w| (1.0 - u) * w).collect();
    let target = regression_task(&sigma_x, &w_t)?;
    let source = regression_task(&sigma_x, &w_s)?;

    let (xs, ys) = split_xy(&synth_task_samples(&source, s.n_source, streams[0])?);
    let theta_s = fit_ridge(&xs, &ys, s.lambda_s)?.theta;
    let (xt, yt) = split_xy(&synth_task_samples(&target, s.n_target_train, streams[1])?);
    let (xe, ye) = split_xy(&synth_task_samples(&target, s.n_target_test, streams[2])?);

    let direct = fit_ridge(&xt, &yt, s.lambda_direct)?;
    let transfer = fit_transfer_ridge(&xt, &yt, s.lambda_t, &theta_s)?;
    let optimum = expected_loss(&optimal_linear_model(&target)?, &target)?;
    let regret = expected_loss(&LinearModel::scalar(&theta_s, 0.0)?, &target)? - optimum;
    Ok(TrialMetrics::Prediction {
        transfer_risk: prediction_transfer_risk(&theta_s, &xe, &ye)?,
        direct: evaluate(&direct.predict(&xe)?, &ye)?,
        transfer: evaluate(&transfer.predict(&xe)?, &ye)?,
        regret: Some(regret),
    })
}

/// Per-period means `0.3, 0.2, 0.1, …` on unit-variance assets.
fn target_means(d: usize) -> Vec<f64> {
    (0..d).map(|i| 0.3 - 0.1 * i as f64).collect()
}

const BEST_ASSET_SHIFT: f64 = 0.3;

/// One portfolio trial. The source law is the target law with the mean of
/// the best target asset lowered by `0.3 u`, so the source optimum drifts
/// to assets that are worse on the target. Moments are per period
/// (annualization 1); the transferred portfolio is scored by its Sharpe
/// ratio on held-out target samples.
pub fn synthetic_portfolio_trial(
    settings: &SyntheticSettings,
    seed: u64,
    index: usize,
) -> TrialRow {
    let (u, streams) = level_and_streams(settings, seed, index);
    row(index, u, portfolio_metrics(settings, u, streams))
}

fn portfolio_metrics(s: &SyntheticSettings, u: f64, streams: [u64; 4]) -> Result<TrialMetrics> {
    let sigma = equicorrelated(s.dim, 1.0, 0.3);
    let mu_t = target_means(s.dim);
    let mut mu_s = mu_t.clone();
    mu_s[0] -= BEST_ASSET_SHIFT * u;
    let draw = |mu: &[f64], n: usize, stream: u64| -> Result<Matrix> {
        let dist = GaussianDist::new(mu.to_vec(), sigma.clone())?;
        Ok(synth_gaussian_samples(&dist, n, stream)?.transpose())
    };
    let opts = OptimizerOptions {
        restarts: s.restarts,
        seed: streams[3],
        ..OptimizerOptions::default()
    };
    let m_source =
        estimate_moments_from_returns(&draw(&mu_s, s.n_source, streams[0])?, 1.0, opts.ridge_eps)?;
    let m_train = estimate_moments_from_returns(
        &draw(&mu_t, s.n_target_train, streams[1])?,
        1.0,
        opts.ridge_eps,
    )?;
    let m_test = estimate_moments_from_returns(
        &draw(&mu_t, s.n_target_test, streams[2])?,
        1.0,
        opts.ridge_eps,
    )?;

    let phi_source = max_sharpe(&m_source, &opts)?;
    let phi_direct = max_sharpe(&m_train, &opts)?;
    let phi_transfer = transfer_portfolio(&m_train, &phi_source, s.lambda, &opts)?;
    Ok(TrialMetrics::Portfolio {
        risk: portfolio_transfer_risk(&m_source, &phi_source, &m_test)?,
        direct_sharpe: sharpe(&phi_direct, &m_test)?,
        transfer_sharpe: sharpe(&phi_transfer, &m_test)?,
    })
}
