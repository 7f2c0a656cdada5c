mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use transfer_risk::data::synth_gaussian_samples;
use transfer_risk::divergence::{w2sq_gaussian_multi, GaussianDist};
use transfer_risk::portfolio::{
    estimate_moments_from_returns, max_sharpe, portfolio_transfer_risk, sharpe, transfer_objective,
    transfer_portfolio, Moments, OptimizerOptions, Portfolio,
};
use transfer_risk::spd::SymMatrix;

fn moments(mu: Vec<f64>, sigma: &[Vec<f64>], factor: f64) -> Moments {
    Moments::new(mu, SymMatrix::from_rows(sigma).unwrap(), factor).unwrap()
}

fn value(mu: &[f64], sigma: &[Vec<f64>], w: &[f64], anchor: &[f64], lambda: f64) -> f64 {
    let m: f64 = mu.iter().zip(w).map(|(a, b)| a * b).sum();
    let pen: f64 = anchor.iter().zip(w).map(|(a, b)| (a - b).powi(2)).sum();
    m / quad(sigma, w).sqrt() - lambda * pen
}

fn grid(mu: &[f64], sigma: &[Vec<f64>], anchor: &[f64], lambda: f64) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for i in 0..=100 {
        for j in 0..=100 - i {
            let w = [
                i as f64 / 100.0,
                j as f64 / 100.0,
                (100 - i - j) as f64 / 100.0,
            ];
            best = best.max(value(mu, sigma, &w, anchor, lambda));
        }
    }
    best
}

#[test]
fn moments_recover_the_generator() {
    let mu = vec![1.0, 2.0, 3.0];
    let sigma = vec![
        vec![0.04, 0.01, 0.0],
        vec![0.01, 0.09, 0.02],
        vec![0.0, 0.02, 0.16],
    ];
    let dist = GaussianDist::new(mu.clone(), SymMatrix::from_rows(&sigma).unwrap()).unwrap();
    let returns = synth_gaussian_samples(&dist, 100_000, 3)
        .unwrap()
        .transpose();
    let m = estimate_moments_from_returns(&returns, 1.0, 1e-8).unwrap();
    let g = m.as_gaussian();
    for i in 0..3 {
        assert!((g.mean()[i] - mu[i]).abs() <= 0.01 * mu[i]);
        for j in 0..3 {
            assert!(
                (g.cov()[(i, j)] - sigma[i][j]).abs() <= 0.01 * 0.16,
                "cov[{i}][{j}]"
            );
        }
    }
}

#[test]
fn tangency_portfolio_example() {
    let m = moments(vec![0.2, 0.1], &[vec![0.01, 0.0], vec![0.0, 0.01]], 1.0);
    let phi = max_sharpe(&m, &OptimizerOptions::default()).unwrap();
    assert!(
        (phi.weights()[0] - 2.0 / 3.0).abs() < 1e-4,
        "{:?}",
        phi.weights()
    );
}

#[test]
fn optimizer_meets_grid_search() {
    let mut r = rng(71);
    let opts = OptimizerOptions::default();
    for _ in 0..20 {
        let mu = vec![
            r.random_range(0.05..0.3),
            r.random_range(-0.1..0.3),
            r.random_range(-0.1..0.3),
        ];
        let sigma = random_spd_rows(&mut r, 3, 0.05);
        let m = moments(mu.clone(), &sigma, 1.0);
        let phi_s = max_sharpe(&m, &opts).unwrap();
        let zero = [0.0; 3];
        assert!(
            value(&mu, &sigma, phi_s.weights(), &zero, 0.0) >= grid(&mu, &sigma, &zero, 0.0) - 1e-3
        );
        let anchor = Portfolio::uniform(3);
        let phi = transfer_portfolio(&m, &anchor, 0.2, &opts).unwrap();
        let got = transfer_objective(&phi, &m, &anchor, 0.2).unwrap();
        assert!(got >= grid(&mu, &sigma, anchor.weights(), 0.2) - 1e-3);
    }
}

#[test]
fn relevance_term_is_the_gaussian_w2() {
    let mut r = rng(72);
    for _ in 0..50 {
        let ms = moments(
            vec![r.random_range(0.1..0.5), 0.1, 0.2],
            &random_spd_rows(&mut r, 3, 0.1),
            1.0,
        );
        let mt = moments(
            random_vec(&mut r, 3, 0.5),
            &random_spd_rows(&mut r, 3, 0.1),
            1.0,
        );
        let phi = max_sharpe(&ms, &OptimizerOptions::default()).unwrap();
        let risk = portfolio_transfer_risk(&ms, &phi, &mt).unwrap();
        let w2 = w2sq_gaussian_multi(&ms.as_gaussian(), &mt.as_gaussian()).unwrap();
        assert!((risk.r2 * risk.r2 - w2).abs() <= 1e-10 * (1.0 + w2));
        assert!((risk.r1 - 1.0 / sharpe(&phi, &ms).unwrap()).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sharpe_scales_with_the_root_of_the_factor(seed in 0u64..10_000, factor in 1.0f64..500.0) {
        let mut r = rng(seed);
        let mu = random_vec(&mut r, 3, 0.5);
        let sigma = random_spd_rows(&mut r, 3, 0.1);
        let w: Vec<f64> = random_vec(&mut r, 3, 1.0).iter().map(|v| v.abs() + 0.01).collect();
        let s: f64 = w.iter().sum();
        let phi = Portfolio::new(w.iter().map(|v| v / s).collect()).unwrap();
        let base = sharpe(&phi, &moments(mu.clone(), &sigma, 1.0)).unwrap();
        let scaled_sigma: Vec<Vec<f64>> = sigma.iter().map(|row| row.iter().map(|v| v * factor).collect()).collect();
        let scaled = sharpe(&phi, &moments(mu.iter().map(|v| v * factor).collect(), &scaled_sigma, factor)).unwrap();
        prop_assert!((scaled - factor.sqrt() * base).abs() <= 1e-9 * (1.0 + scaled.abs()));
    }

    #[test]
    fn optimizer_output_is_on_the_simplex(seed in 0u64..10_000, lambda in 0.0f64..5.0) {
        let mut r = rng(seed);
        let mut mu = random_vec(&mut r, 4, 0.3);
        mu[0] = 0.3;
        let m = moments(mu, &random_spd_rows(&mut r, 4, 0.05), 1.0);
        let anchor = Portfolio::vertex(4, 1);
        let phi = transfer_portfolio(&m, &anchor, lambda, &OptimizerOptions { restarts: 2, ..Default::default() }).unwrap();
        prop_assert!(phi.weights().iter().all(|w| *w >= 0.0));
        prop_assert!((phi.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}
