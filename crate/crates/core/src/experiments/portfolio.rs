use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::config::PortfolioSettings;
use super::{choose, lookup, trial_seed, ExperimentError, Result, TrialMetrics, TrialRow};
use crate::data::{build_panel, BarSeries, DataError, ReturnPanel};
use crate::portfolio::{
    estimate_moments, max_sharpe, portfolio_transfer_risk, sharpe, transfer_portfolio,
    OptimizerOptions, Portfolio, PortfolioRisk,
};

/// Return panels of one transfer; all three hold the same number of assets,
/// matched by position.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioPanels {
    pub source_train: ReturnPanel,
    pub target_train: ReturnPanel,
    pub target_test: ReturnPanel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortfolioParams {
    pub lambda: f64,
    /// Scale of source and target moments; defaults to the panels'
    /// frequency factors when `None`.
    pub source_annualization: Option<f64>,
    pub target_annualization: Option<f64>,
    pub options: OptimizerOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioOutcome {
    pub phi_source: Portfolio,
    pub phi_direct: Portfolio,
    pub phi_transfer: Portfolio,
    /// In-sample Sharpe of `phi_source` on the source training window.
    pub source_sharpe: f64,
    /// Sharpe ratios on the target test window.
    pub direct_sharpe: f64,
    pub transfer_sharpe: f64,
    /// `R1` from the source training window, `R2` between the source
    /// training and target test return laws.
    pub risk: PortfolioRisk,
}

/// Max-Sharpe on the source window, fine-tuned on the target training
/// window with penalty `λ‖φ − φ_S‖²`; a direct max-Sharpe fit on the target
/// training window is the baseline. Both are scored on the target test
/// window.
pub fn run_portfolio(panels: &PortfolioPanels, p: &PortfolioParams) -> Result<PortfolioOutcome> {
    let d = panels.source_train.n_assets();
    for panel in [&panels.target_train, &panels.target_test] {
        if panel.n_assets() != d {
            return Err(ExperimentError::Config(format!(
                "source has {d} assets, target has {}",
                panel.n_assets()
            )));
        }
    }
    let eps = p.options.ridge_eps;
    let f_src = p
        .source_annualization
        .unwrap_or(panels.source_train.frequency().annualization_factor());
    let f_tgt = p
        .target_annualization
        .unwrap_or(panels.target_train.frequency().annualization_factor());
    let m_source = estimate_moments(&panels.source_train, f_src, eps)?;
    let m_train = estimate_moments(&panels.target_train, f_tgt, eps)?;
    let m_test = estimate_moments(&panels.target_test, f_tgt, eps)?;

    let phi_source = max_sharpe(&m_source, &p.options)?;
    let phi_direct = max_sharpe(&m_train, &p.options)?;
    let phi_transfer = transfer_portfolio(&m_train, &phi_source, p.lambda, &p.options)?;
    Ok(PortfolioOutcome {
        source_sharpe: sharpe(&phi_source, &m_source)?,
        direct_sharpe: sharpe(&phi_direct, &m_test)?,
        transfer_sharpe: sharpe(&phi_transfer, &m_test)?,
        risk: portfolio_transfer_risk(&m_source, &phi_source, &m_test)?,
        phi_source,
        phi_direct,
        phi_transfer,
    })
}

/// Parsed `[start, end)` bounds of the three windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Windows {
    pub source_train: (Option<i64>, Option<i64>),
    pub target_train: (Option<i64>, Option<i64>),
    pub target_test: (Option<i64>, Option<i64>),
}

fn windowed(
    panel: &ReturnPanel,
    (start, end): (Option<i64>, Option<i64>),
    what: &'static str,
) -> Result<ReturnPanel> {
    let w = panel.window(start, end);
    if w.n_periods() == 0 {
        return Err(DataError::EmptySplit(what).into());
    }
    Ok(w)
}

pub(super) fn trial(
    settings: &PortfolioSettings,
    windows: &Windows,
    source_group: usize,
    target_group: usize,
    data: &BTreeMap<String, BarSeries>,
    seed: u64,
    index: usize,
) -> TrialRow {
    let (sg, tg) = (
        &settings.sources[source_group],
        &settings.targets[target_group],
    );
    let mut row = TrialRow {
        trial_index: index,
        source_group: sg.name.clone(),
        target_group: tg.name.clone(),
        sources: Vec::new(),
        targets: Vec::new(),
        level: None,
        outcome: Err(String::new()),
    };
    let trial_seed = trial_seed(seed, index);
    let mut rng = ChaCha20Rng::seed_from_u64(trial_seed);
    let d = settings.assets_per_trial;
    let outcome = (|| {
        let targets = if tg.symbols.len() == d {
            tg.symbols.clone()
        } else {
            choose(&mut rng, &tg.symbols, d)?
        };
        let sources = if settings.same_assets {
            targets.clone()
        } else {
            choose(&mut rng, &sg.symbols, d)?
        };
        row.sources = sources.clone();
        row.targets = targets.clone();
        let src: Vec<BarSeries> = lookup(data, &sources)?.into_iter().cloned().collect();
        let tgt: Vec<BarSeries> = lookup(data, &targets)?.into_iter().cloned().collect();
        let src_panel = build_panel(&src, sg.frequency, settings.overnight(sg.frequency))?;
        let tgt_panel = build_panel(&tgt, tg.frequency, settings.overnight(tg.frequency))?;
        let panels = PortfolioPanels {
            source_train: windowed(&src_panel, windows.source_train, "source train")?,
            target_train: windowed(&tgt_panel, windows.target_train, "target train")?,
            target_test: windowed(&tgt_panel, windows.target_test, "target test")?,
        };
        let params = PortfolioParams {
            lambda: settings.lambda,
            source_annualization: None,
            target_annualization: None,
            options: OptimizerOptions {
                restarts: settings.restarts,
                seed: trial_seed,
                ..OptimizerOptions::default()
            },
        };
        run_portfolio(&panels, &params)
    })();
    row.outcome = outcome
        .map(|o| TrialMetrics::Portfolio {
            risk: o.risk,
            direct_sharpe: o.direct_sharpe,
            transfer_sharpe: o.transfer_sharpe,
        })
        .map_err(|e| e.to_string());
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Frequency;
    use crate::spd::Matrix;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn panel(mu: &[f64], n: usize, seed: u64, start: i64) -> ReturnPanel {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let d = mu.len();
        let r = Matrix::from_fn(d, n, |i, _| {
            mu[i] + 0.01 * rng.sample::<f64, _>(StandardNormal)
        });
        ReturnPanel::new(
            (0..d).map(|i| format!("A{i}")).collect(),
            (0..n as i64).map(|t| start + 86_400 * t).collect(),
            r,
            Frequency::D1,
            true,
        )
        .unwrap()
    }

    fn params() -> PortfolioParams {
        PortfolioParams {
            lambda: 0.2,
            source_annualization: None,
            target_annualization: None,
            options: OptimizerOptions::default(),
        }
    }

    #[test]
    fn identical_source_and_target_has_no_relevance_risk() {
        let p = panel(&[0.001, 0.0005, 0.0002], 300, 3, 0);
        let panels = PortfolioPanels {
            source_train: p.clone(),
            target_train: p.clone(),
            target_test: p,
        };
        let out = run_portfolio(&panels, &params()).unwrap();
        assert!(out.risk.r2.abs() < 1e-6, "{}", out.risk.r2);
        assert!((out.risk.total - out.risk.r1).abs() < 1e-6);
        assert!((out.risk.r1 - 1.0 / out.source_sharpe).abs() < 1e-12);
        assert!(out.transfer_sharpe >= out.direct_sharpe - 1e-6);
    }

    #[test]
    fn dimension_mismatch() {
        let panels = PortfolioPanels {
            source_train: panel(&[0.001, 0.0005], 50, 1, 0),
            target_train: panel(&[0.001, 0.0005, 0.0], 50, 2, 0),
            target_test: panel(&[0.001, 0.0005, 0.0], 50, 3, 0),
        };
        assert!(matches!(
            run_portfolio(&panels, &params()),
            Err(ExperimentError::Config(_))
        ));
    }
}
