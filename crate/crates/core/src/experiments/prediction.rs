use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::config::PredictionSettings;
use super::{choose, lookup, trial_seed, ExperimentError, Result, TrialMetrics, TrialRow};
use crate::data::BarSeries;
use crate::ridge::{
    align_source_theta, evaluate, fit_ridge, fit_transfer_ridge, prediction_transfer_risk,
    standardize, MetricsReport, RidgeModel,
};
use crate::signature::build_feature_dataset;
use crate::spd::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionParams {
    pub lag: usize,
    pub order: usize,
    pub lambda_s: f64,
    pub lambda_t: f64,
    pub lambda_direct: f64,
    /// Rows whose return closes before this instant train the models.
    pub train_end: i64,
    /// Exclusive end of the test rows; open when `None`.
    pub test_end: Option<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionOutcome {
    /// Source coefficients on the source standardization.
    pub source_model: RidgeModel,
    pub direct_model: RidgeModel,
    pub transfer_model: RidgeModel,
    pub direct: MetricsReport,
    pub transfer: MetricsReport,
    pub transfer_risk: f64,
    /// Closing timestamp of each test return.
    pub test_timestamps: Vec<i64>,
    /// Test targets and predictions, on the target standardization.
    pub actual: Vec<f64>,
    pub direct_prediction: Vec<f64>,
    pub transfer_prediction: Vec<f64>,
}

struct Split {
    x_train: Vec<Vec<f64>>,
    y_train: Vec<f64>,
    x_test: Vec<Vec<f64>>,
    y_test: Vec<f64>,
    test_timestamps: Vec<i64>,
}

/// Signature rows of one series, split by the timestamp of the bar that
/// closes each predicted return. Volume enters as `ln(1 + v)`.
fn feature_split(series: &BarSeries, p: &PredictionParams) -> Result<Split> {
    let log_price: Vec<f64> = series.close().iter().map(|c| c.ln()).collect();
    let log_volume: Vec<f64> = series.volume().iter().map(|v| v.ln_1p()).collect();
    let rows = build_feature_dataset(&log_price, &log_volume, p.lag, p.order)?;
    let ts = series.timestamps();
    let mut s = Split {
        x_train: Vec::new(),
        y_train: Vec::new(),
        x_test: Vec::new(),
        y_test: Vec::new(),
        test_timestamps: Vec::new(),
    };
    for r in rows {
        let t = ts[r.index + 1];
        if t < p.train_end {
            s.x_train.push(r.x);
            s.y_train.push(r.y);
        } else if p.test_end.is_none_or(|e| t < e) {
            s.x_test.push(r.x);
            s.y_test.push(r.y);
            s.test_timestamps.push(t);
        }
    }
    Ok(s)
}

fn design(rows: &[Vec<f64>], what: &'static str) -> Result<Matrix> {
    if rows.is_empty() {
        return Err(crate::data::DataError::EmptySplit(what).into());
    }
    Ok(Matrix::from_rows(rows)?)
}

/// Pools the sources' training rows into one ridge fit, fine-tunes it on
/// the target's training rows, fits a direct ridge for comparison, and
/// scores both on the target's test rows.
///
/// Each dataset is standardized with its own statistics; the transfer
/// risk is the empirical `W₂²` between the source model's predictions on
/// the standardized target test design and the standardized test returns.
pub fn run_prediction(
    sources: &[&BarSeries],
    target: &BarSeries,
    p: &PredictionParams,
) -> Result<PredictionOutcome> {
    if sources.is_empty() {
        return Err(ExperimentError::Config(
            "at least one source series is required".into(),
        ));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in sources {
        let split = feature_split(s, p)?;
        xs.extend(split.x_train);
        ys.extend(split.y_train);
    }
    let (xs_std, ys_std, src_stats) = standardize(&design(&xs, "source train")?, &ys, None)?;
    let source_model = fit_ridge(&xs_std, &ys_std, p.lambda_s)?.with_stats(src_stats)?;

    let split = feature_split(target, p)?;
    let (xt, yt, tgt_stats) = standardize(
        &design(&split.x_train, "target train")?,
        &split.y_train,
        None,
    )?;
    let theta_s = align_source_theta(&source_model, &tgt_stats)?;
    let direct_model = fit_ridge(&xt, &yt, p.lambda_direct)?.with_stats(tgt_stats.clone())?;
    let transfer_model =
        fit_transfer_ridge(&xt, &yt, p.lambda_t, &theta_s)?.with_stats(tgt_stats.clone())?;

    let (x_test, y_test, _) = standardize(
        &design(&split.x_test, "target test")?,
        &split.y_test,
        Some(&tgt_stats),
    )?;
    let direct_prediction = direct_model.predict(&x_test)?;
    let transfer_prediction = transfer_model.predict(&x_test)?;
    Ok(PredictionOutcome {
        direct: evaluate(&direct_prediction, &y_test)?,
        transfer: evaluate(&transfer_prediction, &y_test)?,
        transfer_risk: prediction_transfer_risk(&theta_s, &x_test, &y_test)?,
        source_model,
        direct_model,
        transfer_model,
        test_timestamps: split.test_timestamps,
        actual: y_test,
        direct_prediction,
        transfer_prediction,
    })
}

/// Draws the symbols of one trial: `sources_per_trial` sources and, unless
/// the target is fixed, one more symbol used as target.
fn select(settings: &PredictionSettings, seed: u64, index: usize) -> Result<(Vec<String>, String)> {
    let mut rng = ChaCha20Rng::seed_from_u64(trial_seed(seed, index));
    match &settings.target {
        Some(t) => {
            let pool: Vec<String> = settings
                .universe
                .iter()
                .filter(|s| *s != t)
                .cloned()
                .collect();
            Ok((
                choose(&mut rng, &pool, settings.sources_per_trial)?,
                t.clone(),
            ))
        }
        None => {
            let mut picked = choose(&mut rng, &settings.universe, settings.sources_per_trial + 1)?;
            let target = picked.pop().expect("at least two symbols drawn");
            Ok((picked, target))
        }
    }
}

pub(super) fn trial(
    settings: &PredictionSettings,
    params: &PredictionParams,
    data: &BTreeMap<String, BarSeries>,
    seed: u64,
    index: usize,
) -> TrialRow {
    let mut row = TrialRow {
        trial_index: index,
        source_group: String::new(),
        target_group: String::new(),
        sources: Vec::new(),
        targets: Vec::new(),
        level: None,
        outcome: Err(String::new()),
    };
    let outcome = select(settings, seed, index).and_then(|(sources, target)| {
        row.sources = sources.clone();
        row.targets = vec![target.clone()];
        let src = lookup(data, &sources)?;
        let tgt = lookup(data, &[target])?;
        run_prediction(&src, tgt[0], params)
    });
    row.outcome = outcome
        .map(|o| TrialMetrics::Prediction {
            transfer_risk: o.transfer_risk,
            direct: o.direct,
            transfer: o.transfer,
            regret: None,
        })
        .map_err(|e| e.to_string());
    row
}
