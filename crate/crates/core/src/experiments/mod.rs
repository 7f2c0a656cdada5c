//! Seeded trial harness: random source selections, the full
//! pretrain → transfer → evaluate → risk pipeline per trial, and the
//! correlation summaries between transfer risk and realized performance.
//!
//! # Config file
//!
//! A TOML document; paths are relative to the file.
//!
//! ```toml
//! kind = "prediction"   # prediction | portfolio | synthetic-prediction | synthetic-portfolio
//! seed = 7
//! trials = 200
//! data_dir = "bars"     # every *.csv inside is read as a bar file
//! output_dir = "out"
//!
//! [prediction]
//! universe = ["AAA", "BBB", "CCC"]
//! target = "AAA"        # optional; otherwise the last sampled symbol
//! sources_per_trial = 10
//! lag = 5
//! order = 2
//! lambda_s = 1.0
//! lambda_t = 5.0
//! lambda_direct = 1.0
//! train_end = "2019-01-01"
//! test_end = "2020-01-01"   # optional
//!
//! [portfolio]
//! assets_per_trial = 10
//! same_assets = false   # reuse the target symbols on the source side
//! lambda = 0.2
//! intraday_overnight = false
//! source_train = { start = "2010-01-01", end = "2019-01-01" }
//! target_train = { start = "2018-01-01", end = "2019-01-01" }
//! target_test = { start = "2019-01-01", end = "2020-01-01" }
//! [[portfolio.sources]]
//! name = "US"
//! symbols = ["AAA", "BBB"]
//! frequency = "1d"
//! [[portfolio.targets]]
//! name = "UK"
//! symbols = ["XXX", "YYY"]
//! frequency = "1d"
//!
//! [synthetic]           # all keys optional, see SyntheticSettings
//! dim = 4
//! ```
//!
//! Portfolio trials run for every (source group, target group) pair,
//! `trials` times each. Synthetic kinds need neither `data_dir` nor
//! symbol lists.

mod config;
mod portfolio;
mod prediction;
mod summary;
mod synthetic;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::data::{parse_bars, BarSeries, DataError};
use crate::divergence::DivergenceError;
use crate::format::num;
use crate::gaussian::GaussianError;
use crate::portfolio::{PortfolioError, PortfolioRisk};
use crate::ridge::{MetricsReport, RidgeError};
use crate::signature::SignatureError;
use crate::spd::SpdError;

pub use config::{
    ExperimentConfig, ExperimentKind, PortfolioGroup, PortfolioSettings, PredictionSettings,
    SyntheticSettings, TimeWindow,
};
pub use portfolio::{run_portfolio, PortfolioOutcome, PortfolioPanels, PortfolioParams};
pub use prediction::{run_prediction, PredictionOutcome, PredictionParams};
pub use summary::{
    summarize, PortfolioSummary, PredictionSummary, Summary, TargetCorrelation, PREDICTION_METRICS,
};
pub use synthetic::{synthetic_portfolio_trial, synthetic_prediction_trial};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("series is constant, correlation undefined")]
    ConstantSeries,
    #[error("series lengths differ or are below 2: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} successful trials, got {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("symbol {0} not found in the data directory")]
    DataMissing(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{failed} of {total} trials failed")]
    TooManyFailures { failed: usize, total: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Ridge(#[from] RidgeError),
    #[error(transparent)]
    Signature(#[from] SignatureError),
    #[error(transparent)]
    Portfolio(#[from] PortfolioError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
    #[error(transparent)]
    Spd(#[from] SpdError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(ExperimentError::LengthMismatch(xs.len(), ys.len()));
    }
    crate::stats::pearson(xs, ys).ok_or(ExperimentError::ConstantSeries)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the RNG stream of one trial, a SplitMix64 hash of
/// `(seed, trial_index)`.
pub fn trial_seed(seed: u64, trial_index: usize) -> u64 {
    splitmix64(splitmix64(seed) ^ trial_index as u64)
}

/// `k` distinct items of `pool` in sampled order.
fn choose<R: Rng>(rng: &mut R, pool: &[String], k: usize) -> Result<Vec<String>> {
    if k > pool.len() {
        return Err(ExperimentError::Config(format!(
            "cannot draw {k} symbols from a pool of {}",
            pool.len()
        )));
    }
    Ok(sample(rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrialMetrics {
    Prediction {
        transfer_risk: f64,
        direct: MetricsReport,
        transfer: MetricsReport,
        /// Population regret, known only for synthetic tasks.
        regret: Option<f64>,
    },
    Portfolio {
        risk: PortfolioRisk,
        direct_sharpe: f64,
        transfer_sharpe: f64,
    },
}

impl TrialMetrics {
    pub fn transfer_risk(&self) -> f64 {
        match self {
            TrialMetrics::Prediction { transfer_risk, .. } => *transfer_risk,
            TrialMetrics::Portfolio { risk, .. } => risk.total,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub trial_index: usize,
    pub source_group: String,
    pub target_group: String,
    pub sources: Vec<String>,
    pub targets: Vec<String>,
    /// Distance level of the source family (synthetic kinds).
    pub level: Option<f64>,
    /// Metrics, or the error message of a failed trial.
    pub outcome: std::result::Result<TrialMetrics, String>,
}

impl TrialRow {
    pub fn succeeded(&self) -> bool {
        self.outcome.is_ok()
    }
}

/// Reads every `*.csv` under `dir`, keyed by symbol.
pub fn load_data_dir(dir: &Path) -> Result<BTreeMap<String, BarSeries>> {
    let io = |source| ExperimentError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()).map_err(io))
        .collect::<Result<_>>()?;
    files.retain(|p| p.extension().is_some_and(|e| e == "csv"));
    files.sort();
    let mut out = BTreeMap::new();
    for path in files {
        let file = fs::File::open(&path).map_err(|source| ExperimentError::Io {
            path: path.clone(),
            source,
        })?;
        for s in parse_bars(file)? {
            let symbol = s.symbol().to_string();
            if out.insert(symbol.clone(), s).is_some() {
                return Err(ExperimentError::Config(format!(
                    "symbol {symbol} appears in more than one file"
                )));
            }
        }
    }
    Ok(out)
}

fn lookup<'a>(
    data: &'a BTreeMap<String, BarSeries>,
    symbols: &[String],
) -> Result<Vec<&'a BarSeries>> {
    symbols
        .iter()
        .map(|s| {
            data.get(s)
                .ok_or_else(|| ExperimentError::DataMissing(s.clone()))
        })
        .collect()
}

/// Runs every trial of `config` on the current rayon pool.
///
/// Rows come back ordered by `trial_index`; each trial draws only from its
/// own stream, so the result does not depend on the number of threads.
pub fn run_trials(
    config: &ExperimentConfig,
    data: &BTreeMap<String, BarSeries>,
) -> Result<Vec<TrialRow>> {
    config.validate()?;
    for sym in config.referenced_symbols() {
        if !data.contains_key(&sym) {
            return Err(ExperimentError::DataMissing(sym));
        }
    }
    let rows = match config.kind {
        ExperimentKind::Prediction => {
            let settings = config.prediction_settings()?;
            let params = settings.params()?;
            (0..config.trials)
                .into_par_iter()
                .map(|i| prediction::trial(settings, &params, data, config.seed, i))
                .collect()
        }
        ExperimentKind::Portfolio => {
            let settings = config.portfolio_settings()?;
            let windows = settings.parsed_windows()?;
            let pairs: Vec<(usize, usize)> = (0..settings.sources.len())
                .flat_map(|s| (0..settings.targets.len()).map(move |t| (s, t)))
                .collect();
            let jobs: Vec<(usize, usize, usize)> = pairs
                .iter()
                .flat_map(|&(s, t)| (0..config.trials).map(move |k| (s, t, k)))
                .collect();
            jobs.into_par_iter()
                .enumerate()
                .map(|(i, (s, t, _))| {
                    portfolio::trial(settings, &windows, s, t, data, config.seed, i)
                })
                .collect()
        }
        ExperimentKind::SyntheticPrediction => {
            let settings = config.synthetic_settings();
            (0..config.trials)
                .into_par_iter()
                .map(|i| synthetic_prediction_trial(&settings, config.seed, i))
                .collect()
        }
        ExperimentKind::SyntheticPortfolio => {
            let settings = config.synthetic_settings();
            (0..config.trials)
                .into_par_iter()
                .map(|i| synthetic_portfolio_trial(&settings, config.seed, i))
                .collect()
        }
    };
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<TrialRow>,
    pub summary: Summary,
    pub output_dir: PathBuf,
}

impl ExperimentReport {
    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|r| !r.succeeded()).count()
    }
}

/// Loads data, runs the trials, and writes `trials.csv`, `summary.csv` and
/// `summary.json` under the configured output directory.
///
/// `trials.csv` is written even when summarizing fails. More than half the
/// trials failing is an error, reported after whatever files could be
/// written.
pub fn run_experiment(config: &ExperimentConfig, base_dir: &Path) -> Result<ExperimentReport> {
    config.validate()?;
    let data = match config.kind {
        ExperimentKind::Prediction | ExperimentKind::Portfolio => {
            let dir = config
                .data_dir
                .as_ref()
                .ok_or_else(|| ExperimentError::Config("data_dir is required".into()))?;
            load_data_dir(&base_dir.join(dir))?
        }
        _ => BTreeMap::new(),
    };
    let rows = run_trials(config, &data)?;
    let out = base_dir.join(&config.output_dir);
    fs::create_dir_all(&out).map_err(|source| ExperimentError::Io {
        path: out.clone(),
        source,
    })?;
    write_file(&out.join("trials.csv"), |w| {
        write_trials_csv(config.kind, &rows, w)
    })?;
    let failed = rows.iter().filter(|r| !r.succeeded()).count();
    let too_many = ExperimentError::TooManyFailures {
        failed,
        total: rows.len(),
    };
    let summary = match summarize(config.kind, &rows) {
        Ok(s) => s,
        Err(_) if 2 * failed > rows.len() => return Err(too_many),
        Err(e) => return Err(e),
    };
    write_file(&out.join("summary.csv"), |w| summary.write_csv(w))?;
    write_file(&out.join("summary.json"), |w| summary.write_json(w))?;
    if 2 * failed > rows.len() {
        return Err(too_many);
    }
    Ok(ExperimentReport {
        rows,
        summary,
        output_dir: out,
    })
}

fn write_file(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    fs::write(path, buf).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn trial_header(kind: ExperimentKind) -> Vec<&'static str> {
    let metrics_pred = [
        "transfer_risk",
        "direct_mse",
        "direct_r2",
        "direct_corr",
        "transfer_mse",
        "transfer_r2",
        "transfer_corr",
    ];
    let metrics_port = [
        "transfer_risk",
        "r1",
        "r2",
        "direct_sharpe",
        "transfer_sharpe",
    ];
    let mut h = vec!["trial_index"];
    match kind {
        ExperimentKind::Prediction => {
            h.extend(["target", "sources", "status"]);
            h.extend(metrics_pred);
        }
        ExperimentKind::SyntheticPrediction => {
            h.extend(["level", "status"]);
            h.extend(metrics_pred);
            h.push("regret");
        }
        ExperimentKind::Portfolio => {
            h.extend([
                "source_group",
                "target_group",
                "sources",
                "targets",
                "status",
            ]);
            h.extend(metrics_port);
        }
        ExperimentKind::SyntheticPortfolio => {
            h.extend(["level", "status"]);
            h.extend(metrics_port);
        }
    }
    h.push("error");
    h
}

fn metric_fields(m: Option<&TrialMetrics>, kind: ExperimentKind) -> Vec<String> {
    let blank = |n: usize| vec![String::new(); n];
    match (kind, m) {
        (ExperimentKind::Prediction | ExperimentKind::SyntheticPrediction, None) => {
            blank(if kind == ExperimentKind::Prediction {
                7
            } else {
                8
            })
        }
        (ExperimentKind::Portfolio | ExperimentKind::SyntheticPortfolio, None) => blank(5),
        (
            _,
            Some(TrialMetrics::Prediction {
                transfer_risk,
                direct,
                transfer,
                regret,
            }),
        ) => {
            let mut v: Vec<String> = [
                *transfer_risk,
                direct.mse,
                direct.r2,
                direct.corr,
                transfer.mse,
                transfer.r2,
                transfer.corr,
            ]
            .iter()
            .map(|x| num(*x))
            .collect();
            if kind == ExperimentKind::SyntheticPrediction {
                v.push(regret.map(num).unwrap_or_default());
            }
            v
        }
        (
            _,
            Some(TrialMetrics::Portfolio {
                risk,
                direct_sharpe,
                transfer_sharpe,
            }),
        ) => [
            risk.total,
            risk.r1,
            risk.r2,
            *direct_sharpe,
            *transfer_sharpe,
        ]
        .iter()
        .map(|x| num(*x))
        .collect(),
    }
}

/// One line per trial, ordered by `trial_index`; symbol lists are joined
/// with `;`.
pub fn write_trials_csv<W: Write>(kind: ExperimentKind, rows: &[TrialRow], sink: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    w.write_record(trial_header(kind))?;
    for r in rows {
        let mut rec = vec![r.trial_index.to_string()];
        match kind {
            ExperimentKind::Prediction => {
                rec.push(r.targets.join(";"));
                rec.push(r.sources.join(";"));
            }
            ExperimentKind::Portfolio => {
                rec.push(r.source_group.clone());
                rec.push(r.target_group.clone());
                rec.push(r.sources.join(";"));
                rec.push(r.targets.join(";"));
            }
            ExperimentKind::SyntheticPrediction | ExperimentKind::SyntheticPortfolio => {
                rec.push(r.level.map(num).unwrap_or_default());
            }
        }
        rec.push(if r.succeeded() { "ok" } else { "failed" }.into());
        rec.extend(metric_fields(r.outcome.as_ref().ok(), kind));
        rec.push(r.outcome.as_ref().err().cloned().unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| ExperimentError::Io {
        path: PathBuf::from("trials.csv"),
        source,
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn pearson_examples() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0);
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!(matches!(
            pearson(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]),
            Err(ExperimentError::ConstantSeries)
        ));
        assert!(matches!(
            pearson(&[1.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(ExperimentError::LengthMismatch(2, 3))
        ));
    }

    #[test]
    fn trial_seeds_are_distinct_and_stable() {
        let seeds: std::collections::BTreeSet<u64> = (0..1000).map(|i| trial_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_eq!(trial_seed(42, 3), trial_seed(42, 3));
        assert_ne!(trial_seed(42, 3), trial_seed(43, 3));
    }

    #[test]
    fn choose_without_replacement() {
        let pool: Vec<String> = (0..20).map(|i| format!("S{i}")).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let picked = choose(&mut rng, &pool, 11).unwrap();
        let set: std::collections::BTreeSet<_> = picked.iter().collect();
        assert_eq!(set.len(), 11);
        assert!(choose(&mut rng, &pool, 21).is_err());
    }
}
