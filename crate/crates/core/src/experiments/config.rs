use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{ExperimentError, Result};
use crate::data::{parse_time_bound, Frequency};
use crate::portfolio::OptimizerOptions;

use super::portfolio::Windows;
use super::prediction::PredictionParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Prediction,
    Portfolio,
    SyntheticPrediction,
    SyntheticPortfolio,
}

impl ExperimentKind {
    pub fn label(self) -> &'static str {
        match self {
            ExperimentKind::Prediction => "prediction",
            ExperimentKind::Portfolio => "portfolio",
            ExperimentKind::SyntheticPrediction => "synthetic-prediction",
            ExperimentKind::SyntheticPortfolio => "synthetic-portfolio",
        }
    }

    pub fn is_prediction(self) -> bool {
        matches!(
            self,
            ExperimentKind::Prediction | ExperimentKind::SyntheticPrediction
        )
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub prediction: Option<PredictionSettings>,
    #[serde(default)]
    pub portfolio: Option<PortfolioSettings>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSettings>,
}

fn default_sources() -> usize {
    10
}
fn default_lag() -> usize {
    5
}
fn default_order() -> usize {
    2
}
fn default_lambda_s() -> f64 {
    1.0
}
fn default_lambda_t() -> f64 {
    5.0
}
fn default_lambda_direct() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionSettings {
    pub universe: Vec<String>,
    #[serde(default)]
    pub target: Option<String>,
    #[serde(default = "default_sources")]
    pub sources_per_trial: usize,
    #[serde(default = "default_lag")]
    pub lag: usize,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_lambda_s")]
    pub lambda_s: f64,
    #[serde(default = "default_lambda_t")]
    pub lambda_t: f64,
    #[serde(default = "default_lambda_direct")]
    pub lambda_direct: f64,
    pub train_end: String,
    #[serde(default)]
    pub test_end: Option<String>,
}

impl PredictionSettings {
    pub fn params(&self) -> Result<PredictionParams> {
        Ok(PredictionParams {
            lag: self.lag,
            order: self.order,
            lambda_s: self.lambda_s,
            lambda_t: self.lambda_t,
            lambda_direct: self.lambda_direct,
            train_end: parse_time_bound(&self.train_end)?,
            test_end: self.test_end.as_deref().map(parse_time_bound).transpose()?,
        })
    }
}

/// `[start, end)`; a missing bound is open.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeWindow {
    #[serde(default)]
    pub start: Option<String>,
    #[serde(default)]
    pub end: Option<String>,
}

impl TimeWindow {
    pub fn bounds(&self) -> Result<(Option<i64>, Option<i64>)> {
        let p = |s: &Option<String>| s.as_deref().map(parse_time_bound).transpose();
        Ok((p(&self.start)?, p(&self.end)?))
    }
}

fn default_frequency() -> Frequency {
    Frequency::D1
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortfolioGroup {
    pub name: String,
    pub symbols: Vec<String>,
    #[serde(default = "default_frequency")]
    pub frequency: Frequency,
}

fn default_assets() -> usize {
    10
}
fn default_lambda() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortfolioSettings {
    pub sources: Vec<PortfolioGroup>,
    pub targets: Vec<PortfolioGroup>,
    #[serde(default = "default_assets")]
    pub assets_per_trial: usize,
    /// Source side reuses the target symbols (cross-frequency transfer).
    #[serde(default)]
    pub same_assets: bool,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Keep returns spanning sessions at intraday frequencies.
    #[serde(default)]
    pub intraday_overnight: bool,
    #[serde(default)]
    pub source_train: TimeWindow,
    #[serde(default)]
    pub target_train: TimeWindow,
    #[serde(default)]
    pub target_test: TimeWindow,
    /// Random starts of the Sharpe optimizer.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn default_restarts() -> usize {
    OptimizerOptions::default().restarts
}

impl PortfolioSettings {
    pub(crate) fn parsed_windows(&self) -> Result<Windows> {
        Ok(Windows {
            source_train: self.source_train.bounds()?,
            target_train: self.target_train.bounds()?,
            target_test: self.target_test.bounds()?,
        })
    }

    pub fn overnight(&self, f: Frequency) -> bool {
        f == Frequency::D1 || self.intraday_overnight
    }
}

/// Parameters of the built-in synthetic suites. Every field has a default.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSettings {
    /// Features (prediction) or assets (portfolio).
    pub dim: usize,
    /// Upper end of the uniform distance level `u`.
    pub max_level: f64,
    pub n_source: usize,
    pub n_target_train: usize,
    pub n_target_test: usize,
    pub lambda_s: f64,
    pub lambda_t: f64,
    pub lambda_direct: f64,
    /// Portfolio penalty.
    pub lambda: f64,
    pub restarts: usize,
}

impl Default for SyntheticSettings {
    fn default() -> Self {
        Self {
            dim: 4,
            max_level: 1.0,
            n_source: 50_000,
            n_target_train: 60,
            n_target_test: 5000,
            lambda_s: 0.01,
            lambda_t: 5.0,
            lambda_direct: 1.0,
            lambda: 0.2,
            restarts: 4,
        }
    }
}

impl ExperimentConfig {
    /// Parses a config document.
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    /// Reads a config file; returns it with the directory that relative
    /// paths resolve against.
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((Self::from_toml(&text)?, base))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        match self.kind {
            ExperimentKind::Prediction => {
                let p = self.prediction_settings()?;
                if p.sources_per_trial == 0 {
                    return bad("sources_per_trial must be at least 1".into());
                }
                let needed = p.sources_per_trial + usize::from(p.target.is_none());
                let pool = p
                    .universe
                    .iter()
                    .filter(|s| Some(*s) != p.target.as_ref())
                    .count();
                if pool < needed {
                    return bad(format!(
                        "universe has {pool} eligible symbols, trials need {needed}"
                    ));
                }
                if unique(&p.universe) != p.universe.len() {
                    return bad("universe lists a symbol twice".into());
                }
                for l in [p.lambda_s, p.lambda_t, p.lambda_direct] {
                    if !(l >= 0.0 && l.is_finite()) {
                        return bad(format!("lambda must be finite and nonnegative, got {l}"));
                    }
                }
                p.params()?;
            }
            ExperimentKind::Portfolio => {
                let p = self.portfolio_settings()?;
                if p.sources.is_empty() || p.targets.is_empty() {
                    return bad("portfolio needs at least one source and one target group".into());
                }
                if p.assets_per_trial < 2 {
                    return bad("assets_per_trial must be at least 2".into());
                }
                if !(p.lambda >= 0.0 && p.lambda.is_finite()) {
                    return bad(format!(
                        "lambda must be finite and nonnegative, got {}",
                        p.lambda
                    ));
                }
                for g in p.sources.iter().chain(&p.targets) {
                    let needed = if p.same_assets && p.sources.contains(g) {
                        0
                    } else {
                        p.assets_per_trial
                    };
                    if g.symbols.len() < needed || unique(&g.symbols) != g.symbols.len() {
                        return bad(format!(
                            "group {} needs at least {needed} distinct symbols",
                            g.name
                        ));
                    }
                }
                p.parsed_windows()?;
            }
            ExperimentKind::SyntheticPrediction | ExperimentKind::SyntheticPortfolio => {
                let s = self.synthetic_settings();
                if s.dim < 2
                    || s.n_source < 2
                    || s.n_target_train < 2
                    || s.n_target_test < 2
                    || !(s.max_level > 0.0 && s.max_level <= 1.0)
                {
                    return bad(format!("invalid synthetic settings {s:?}"));
                }
            }
        }
        Ok(())
    }

    pub fn prediction_settings(&self) -> Result<&PredictionSettings> {
        self.prediction
            .as_ref()
            .ok_or_else(|| ExperimentError::Config("missing [prediction] section".into()))
    }

    pub fn portfolio_settings(&self) -> Result<&PortfolioSettings> {
        self.portfolio
            .as_ref()
            .ok_or_else(|| ExperimentError::Config("missing [portfolio] section".into()))
    }

    pub fn synthetic_settings(&self) -> SyntheticSettings {
        self.synthetic.clone().unwrap_or_default()
    }

    /// Every symbol the trials may touch, sorted.
    pub fn referenced_symbols(&self) -> Vec<String> {
        let mut out = BTreeSet::new();
        match self.kind {
            ExperimentKind::Prediction => {
                if let Some(p) = &self.prediction {
                    out.extend(p.universe.iter().cloned());
                    out.extend(p.target.iter().cloned());
                }
            }
            ExperimentKind::Portfolio => {
                if let Some(p) = &self.portfolio {
                    for g in p.sources.iter().chain(&p.targets) {
                        out.extend(g.symbols.iter().cloned());
                    }
                }
            }
            _ => {}
        }
        out.into_iter().collect()
    }
}

fn unique(xs: &[String]) -> usize {
    xs.iter().collect::<BTreeSet<_>>().len()
}
