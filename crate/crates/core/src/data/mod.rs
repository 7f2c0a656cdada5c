//! Market bars, log returns, resampling and synthetic Gaussian draws.

mod bars;
mod panel;
mod synth;

use thiserror::Error;

use crate::spd::SpdError;

pub use bars::{format_timestamp, parse_bars, parse_time_bound, write_bars, BarSeries};
pub use panel::{
    align_and_split, build_panel, log_returns, resample, resample_returns, Frequency, Resampled,
    ReturnPanel,
};
pub use synth::{synth_gaussian_samples, synth_task_samples};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: timestamp for {symbol} repeats an earlier row")]
    NonMonotoneTimestamps { symbol: String, line: u64 },
    #[error("line {line}: close must be positive, got {value}")]
    NonPositivePrice { line: u64, value: f64 },
    #[error("line {line}: volume must be nonnegative, got {value}")]
    NegativeVolume { line: u64, value: f64 },
    #[error("series {symbol}: {message}")]
    InvalidSeries { symbol: String, message: String },
    #[error("need at least {needed} observations, got {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("bars of {symbol} are coarser ({base_seconds}s) than the requested {frequency}")]
    FrequencyTooFine {
        symbol: String,
        base_seconds: i64,
        frequency: Frequency,
    },
    #[error("resampling {symbol} at {frequency} leaves no returns")]
    EmptyResult {
        symbol: String,
        frequency: Frequency,
    },
    #[error("series share no timestamps")]
    NoOverlap,
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("unknown frequency '{0}' (expected one of 1m, 5m, 10m, 30m, 65m, 130m, 1d)")]
    UnknownFrequency(String),
    #[error("sample count must be at least 1")]
    EmptySample,
    #[error(transparent)]
    NotSpd(#[from] SpdError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;
