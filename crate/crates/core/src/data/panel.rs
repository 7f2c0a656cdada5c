use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::bars::{format_timestamp, BarSeries};
use super::{DataError, Result};
use crate::format::num;
use crate::spd::Matrix;

/// Bar frequencies of the cross-frequency experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Frequency {
    M1,
    M5,
    M10,
    M30,
    M65,
    M130,
    D1,
}

impl Frequency {
    pub const ALL: [Frequency; 7] = [
        Frequency::M1,
        Frequency::M5,
        Frequency::M10,
        Frequency::M30,
        Frequency::M65,
        Frequency::M130,
        Frequency::D1,
    ];

    /// Bar length in minutes; `None` for daily.
    pub fn minutes(self) -> Option<i64> {
        match self {
            Frequency::M1 => Some(1),
            Frequency::M5 => Some(5),
            Frequency::M10 => Some(10),
            Frequency::M30 => Some(30),
            Frequency::M65 => Some(65),
            Frequency::M130 => Some(130),
            Frequency::D1 => None,
        }
    }

    /// 252 trading days of 390 minutes.
    pub fn annualization_factor(self) -> f64 {
        match self.minutes() {
            Some(m) => 252.0 * 390.0 / m as f64,
            None => 252.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Frequency::M1 => "1m",
            Frequency::M5 => "5m",
            Frequency::M10 => "10m",
            Frequency::M30 => "30m",
            Frequency::M65 => "65m",
            Frequency::M130 => "130m",
            Frequency::D1 => "1d",
        }
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Frequency {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self> {
        Frequency::ALL
            .into_iter()
            .find(|f| f.label() == s.trim())
            .ok_or_else(|| DataError::UnknownFrequency(s.to_string()))
    }
}

impl TryFrom<String> for Frequency {
    type Error = DataError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Frequency> for String {
    fn from(f: Frequency) -> String {
        f.label().to_string()
    }
}

/// `r_t = ln c_{t+1} − ln c_t`.
pub fn log_returns(series: &BarSeries) -> Result<Vec<f64>> {
    if series.len() < 2 {
        return Err(DataError::InsufficientData {
            needed: 2,
            found: series.len(),
        });
    }
    Ok(series
        .close()
        .windows(2)
        .map(|w| w[1].ln() - w[0].ln())
        .collect())
}

/// Log returns on a coarser grid, stamped by the bar that closes each return.
#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub timestamps: Vec<i64>,
    pub returns: Vec<f64>,
}

/// Smallest spacing between consecutive bars of the same session, if any.
fn intraday_spacing(series: &BarSeries) -> Option<i64> {
    let (ts, sd) = (series.timestamps(), series.session_dates());
    (1..series.len())
        .filter(|&i| sd[i] == sd[i - 1])
        .map(|i| ts[i] - ts[i - 1])
        .min()
}

/// Samples the last bar of each bucket and takes log returns between
/// consecutive samples.
///
/// Intraday buckets are `frequency` wide and anchored at the first bar of
/// each session; `1d` keeps the last bar of each session. Without
/// `include_overnight`, returns whose endpoints lie in different sessions
/// are dropped.
pub fn resample(
    series: &BarSeries,
    frequency: Frequency,
    include_overnight: bool,
) -> Result<Resampled> {
    if series.len() < 2 {
        return Err(DataError::InsufficientData {
            needed: 2,
            found: series.len(),
        });
    }
    let (ts, sd) = (series.timestamps(), series.session_dates());
    if let Some(minutes) = frequency.minutes() {
        let width = minutes * 60;
        match intraday_spacing(series) {
            Some(base) if base <= width => {}
            other => {
                return Err(DataError::FrequencyTooFine {
                    symbol: series.symbol().to_string(),
                    base_seconds: other.unwrap_or(86_400),
                    frequency,
                })
            }
        }
    }

    let bucket = |i: usize, anchor: i64| match frequency.minutes() {
        Some(m) => (ts[i] - anchor).div_euclid(m * 60),
        None => 0,
    };
    let mut picks: Vec<usize> = Vec::new();
    let mut anchor = ts[0];
    for i in 0..series.len() {
        if i > 0 && sd[i] != sd[i - 1] {
            anchor = ts[i];
        }
        let last_of_bucket = i + 1 == series.len()
            || sd[i + 1] != sd[i]
            || bucket(i + 1, anchor) != bucket(i, anchor);
        if last_of_bucket {
            picks.push(i);
        }
    }

    let close = series.close();
    let mut out = Resampled {
        timestamps: Vec::new(),
        returns: Vec::new(),
    };
    for w in picks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if !include_overnight && sd[a] != sd[b] {
            continue;
        }
        out.timestamps.push(ts[b]);
        out.returns.push(close[b].ln() - close[a].ln());
    }
    if out.returns.is_empty() {
        return Err(DataError::EmptyResult {
            symbol: series.symbol().to_string(),
            frequency,
        });
    }
    Ok(out)
}

pub fn resample_returns(
    series: &BarSeries,
    frequency: Frequency,
    include_overnight: bool,
) -> Result<Vec<f64>> {
    Ok(resample(series, frequency, include_overnight)?.returns)
}

/// Aligned log returns of several assets, `assets × time`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    symbols: Vec<String>,
    timestamps: Vec<i64>,
    returns: Matrix,
    frequency: Frequency,
    overnight_included: bool,
}

impl ReturnPanel {
    pub fn new(
        symbols: Vec<String>,
        timestamps: Vec<i64>,
        returns: Matrix,
        frequency: Frequency,
        overnight_included: bool,
    ) -> Result<Self> {
        if returns.rows() != symbols.len() || returns.cols() != timestamps.len() {
            return Err(DataError::InvalidSeries {
                symbol: symbols.join(","),
                message: format!(
                    "panel is {}x{} but has {} symbols and {} timestamps",
                    returns.rows(),
                    returns.cols(),
                    symbols.len(),
                    timestamps.len()
                ),
            });
        }
        if !returns.is_finite() {
            return Err(DataError::InvalidSeries {
                symbol: symbols.join(","),
                message: "non-finite return".into(),
            });
        }
        Ok(Self {
            symbols,
            timestamps,
            returns,
            frequency,
            overnight_included,
        })
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn returns(&self) -> &Matrix {
        &self.returns
    }

    pub fn asset(&self, i: usize) -> &[f64] {
        self.returns.row(i)
    }

    pub fn frequency(&self) -> Frequency {
        self.frequency
    }

    pub fn overnight_included(&self) -> bool {
        self.overnight_included
    }

    pub fn n_assets(&self) -> usize {
        self.symbols.len()
    }

    pub fn n_periods(&self) -> usize {
        self.timestamps.len()
    }

    /// Writes `timestamp,<symbol>…` rows.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec!["timestamp".to_string()];
        header.extend(self.symbols.iter().cloned());
        w.write_record(&header)?;
        for (t, &ts) in self.timestamps.iter().enumerate() {
            let mut row = vec![format_timestamp(ts)];
            row.extend((0..self.n_assets()).map(|i| num(self.returns[(i, t)])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Returns stamped in `[start, end)`; a missing bound is unbounded.
    pub fn window(&self, start: Option<i64>, end: Option<i64>) -> Self {
        let keep = |t: i64| start.is_none_or(|s| t >= s) && end.is_none_or(|e| t < e);
        let idx: Vec<usize> = (0..self.n_periods())
            .filter(|&t| keep(self.timestamps[t]))
            .collect();
        Self {
            symbols: self.symbols.clone(),
            timestamps: idx.iter().map(|&t| self.timestamps[t]).collect(),
            returns: Matrix::from_fn(self.n_assets(), idx.len(), |i, j| self.returns[(i, idx[j])]),
            frequency: self.frequency,
            overnight_included: self.overnight_included,
        }
    }
}

/// Inner-joins bars on timestamps and resamples every series onto the
/// shared return grid.
pub fn build_panel(
    series: &[BarSeries],
    frequency: Frequency,
    include_overnight: bool,
) -> Result<ReturnPanel> {
    let Some(first) = series.first() else {
        return Err(DataError::NoOverlap);
    };
    let mut common: BTreeSet<i64> = first.timestamps().iter().copied().collect();
    for s in &series[1..] {
        let other: BTreeSet<i64> = s.timestamps().iter().copied().collect();
        common = common.intersection(&other).copied().collect();
    }
    if common.is_empty() {
        return Err(DataError::NoOverlap);
    }
    let resampled: Vec<Resampled> = series
        .iter()
        .map(|s| {
            let joined = s.filter(|i| common.contains(&s.timestamps()[i]));
            resample(&joined, frequency, include_overnight)
        })
        .collect::<Result<_>>()?;

    // Session labels can differ between files; keep only shared return stamps.
    let mut stamps: BTreeSet<i64> = resampled[0].timestamps.iter().copied().collect();
    for r in &resampled[1..] {
        let other: BTreeSet<i64> = r.timestamps.iter().copied().collect();
        stamps = stamps.intersection(&other).copied().collect();
    }
    if stamps.is_empty() {
        return Err(DataError::NoOverlap);
    }
    let timestamps: Vec<i64> = stamps.into_iter().collect();
    let rows: Vec<Vec<f64>> = resampled
        .iter()
        .map(|r| {
            let mut k = 0;
            timestamps
                .iter()
                .map(|t| {
                    while r.timestamps[k] != *t {
                        k += 1;
                    }
                    r.returns[k]
                })
                .collect()
        })
        .collect();
    ReturnPanel::new(
        series.iter().map(|s| s.symbol().to_string()).collect(),
        timestamps,
        Matrix::from_rows(&rows)?,
        frequency,
        include_overnight,
    )
}

/// Inner-joins bars on timestamps, resamples, and splits returns at
/// `train_end`: returns stamped before it train, the rest (before
/// `test_end` when given) test.
pub fn align_and_split(
    series: &[BarSeries],
    frequency: Frequency,
    include_overnight: bool,
    train_end: i64,
    test_end: Option<i64>,
) -> Result<(ReturnPanel, ReturnPanel)> {
    let panel = build_panel(series, frequency, include_overnight)?;
    let train = panel.window(None, Some(train_end));
    let test = panel.window(Some(train_end), test_end);
    if train.n_periods() == 0 {
        return Err(DataError::EmptySplit("train"));
    }
    if test.n_periods() == 0 {
        return Err(DataError::EmptySplit("test"));
    }
    Ok((train, test))
}
