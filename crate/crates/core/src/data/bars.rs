use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};

use super::{DataError, Result};

/// Close and volume bars of one symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct BarSeries {
    symbol: String,
    timestamps: Vec<i64>,
    close: Vec<f64>,
    volume: Vec<f64>,
    session_dates: Vec<NaiveDate>,
}

impl BarSeries {
    pub fn new(
        symbol: impl Into<String>,
        timestamps: Vec<i64>,
        close: Vec<f64>,
        volume: Vec<f64>,
        session_dates: Vec<NaiveDate>,
    ) -> Result<Self> {
        let symbol = symbol.into();
        let bad = |message: String| DataError::InvalidSeries {
            symbol: symbol.clone(),
            message,
        };
        let n = timestamps.len();
        if close.len() != n || volume.len() != n || session_dates.len() != n {
            return Err(bad(format!(
                "column lengths differ: {n} timestamps, {} closes, {} volumes, {} sessions",
                close.len(),
                volume.len(),
                session_dates.len()
            )));
        }
        if let Some(i) = (1..n).find(|&i| timestamps[i] <= timestamps[i - 1]) {
            return Err(bad(format!(
                "timestamps not strictly increasing at bar {i}"
            )));
        }
        if let Some(i) = (1..n).find(|&i| session_dates[i] < session_dates[i - 1]) {
            return Err(bad(format!("session dates decrease at bar {i}")));
        }
        if let Some(c) = close.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(bad(format!("non-positive close {c}")));
        }
        if let Some(v) = volume.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(bad(format!("negative volume {v}")));
        }
        Ok(Self {
            symbol,
            timestamps,
            close,
            volume,
            session_dates,
        })
    }

    /// Daily bars: one per session, stamped at midnight UTC of each date.
    pub fn daily(
        symbol: impl Into<String>,
        dates: Vec<NaiveDate>,
        close: Vec<f64>,
        volume: Vec<f64>,
    ) -> Result<Self> {
        let ts = dates
            .iter()
            .map(|d| {
                d.and_hms_opt(0, 0, 0)
                    .expect("midnight")
                    .and_utc()
                    .timestamp()
            })
            .collect();
        Self::new(symbol, ts, close, volume, dates)
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn close(&self) -> &[f64] {
        &self.close
    }

    pub fn volume(&self) -> &[f64] {
        &self.volume
    }

    pub fn session_dates(&self) -> &[NaiveDate] {
        &self.session_dates
    }

    /// Bars whose index satisfies `keep`, in order.
    pub(crate) fn filter(&self, keep: impl Fn(usize) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        Self {
            symbol: self.symbol.clone(),
            timestamps: idx.iter().map(|&i| self.timestamps[i]).collect(),
            close: idx.iter().map(|&i| self.close[i]).collect(),
            volume: idx.iter().map(|&i| self.volume[i]).collect(),
            session_dates: idx.iter().map(|&i| self.session_dates[i]).collect(),
        }
    }
}

const HEADER: [&str; 4] = ["timestamp", "symbol", "close", "volume"];

/// Parses epoch seconds, RFC 3339, `YYYY-MM-DDTHH:MM:SS` (UTC) or a bare date
/// (midnight UTC).
fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok().map(|d| {
        d.and_hms_opt(0, 0, 0)
            .expect("midnight")
            .and_utc()
            .timestamp()
    })
}

/// Parses a date or timestamp used as a split boundary.
pub fn parse_time_bound(s: &str) -> Result<i64> {
    parse_timestamp(s).ok_or_else(|| DataError::Parse {
        line: 0,
        message: format!("cannot parse time '{s}'"),
    })
}

fn utc_date(ts: i64) -> Option<NaiveDate> {
    DateTime::<Utc>::from_timestamp(ts, 0).map(|d| d.date_naive())
}

/// `YYYY-MM-DDTHH:MM:SSZ`.
pub fn format_timestamp(ts: i64) -> String {
    match DateTime::<Utc>::from_timestamp(ts, 0) {
        Some(d) => d.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        None => ts.to_string(),
    }
}

struct Row {
    ts: i64,
    close: f64,
    volume: f64,
    session: NaiveDate,
    line: u64,
}

/// Reads a bar CSV with header `timestamp,symbol,close,volume` and an
/// optional trailing `session_date` column. Returns one series per symbol,
/// ordered by symbol, each sorted by time.
pub fn parse_bars<R: Read>(source: R) -> Result<Vec<BarSeries>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = reader.headers()?.clone();
    let names: Vec<&str> = header.iter().collect();
    let has_session = match names.as_slice() {
        [a, b, c, d] if [*a, *b, *c, *d] == HEADER => false,
        [a, b, c, d, "session_date"] if [*a, *b, *c, *d] == HEADER => true,
        _ => {
            return Err(DataError::Parse {
                line: 1,
                message: format!(
                    "header must be 'timestamp,symbol,close,volume[,session_date]', got '{}'",
                    names.join(",")
                ),
            })
        }
    };

    let mut by_symbol: BTreeMap<String, Vec<Row>> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let parse_err = |message: String| DataError::Parse { line, message };
        let field = |i: usize| record.get(i).unwrap_or("");
        let ts = parse_timestamp(field(0))
            .ok_or_else(|| parse_err(format!("bad timestamp '{}'", field(0))))?;
        let symbol = field(1).to_string();
        if symbol.is_empty() {
            return Err(parse_err("empty symbol".into()));
        }
        let close: f64 = field(2)
            .parse()
            .map_err(|_| parse_err(format!("bad close '{}'", field(2))))?;
        if !(close > 0.0 && close.is_finite()) {
            return Err(DataError::NonPositivePrice { line, value: close });
        }
        let volume: f64 = field(3)
            .parse()
            .map_err(|_| parse_err(format!("bad volume '{}'", field(3))))?;
        if !(volume >= 0.0 && volume.is_finite()) {
            return Err(DataError::NegativeVolume {
                line,
                value: volume,
            });
        }
        let session = if has_session && !field(4).is_empty() {
            NaiveDate::parse_from_str(field(4), "%Y-%m-%d")
                .map_err(|_| parse_err(format!("bad session_date '{}'", field(4))))?
        } else {
            utc_date(ts).ok_or_else(|| parse_err(format!("timestamp {ts} out of range")))?
        };
        by_symbol.entry(symbol).or_default().push(Row {
            ts,
            close,
            volume,
            session,
            line,
        });
    }

    by_symbol
        .into_iter()
        .map(|(symbol, mut rows)| {
            rows.sort_by_key(|r| r.ts);
            if let Some(w) = rows.windows(2).find(|w| w[0].ts == w[1].ts) {
                return Err(DataError::NonMonotoneTimestamps {
                    symbol,
                    line: w[0].line.max(w[1].line),
                });
            }
            BarSeries::new(
                symbol,
                rows.iter().map(|r| r.ts).collect(),
                rows.iter().map(|r| r.close).collect(),
                rows.iter().map(|r| r.volume).collect(),
                rows.iter().map(|r| r.session).collect(),
            )
        })
        .collect()
}

/// Writes series in the format read by [`parse_bars`], with session dates.
pub fn write_bars<W: Write>(series: &[BarSeries], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["timestamp", "symbol", "close", "volume", "session_date"])?;
    for s in series {
        for i in 0..s.len() {
            w.write_record([
                format_timestamp(s.timestamps[i]),
                s.symbol.clone(),
                format!("{}", s.close[i]),
                format!("{}", s.volume[i]),
                s.session_dates[i].format("%Y-%m-%d").to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
