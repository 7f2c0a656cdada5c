use std::io::Write;

use serde::Serialize;

use super::config::ExperimentKind;
use super::{pearson, ExperimentError, Result, TrialMetrics, TrialRow};
use crate::format::{num, round12};

/// Columns of the prediction correlation matrix; `R²` and `Corr` are negated
/// so that lower is better for every metric.
pub const PREDICTION_METRICS: [&str; 4] = ["MSE", "-R2", "-Corr", "TransferRisk"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionSummary {
    pub kind: &'static str,
    pub trials: usize,
    pub failed: usize,
    pub metrics: [&'static str; 4],
    /// Pearson matrix over the transferred model's test metrics.
    pub correlation: [[f64; 4]; 4],
    /// `pearson(transfer_risk, regret)`, synthetic suites only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub risk_regret_correlation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetCorrelation {
    pub target: String,
    /// `pearson(risk, transfer Sharpe)`; `None` when undefined.
    pub correlation: Option<f64>,
    /// `source_groups` when computed over per-source-group averages,
    /// `trials` when over individual trials.
    pub basis: &'static str,
    pub trials: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortfolioSummary {
    pub kind: &'static str,
    pub trials: usize,
    pub failed: usize,
    /// `pearson(risk, transfer Sharpe)` over every successful trial.
    pub risk_sharpe_correlation: Option<f64>,
    pub targets: Vec<TargetCorrelation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Summary {
    Prediction(PredictionSummary),
    Portfolio(PortfolioSummary),
}

fn prediction_columns(rows: &[&TrialRow]) -> ([Vec<f64>; 4], Vec<f64>) {
    let mut cols: [Vec<f64>; 4] = Default::default();
    let mut regret = Vec::new();
    for r in rows {
        if let Ok(TrialMetrics::Prediction {
            transfer_risk,
            transfer,
            regret: g,
            ..
        }) = &r.outcome
        {
            cols[0].push(transfer.mse);
            cols[1].push(-transfer.r2);
            cols[2].push(-transfer.corr);
            cols[3].push(*transfer_risk);
            regret.extend(g);
        }
    }
    (cols, regret)
}

fn portfolio_pairs(rows: &[&TrialRow]) -> (Vec<f64>, Vec<f64>) {
    rows.iter()
        .filter_map(|r| match &r.outcome {
            Ok(TrialMetrics::Portfolio {
                risk,
                transfer_sharpe,
                ..
            }) => Some((risk.total, *transfer_sharpe)),
            _ => None,
        })
        .unzip()
}

/// Groups in order of first appearance.
fn ordered_groups<'a>(names: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for n in names {
        if !out.contains(&n) {
            out.push(n);
        }
    }
    out
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn target_correlation(target: &str, rows: &[&TrialRow]) -> TargetCorrelation {
    let mine: Vec<&TrialRow> = rows
        .iter()
        .copied()
        .filter(|r| r.target_group == target)
        .collect();
    let ok: Vec<&TrialRow> = mine.iter().copied().filter(|r| r.succeeded()).collect();
    let groups = ordered_groups(ok.iter().map(|r| r.source_group.as_str()));
    let (basis, correlation) = if groups.len() >= 2 {
        let (risk, sr): (Vec<f64>, Vec<f64>) = groups
            .iter()
            .map(|g| {
                let of_group: Vec<&TrialRow> = ok
                    .iter()
                    .copied()
                    .filter(|r| r.source_group == *g)
                    .collect();
                let (risk, sr) = portfolio_pairs(&of_group);
                (mean(&risk), mean(&sr))
            })
            .unzip();
        ("source_groups", pearson(&risk, &sr).ok())
    } else {
        let (risk, sr) = portfolio_pairs(&ok);
        ("trials", pearson(&risk, &sr).ok())
    };
    TargetCorrelation {
        target: target.to_string(),
        correlation,
        basis,
        trials: mine.len(),
        failed: mine.len() - ok.len(),
    }
}

/// Correlation tables over the successful rows; failures are only counted.
pub fn summarize(kind: ExperimentKind, rows: &[TrialRow]) -> Result<Summary> {
    let ok: Vec<&TrialRow> = rows.iter().filter(|r| r.succeeded()).collect();
    if ok.len() < 2 {
        return Err(ExperimentError::TooFewRows {
            needed: 2,
            found: ok.len(),
        });
    }
    let failed = rows.len() - ok.len();
    if kind.is_prediction() {
        let (cols, regret) = prediction_columns(&ok);
        let mut correlation = [[1.0; 4]; 4];
        for i in 0..4 {
            for j in 0..i {
                let c = pearson(&cols[i], &cols[j])?;
                correlation[i][j] = c;
                correlation[j][i] = c;
            }
        }
        let risk_regret_correlation = if kind == ExperimentKind::SyntheticPrediction {
            Some(pearson(&cols[3], &regret)?)
        } else {
            None
        };
        Ok(Summary::Prediction(PredictionSummary {
            kind: kind.label(),
            trials: rows.len(),
            failed,
            metrics: PREDICTION_METRICS,
            correlation,
            risk_regret_correlation,
        }))
    } else {
        let (risk, sr) = portfolio_pairs(&ok);
        let targets = ordered_groups(rows.iter().map(|r| r.target_group.as_str()))
            .into_iter()
            .map(|t| target_correlation(t, &rows.iter().collect::<Vec<_>>()))
            .collect();
        Ok(Summary::Portfolio(PortfolioSummary {
            kind: kind.label(),
            trials: rows.len(),
            failed,
            risk_sharpe_correlation: pearson(&risk, &sr).ok(),
            targets,
        }))
    }
}

impl Summary {
    pub fn failed(&self) -> usize {
        match self {
            Summary::Prediction(p) => p.failed,
            Summary::Portfolio(p) => p.failed,
        }
    }

    /// Prediction: `metric` then the four metric columns. Portfolio:
    /// `target,correlation,basis,trials,failed`, an undefined correlation
    /// left empty.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(sink);
        match self {
            Summary::Prediction(p) => {
                let mut header = vec!["metric"];
                header.extend(p.metrics);
                w.write_record(header)?;
                for (name, row) in p.metrics.iter().zip(&p.correlation) {
                    let mut rec = vec![name.to_string()];
                    rec.extend(row.iter().map(|v| num(*v)));
                    w.write_record(rec)?;
                }
            }
            Summary::Portfolio(p) => {
                w.write_record(["target", "correlation", "basis", "trials", "failed"])?;
                for t in &p.targets {
                    w.write_record([
                        t.target.clone(),
                        t.correlation.map(num).unwrap_or_default(),
                        t.basis.to_string(),
                        t.trials.to_string(),
                        t.failed.to_string(),
                    ])?;
                }
            }
        }
        w.flush().map_err(|source| ExperimentError::Io {
            path: "summary.csv".into(),
            source,
        })?;
        Ok(())
    }

    /// Pretty JSON with every number rounded to 12 significant digits.
    pub fn write_json<W: Write>(&self, mut sink: W) -> Result<()> {
        let rounded = match self.clone() {
            Summary::Prediction(mut p) => {
                for row in p.correlation.iter_mut() {
                    for v in row.iter_mut() {
                        *v = round12(*v);
                    }
                }
                p.risk_regret_correlation = p.risk_regret_correlation.map(round12);
                Summary::Prediction(p)
            }
            Summary::Portfolio(mut p) => {
                p.risk_sharpe_correlation = p.risk_sharpe_correlation.map(round12);
                for t in p.targets.iter_mut() {
                    t.correlation = t.correlation.map(round12);
                }
                Summary::Portfolio(p)
            }
        };
        serde_json::to_writer_pretty(&mut sink, &rounded)?;
        sink.write_all(b"\n")
            .map_err(|source| ExperimentError::Io {
                path: "summary.json".into(),
                source,
            })?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::portfolio::PortfolioRisk;
    use crate::ridge::MetricsReport;

    fn pred_row(i: usize, mse: f64, r2: f64, corr: f64, risk: f64) -> TrialRow {
        let m = MetricsReport { mse, r2, corr };
        TrialRow {
            trial_index: i,
            source_group: String::new(),
            target_group: String::new(),
            sources: vec![],
            targets: vec![],
            level: None,
            outcome: Ok(TrialMetrics::Prediction {
                transfer_risk: risk,
                direct: m,
                transfer: m,
                regret: None,
            }),
        }
    }

    fn port_row(i: usize, src: &str, tgt: &str, risk: f64, sr: f64) -> TrialRow {
        TrialRow {
            trial_index: i,
            source_group: src.into(),
            target_group: tgt.into(),
            sources: vec![],
            targets: vec![],
            level: None,
            outcome: Ok(TrialMetrics::Portfolio {
                risk: PortfolioRisk {
                    r1: risk,
                    r2: 0.0,
                    total: risk,
                },
                direct_sharpe: 0.0,
                transfer_sharpe: sr,
            }),
        }
    }

    #[test]
    fn risk_equal_to_mse_correlates_perfectly() {
        let rows: Vec<TrialRow> = (0..5)
            .map(|i| {
                let x = i as f64;
                pred_row(i, x, 0.1 * x * x, (x - 2.0).abs(), x)
            })
            .collect();
        let Summary::Prediction(s) = summarize(ExperimentKind::Prediction, &rows).unwrap() else {
            panic!()
        };
        assert!((s.correlation[0][3] - 1.0).abs() < 1e-15);
        assert_eq!(s.correlation[1][2], s.correlation[2][1]);
        assert_eq!(s.correlation[2][2], 1.0);
    }

    #[test]
    fn antithetic_rows() {
        let rows = vec![
            pred_row(0, 1.0, 1.0, 0.0, 0.0),
            pred_row(1, 0.0, 0.0, 1.0, 1.0),
        ];
        let Summary::Prediction(s) = summarize(ExperimentKind::Prediction, &rows).unwrap() else {
            panic!()
        };
        // With two rows every off-diagonal entry is ±1.
        assert_eq!(s.correlation[0][1], -1.0);
        assert_eq!(s.correlation[0][2], 1.0);
        assert_eq!(s.correlation[0][3], -1.0);
    }

    #[test]
    fn too_few_rows() {
        let mut rows = vec![
            pred_row(0, 1.0, 1.0, 0.0, 0.0),
            pred_row(1, 0.0, 0.0, 1.0, 1.0),
        ];
        rows[1].outcome = Err("boom".into());
        assert!(matches!(
            summarize(ExperimentKind::Prediction, &rows),
            Err(ExperimentError::TooFewRows {
                needed: 2,
                found: 1
            })
        ));
    }

    #[test]
    fn portfolio_layout() {
        let rows = vec![
            port_row(0, "A", "X", 1.0, 3.0),
            port_row(1, "A", "X", 3.0, 1.0),
            port_row(2, "B", "X", 2.0, 2.0),
            port_row(3, "C", "X", 5.0, 0.0),
            port_row(4, "A", "Y", 1.0, 1.0),
            port_row(5, "A", "Y", 2.0, 0.5),
        ];
        let Summary::Portfolio(s) = summarize(ExperimentKind::Portfolio, &rows).unwrap() else {
            panic!()
        };
        assert_eq!(s.targets.len(), 2);
        assert_eq!(s.targets[0].target, "X");
        assert_eq!(s.targets[0].basis, "source_groups");
        // Group means (2, 2), (2, 2), (5, 0).
        assert!((s.targets[0].correlation.unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(s.targets[1].basis, "trials");
        assert_eq!(s.targets[1].correlation, Some(-1.0));
        let mut buf = Vec::new();
        Summary::Portfolio(s).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(
            text.starts_with("target,correlation,basis,trials,failed\nX,-1,source_groups,4,0\n")
        );
    }
}
