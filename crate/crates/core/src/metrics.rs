//! Regression error metrics and the method comparison report.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("{truth} labels but {pred} predictions")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("no samples")]
    EmptyInput,
    #[error("method {method}: {source}")]
    AlignmentError {
        method: String,
        #[source]
        source: Box<MetricsError>,
    },
}

fn check(y: &[f64], y_hat: &[f64]) -> Result<(), MetricsError> {
    if y.len() != y_hat.len() {
        return Err(MetricsError::LengthMismatch {
            truth: y.len(),
            pred: y_hat.len(),
        });
    }
    if y.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(())
}

pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<f64, MetricsError> {
    check(y, y_hat)?;
    let s: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / y.len() as f64)
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64, MetricsError> {
    mse(y, y_hat).map(f64::sqrt)
}

pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64, MetricsError> {
    check(y, y_hat)?;
    let s: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum();
    Ok(s / y.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

/// One row per method, in input order.
pub fn evaluate<S: AsRef<str>>(
    methods: &[(S, Vec<f64>)],
    labels: &[f64],
) -> Result<Report, MetricsError> {
    let rows = methods
        .iter()
        .map(|(name, pred)| {
            let wrap = |e| MetricsError::AlignmentError {
                method: name.as_ref().to_owned(),
                source: Box::new(e),
            };
            Ok(ReportRow {
                method: name.as_ref().to_owned(),
                mse: mse(labels, pred).map_err(wrap)?,
                rmse: rmse(labels, pred).map_err(wrap)?,
                mae: mae(labels, pred).map_err(wrap)?,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(Report { rows })
}

impl Report {
    pub fn row(&self, method: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// `method,mse,rmse,mae` with six decimals.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,mse,rmse,mae\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.6},{:.6},{:.6}\n",
                r.method, r.mse, r.rmse, r.mae
            ));
        }
        s
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .rows
            .iter()
            .map(|r| r.method.len())
            .max()
            .unwrap_or(0)
            .max(6);
        writeln!(f, "{:<width$}  {:>10}  {:>8}  {:>8}", "method", "MSE", "RMSE", "MAE")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<width$}  {:>10.2}  {:>8.2}  {:>8.2}",
                r.method, r.mse, r.rmse, r.mae
            )?;
        }
        Ok(())
    }
}
