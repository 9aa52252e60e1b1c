//! Market data ingestion, labels, model windows and rolling splits.
//!
//! Panel CSV schema: `date,ticker,open,high,low,close,vwap,volume` with
//! ISO-8601 dates and plain decimals. Prior factor CSV: `ticker,factor_id`,
//! one row per membership.

mod labels;
mod panel;
mod splits;
mod window;

use std::path::Path;

pub use labels::{compute_labels, cross_section_standardize, RawLabels, Standardized};
pub use panel::{
    Bar, Field, MarketPanel, PriorExposure, DATE_FORMAT, NUM_FIELDS, PANEL_HEADER, PRIOR_HEADER,
};
pub(crate) use panel::format_decimal;
pub use splits::{rolling_splits, SplitPlan, SplitSpec, SplitTriple};
pub use window::{build_inference_batch, build_window_batch, ReadSpan, WindowBatch};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: duplicate row for ({date}, {ticker})")]
    Duplicate {
        line: usize,
        date: String,
        ticker: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("need at least {needed} valid stocks, got {got}")]
    TooFewStocks { needed: usize, got: usize },
    #[error("window at date index {anchor}: {msg}")]
    Window { anchor: usize, msg: String },
    #[error("rolling split needs {years} years = {needed} trading days, panel has {got}")]
    InsufficientHistory {
        needed: usize,
        got: usize,
        years: f64,
    },
    #[error("{0}")]
    Invalid(String),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
