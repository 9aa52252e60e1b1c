use chrono::NaiveDate;

use super::{cross_section_standardize, DataError, MarketPanel, PriorExposure, RawLabels};
use super::{Field, NUM_FIELDS};
use crate::diffcore::Tensor;

/// Inclusive range of panel date indices a batch reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadSpan {
    pub first: usize,
    pub last: usize,
}

/// One anchor date's cross-section, ready for the model.
#[derive(Debug, Clone)]
pub struct WindowBatch {
    pub anchor: usize,
    pub anchor_date: NaiveDate,
    /// Panel indices of the surviving stocks, ascending.
    pub stocks: Vec<usize>,
    /// `N x T x D` past features.
    pub x: Tensor,
    /// `N x T' x D` future features; absent for inference batches.
    pub x_future: Option<Tensor>,
    /// `N x K` prior exposures of the surviving stocks.
    pub prior: Tensor,
    /// `N x L` standardized labels, row-major.
    pub labels: Vec<Option<f64>>,
    /// `N x L` raw forward returns, row-major.
    pub raw_labels: Vec<Option<f64>>,
    pub horizons: Vec<usize>,
    /// Horizons whose cross-section had zero variance.
    pub degenerate: Vec<usize>,
    pub reads: ReadSpan,
}

impl WindowBatch {
    pub fn n_stocks(&self) -> usize {
        self.stocks.len()
    }

    /// Standardized labels as an `N x L` tensor when every entry is present.
    pub fn label_tensor(&self) -> Option<Tensor> {
        let data: Option<Vec<f64>> = self.labels.iter().copied().collect();
        Tensor::matrix(self.stocks.len(), self.horizons.len(), data?).ok()
    }

    /// Standardized label of `(row, horizon)`.
    pub fn label(&self, row: usize, horizon: usize) -> Option<f64> {
        self.labels[row * self.horizons.len() + horizon]
    }
}

/// Training/validation batch: past window of `past` days ending at `anchor`,
/// future window of `future` days after it, and every label present.
///
/// Each field is divided by its value on the first day of its own window.
/// Stocks with any invalid bar in `[anchor - past + 1, anchor + future]`, or
/// any missing label, are dropped.
pub fn build_window_batch(
    panel: &MarketPanel,
    labels: &RawLabels,
    prior: &PriorExposure,
    anchor: usize,
    past: usize,
    future: usize,
) -> Result<WindowBatch, DataError> {
    let days = panel.n_dates();
    let last_label = labels.last_read(anchor);
    if past == 0 || anchor + 1 < past || anchor + future >= days || last_label >= days {
        return Err(DataError::Window {
            anchor,
            msg: format!(
                "needs {past} past days, {future} future days and labels through index {last_label}; panel has {days} dates"
            ),
        });
    }
    let start = anchor + 1 - past;
    let n_h = labels.horizons().len();
    let stocks: Vec<usize> = (0..panel.n_stocks())
        .filter(|&s| {
            (start..=anchor + future).all(|d| panel.is_valid(d, s))
                && (0..n_h).all(|h| labels.get(anchor, s, h).is_some())
        })
        .collect();
    assemble(panel, Some(labels), prior, anchor, past, Some(future), stocks, last_label)
}

/// Past-only batch for prediction. Stocks need a fully valid past window;
/// labels are attached where available.
pub fn build_inference_batch(
    panel: &MarketPanel,
    labels: Option<&RawLabels>,
    prior: &PriorExposure,
    anchor: usize,
    past: usize,
) -> Result<WindowBatch, DataError> {
    let days = panel.n_dates();
    if past == 0 || anchor + 1 < past || anchor >= days {
        return Err(DataError::Window {
            anchor,
            msg: format!("needs {past} past days; panel has {days} dates"),
        });
    }
    let start = anchor + 1 - past;
    let stocks: Vec<usize> = (0..panel.n_stocks())
        .filter(|&s| (start..=anchor).all(|d| panel.is_valid(d, s)))
        .collect();
    let last = labels.map_or(anchor, |l| l.last_read(anchor).min(days - 1).max(anchor));
    assemble(panel, labels, prior, anchor, past, None, stocks, last)
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    panel: &MarketPanel,
    labels: Option<&RawLabels>,
    prior: &PriorExposure,
    anchor: usize,
    past: usize,
    future: Option<usize>,
    stocks: Vec<usize>,
    last_read: usize,
) -> Result<WindowBatch, DataError> {
    if stocks.len() < 2 {
        return Err(DataError::TooFewStocks {
            needed: 2,
            got: stocks.len(),
        });
    }
    let start = anchor + 1 - past;
    let x = window_features(panel, &stocks, start, past);
    let x_future = future.map(|f| window_features(panel, &stocks, anchor + 1, f));
    let horizons = labels.map(|l| l.horizons().to_vec()).unwrap_or_default();
    let n_h = horizons.len();
    let n = stocks.len();
    let mut raw = vec![None; n * n_h];
    let mut standardized = vec![None; n * n_h];
    let mut degenerate = Vec::new();
    for h in 0..n_h {
        let column: Vec<Option<f64>> = match labels {
            Some(l) => stocks.iter().map(|&s| l.get(anchor, s, h)).collect(),
            None => vec![None; n],
        };
        for (i, v) in column.iter().enumerate() {
            raw[i * n_h + h] = *v;
        }
        if column.iter().flatten().count() < 2 {
            continue;
        }
        let out = cross_section_standardize(&column)?;
        if out.degenerate {
            degenerate.push(h);
        }
        for (i, v) in out.values.into_iter().enumerate() {
            standardized[i * n_h + h] = v;
        }
    }
    let last = future.map_or(last_read, |f| (anchor + f).max(last_read));
    Ok(WindowBatch {
        anchor,
        anchor_date: panel.dates()[anchor],
        prior: prior.select_rows(&stocks),
        stocks,
        x,
        x_future,
        labels: standardized,
        raw_labels: raw,
        horizons,
        degenerate,
        reads: ReadSpan { first: start, last },
    })
}

fn window_features(panel: &MarketPanel, stocks: &[usize], start: usize, len: usize) -> Tensor {
    let mut data = Vec::with_capacity(stocks.len() * len * NUM_FIELDS);
    for &s in stocks {
        let base = panel.bar(start, s);
        let mut denom = *base;
        // A zero-volume first day would make the volume scale undefined.
        let vol = Field::Volume as usize;
        if !(denom[vol] > 0.0) {
            denom[vol] = 1.0;
        }
        for d in start..start + len {
            let bar = panel.bar(d, s);
            for f in 0..NUM_FIELDS {
                data.push(bar[f] / denom[f]);
            }
        }
    }
    Tensor::new(vec![stocks.len(), len, NUM_FIELDS], data).expect("window dims")
}
