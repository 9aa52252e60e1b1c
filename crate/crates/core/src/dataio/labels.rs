use super::{DataError, Field, MarketPanel};

/// Raw forward returns on the vwap price, `date x stock x horizon`.
///
/// The label for date `t` and horizon `dt` is
/// `(vwap[t + dt + 1] - vwap[t + 1]) / vwap[t + 1]`; it is missing when
/// either bar is invalid or falls past the end of the panel.
#[derive(Debug, Clone, PartialEq)]
pub struct RawLabels {
    horizons: Vec<usize>,
    n_stocks: usize,
    values: Vec<Option<f64>>,
}

impl RawLabels {
    pub fn horizons(&self) -> &[usize] {
        &self.horizons
    }

    pub fn get(&self, date: usize, stock: usize, horizon: usize) -> Option<f64> {
        let l = self.horizons.len();
        self.values[(date * self.n_stocks + stock) * l + horizon]
    }

    /// Last date index read to form any label at `date`.
    pub fn last_read(&self, date: usize) -> usize {
        date + self.horizons.iter().max().copied().unwrap_or(0) + 1
    }
}

pub fn compute_labels(panel: &MarketPanel, horizons: &[usize]) -> RawLabels {
    let n = panel.n_stocks();
    let days = panel.n_dates();
    let l = horizons.len();
    let mut values = vec![None; days * n * l];
    for t in 0..days {
        for s in 0..n {
            if t + 1 >= days || !panel.is_valid(t + 1, s) {
                continue;
            }
            let base = panel.get(t + 1, s, Field::Vwap);
            for (h, &dt) in horizons.iter().enumerate() {
                let end = t + dt + 1;
                if end < days && panel.is_valid(end, s) {
                    let p = panel.get(end, s, Field::Vwap);
                    values[(t * n + s) * l + h] = Some((p - base) / base);
                }
            }
        }
    }
    RawLabels {
        horizons: horizons.to_vec(),
        n_stocks: n,
        values,
    }
}

/// Result of cross-sectional standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub values: Vec<Option<f64>>,
    /// Set when the valid entries had zero variance; values are then zero.
    pub degenerate: bool,
}

/// Rescales the valid entries to mean 0 and population std 1.
pub fn cross_section_standardize(values: &[Option<f64>]) -> Result<Standardized, DataError> {
    let valid: Vec<f64> = values.iter().flatten().copied().collect();
    if valid.len() < 2 {
        return Err(DataError::TooFewStocks {
            needed: 2,
            got: valid.len(),
        });
    }
    let n = valid.len() as f64;
    let mean = valid.iter().sum::<f64>() / n;
    let var = valid.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    // Rounding in the mean leaves a few ulps of spread on constant input.
    let scale = valid.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !(std > 64.0 * f64::EPSILON * scale) || !std.is_finite() {
        return Ok(Standardized {
            values: values.iter().map(|v| v.map(|_| 0.0)).collect(),
            degenerate: true,
        });
    }
    Ok(Standardized {
        values: values.iter().map(|v| v.map(|x| (x - mean) / std)).collect(),
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Bar;
    use chrono::NaiveDate;

    fn vwap_panel(paths: &[Vec<f64>]) -> MarketPanel {
        let days = paths[0].len();
        let dates = (0..days)
            .map(|d| NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Days::new(d as u64))
            .collect();
        let tickers = (0..paths.len()).map(|s| format!("S{s}")).collect();
        let mut bars: Vec<Bar> = Vec::new();
        for d in 0..days {
            for p in paths {
                bars.push([p[d], p[d], p[d], p[d], p[d], 1000.0]);
            }
        }
        MarketPanel::from_bars(dates, tickers, bars).unwrap()
    }

    #[test]
    fn ten_day_return_uses_next_day_vwap() {
        let mut path = vec![100.0; 13];
        path[11] = 110.0;
        let labels = compute_labels(&vwap_panel(&[path]), &[10]);
        assert!((labels.get(0, 0, 0).unwrap() - 0.10).abs() < 1e-15);
        assert_eq!(labels.get(1, 0, 0), Some(0.0));
        assert_eq!(labels.get(2, 0, 0), None);
    }

    #[test]
    fn constant_path_has_zero_labels() {
        let labels = compute_labels(&vwap_panel(&[vec![50.0; 30]]), &[1, 5, 10, 20]);
        for h in 0..4 {
            assert_eq!(labels.get(0, 0, h), Some(0.0));
        }
    }

    #[test]
    fn last_date_has_no_labels() {
        let labels = compute_labels(&vwap_panel(&[vec![50.0; 30]]), &[1, 5]);
        assert_eq!(labels.get(29, 0, 0), None);
        assert_eq!(labels.get(29, 0, 1), None);
        assert_eq!(labels.get(27, 0, 0), Some(0.0));
        assert_eq!(labels.get(27, 0, 1), None);
    }

    #[test]
    fn standardize_two_values() {
        let out = cross_section_standardize(&[Some(1.0), Some(3.0)]).unwrap();
        assert_eq!(out.values, vec![Some(-1.0), Some(1.0)]);
        assert!(!out.degenerate);
    }

    #[test]
    fn standardize_is_idempotent() {
        let raw = [Some(0.3), None, Some(-1.2), Some(2.5), Some(0.0)];
        let once = cross_section_standardize(&raw).unwrap();
        let twice = cross_section_standardize(&once.values).unwrap();
        for (a, b) in once.values.iter().zip(&twice.values) {
            match (a, b) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12),
                (None, None) => {}
                _ => panic!("mask changed"),
            }
        }
    }

    #[test]
    fn constant_cross_section_is_flagged() {
        let out = cross_section_standardize(&[Some(5.0), Some(5.0), Some(5.0)]).unwrap();
        assert_eq!(out.values, vec![Some(0.0); 3]);
        assert!(out.degenerate);
        assert!(cross_section_standardize(&[Some(1.0), None]).is_err());
    }
}
