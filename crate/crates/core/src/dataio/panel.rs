use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use super::DataError;
use crate::diffcore::Tensor;

/// Header of the panel CSV, in column order.
pub const PANEL_HEADER: [&str; 8] = [
    "date", "ticker", "open", "high", "low", "close", "vwap", "volume",
];
/// Header of the prior-factor membership CSV.
pub const PRIOR_HEADER: [&str; 2] = ["ticker", "factor_id"];

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// The six daily series carried per stock, in CSV order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Open = 0,
    High = 1,
    Low = 2,
    Close = 3,
    Vwap = 4,
    Volume = 5,
}

pub const NUM_FIELDS: usize = 6;

/// One day of one stock: open, high, low, close, vwap, volume.
pub type Bar = [f64; NUM_FIELDS];

/// Aligned date x stock panel of daily bars.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketPanel {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    bars: Vec<Bar>,
    valid: Vec<bool>,
}

fn bar_is_valid(bar: &Bar) -> bool {
    bar[..5].iter().all(|p| p.is_finite() && *p > 0.0)
        && bar[Field::Volume as usize].is_finite()
        && bar[Field::Volume as usize] >= 0.0
}

impl MarketPanel {
    /// Builds a panel from date-major bars (`bars[d * n_stocks + s]`).
    /// Bars with non-positive prices or negative volume are marked invalid.
    pub fn from_bars(
        dates: Vec<NaiveDate>,
        tickers: Vec<String>,
        bars: Vec<Bar>,
    ) -> Result<Self, DataError> {
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DataError::Invalid("dates must be strictly increasing".into()));
        }
        if bars.len() != dates.len() * tickers.len() {
            return Err(DataError::Invalid(format!(
                "{} bars for {} dates x {} stocks",
                bars.len(),
                dates.len(),
                tickers.len()
            )));
        }
        let valid = bars.iter().map(bar_is_valid).collect();
        Ok(Self {
            dates,
            tickers,
            bars,
            valid,
        })
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_stocks(&self) -> usize {
        self.tickers.len()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn bar(&self, date: usize, stock: usize) -> &Bar {
        &self.bars[date * self.tickers.len() + stock]
    }

    pub fn get(&self, date: usize, stock: usize, field: Field) -> f64 {
        self.bar(date, stock)[field as usize]
    }

    pub fn is_valid(&self, date: usize, stock: usize) -> bool {
        self.valid[date * self.tickers.len() + stock]
    }

    /// Marks one bar invalid, e.g. to simulate a suspension.
    pub fn invalidate(&mut self, date: usize, stock: usize) {
        let n = self.tickers.len();
        self.valid[date * n + stock] = false;
    }

    pub fn date_index(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    pub fn ticker_index(&self, ticker: &str) -> Option<usize> {
        self.tickers.iter().position(|t| t == ticker)
    }

    /// Reads the documented panel CSV.
    pub fn load(path: &Path) -> Result<Self, DataError> {
        let file = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
        Self::read_csv(file)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::None)
            .from_reader(reader);
        check_header(rdr.headers()?, &PANEL_HEADER)?;

        let mut rows: Vec<(NaiveDate, String, Bar)> = Vec::new();
        let mut seen = HashSet::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| DataError::Parse {
                line,
                msg: e.to_string(),
            })?;
            if rec.len() != PANEL_HEADER.len() {
                return Err(DataError::Parse {
                    line,
                    msg: format!("expected {} fields, got {}", PANEL_HEADER.len(), rec.len()),
                });
            }
            let date = NaiveDate::parse_from_str(&rec[0], DATE_FORMAT).map_err(|e| {
                DataError::Parse {
                    line,
                    msg: format!("bad date {:?}: {e}", &rec[0]),
                }
            })?;
            let ticker = rec[1].to_string();
            if ticker.is_empty() {
                return Err(DataError::Parse {
                    line,
                    msg: "empty ticker".into(),
                });
            }
            let mut bar = [0.0; NUM_FIELDS];
            for (k, slot) in bar.iter_mut().enumerate() {
                let raw = &rec[k + 2];
                // Missing values are kept as invalid bars, never imputed.
                *slot = if raw.is_empty() {
                    f64::NAN
                } else {
                    parse_decimal(raw).ok_or_else(|| DataError::Parse {
                        line,
                        msg: format!("bad {} value {raw:?}", PANEL_HEADER[k + 2]),
                    })?
                };
            }
            if !seen.insert((date, ticker.clone())) {
                return Err(DataError::Duplicate {
                    line,
                    date: date.format(DATE_FORMAT).to_string(),
                    ticker,
                });
            }
            rows.push((date, ticker, bar));
        }

        let dates: Vec<NaiveDate> = rows
            .iter()
            .map(|r| r.0)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let tickers: Vec<String> = rows
            .iter()
            .map(|r| r.1.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let date_ix: HashMap<NaiveDate, usize> =
            dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        let ticker_ix: HashMap<&str, usize> = tickers
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect();
        let n = tickers.len();
        let mut bars = vec![[f64::NAN; NUM_FIELDS]; dates.len() * n];
        for (date, ticker, bar) in &rows {
            bars[date_ix[date] * n + ticker_ix[ticker.as_str()]] = *bar;
        }
        Self::from_bars(dates, tickers, bars)
    }

    /// Writes every valid bar in the documented CSV schema, date-major and
    /// ticker-ordered.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(PANEL_HEADER)?;
        for (d, date) in self.dates.iter().enumerate() {
            let ds = date.format(DATE_FORMAT).to_string();
            for (s, ticker) in self.tickers.iter().enumerate() {
                if !self.is_valid(d, s) {
                    continue;
                }
                let bar = self.bar(d, s);
                let mut rec = vec![ds.clone(), ticker.clone()];
                rec.extend(bar.iter().map(|v| format_decimal(*v)));
                w.write_record(&rec)?;
            }
        }
        w.flush().map_err(|e| DataError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let file = std::fs::File::create(path).map_err(|e| DataError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Plain decimal: optional sign, digits, optional fraction or exponent.
/// Rejects thousands separators, `inf`, `nan` and the like.
fn parse_decimal(raw: &str) -> Option<f64> {
    let ok = !raw.is_empty()
        && raw
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'))
        && raw.chars().any(|c| c.is_ascii_digit());
    if !ok {
        return None;
    }
    raw.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn format_decimal(v: f64) -> String {
    let s = format!("{v:?}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

fn check_header(got: &csv::StringRecord, want: &[&str]) -> Result<(), DataError> {
    if got.iter().ne(want.iter().copied()) {
        return Err(DataError::Parse {
            line: 1,
            msg: format!("header must be `{}`", want.join(",")),
        });
    }
    Ok(())
}

/// Binary stock x factor membership matrix aligned to a panel's tickers.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorExposure {
    factor_ids: Vec<String>,
    matrix: Tensor,
}

impl PriorExposure {
    pub fn new(factor_ids: Vec<String>, matrix: Tensor) -> Result<Self, DataError> {
        let (_, k) = matrix
            .dims2()
            .map_err(|e| DataError::Invalid(e.to_string()))?;
        if k == 0 || k != factor_ids.len() {
            return Err(DataError::Invalid(format!(
                "{} factor ids for a matrix with {k} columns",
                factor_ids.len()
            )));
        }
        if matrix.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(DataError::Invalid("prior exposures must be 0 or 1".into()));
        }
        Ok(Self { factor_ids, matrix })
    }

    /// Builds a single-membership matrix from one factor index per stock.
    pub fn from_assignment(factor_ids: Vec<String>, assignment: &[usize]) -> Result<Self, DataError> {
        let k = factor_ids.len();
        let mut m = Tensor::zeros(&[assignment.len(), k]);
        for (i, &f) in assignment.iter().enumerate() {
            if f >= k {
                return Err(DataError::Invalid(format!("factor index {f} out of range")));
            }
            m.data_mut()[i * k + f] = 1.0;
        }
        Self::new(factor_ids, m)
    }

    pub fn factor_ids(&self) -> &[String] {
        &self.factor_ids
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn n_factors(&self) -> usize {
        self.factor_ids.len()
    }

    /// Rows for the given panel stock indices, in that order.
    pub fn select_rows(&self, stocks: &[usize]) -> Tensor {
        let k = self.n_factors();
        let mut out = Vec::with_capacity(stocks.len() * k);
        for &s in stocks {
            out.extend_from_slice(self.matrix.row(s));
        }
        Tensor::matrix(stocks.len(), k, out).expect("row selection keeps width")
    }

    /// Reads `ticker,factor_id` rows. Tickers absent from the file get no
    /// membership; tickers unknown to the panel are an error.
    pub fn load(path: &Path, tickers: &[String]) -> Result<Self, DataError> {
        let file = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
        Self::read_csv(file, tickers)
    }

    pub fn read_csv<R: Read>(reader: R, tickers: &[String]) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        check_header(rdr.headers()?, &PRIOR_HEADER)?;
        let mut pairs = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| DataError::Parse {
                line,
                msg: e.to_string(),
            })?;
            if rec.len() != 2 || rec[0].is_empty() || rec[1].is_empty() {
                return Err(DataError::Parse {
                    line,
                    msg: "expected `ticker,factor_id`".into(),
                });
            }
            let s = tickers
                .iter()
                .position(|t| t == &rec[0])
                .ok_or_else(|| DataError::Parse {
                    line,
                    msg: format!("unknown ticker {:?}", &rec[0]),
                })?;
            pairs.push((s, rec[1].to_string(), line));
        }
        let factor_ids: Vec<String> = pairs
            .iter()
            .map(|p| p.1.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if factor_ids.is_empty() {
            return Err(DataError::Invalid("no prior factors".into()));
        }
        let k = factor_ids.len();
        let mut m = Tensor::zeros(&[tickers.len(), k]);
        for (s, f, line) in pairs {
            let j = factor_ids.binary_search(&f).expect("collected above");
            let slot = &mut m.data_mut()[s * k + j];
            if *slot == 1.0 {
                return Err(DataError::Parse {
                    line,
                    msg: format!("duplicate membership {} {f}", tickers[s]),
                });
            }
            *slot = 1.0;
        }
        Self::new(factor_ids, m)
    }

    pub fn write_csv<W: Write>(&self, writer: W, tickers: &[String]) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(PRIOR_HEADER)?;
        let k = self.n_factors();
        for (s, t) in tickers.iter().enumerate() {
            for j in 0..k {
                if self.matrix.data()[s * k + j] == 1.0 {
                    w.write_record([t.as_str(), self.factor_ids[j].as_str()])?;
                }
            }
        }
        w.flush().map_err(|e| DataError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn save(&self, path: &Path, tickers: &[String]) -> Result<(), DataError> {
        let file = std::fs::File::create(path).map_err(|e| DataError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file), tickers)
    }
}
