//! IC / ICIR metrics, prediction tables, ablation reports and hidden-factor
//! recovery scoring.
//!
//! Prediction CSV: `date,ticker,pred_<h>...,label_<h>...` with one column
//! pair per horizon `h`; missing labels are empty fields.
//! Metric CSV: `horizon,ic,icir,n_days,n_excluded`; undefined values are
//! empty fields. Daily CSV: `date,horizon,ic,rank_ic`.

use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::Serialize;

use crate::dataio::{format_decimal, DataError, DATE_FORMAT};
use crate::diffcore::Tensor;

/// Minimum stocks for a daily correlation.
pub const MIN_IC_STOCKS: usize = 3;

fn degenerate(values: &[f64], mean: f64, sd: f64) -> bool {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(mean.abs());
    sd == 0.0 || sd <= 64.0 * f64::EPSILON * scale
}

/// Pearson correlation; `None` when fewer than 3 pairs or either side is
/// constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < MIN_IC_STOCKS {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    let (sdx, sdy) = ((sxx / n as f64).sqrt(), (syy / n as f64).sqrt());
    if degenerate(x, mx, sdx) || degenerate(y, my, sdy) {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Daily IC over the stocks where the label is present.
pub fn daily_ic(pred: &[f64], label: &[Option<f64>]) -> Option<f64> {
    let (p, l) = paired(pred, label);
    pearson(&p, &l)
}

/// Spearman variant of [`daily_ic`].
pub fn rank_ic(pred: &[f64], label: &[Option<f64>]) -> Option<f64> {
    let (p, l) = paired(pred, label);
    if p.len() < MIN_IC_STOCKS {
        return None;
    }
    pearson(&average_ranks(&p), &average_ranks(&l))
}

fn paired(pred: &[f64], label: &[Option<f64>]) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(pred.len(), label.len());
    pred.iter()
        .zip(label)
        .filter_map(|(p, l)| l.map(|l| (*p, l)))
        .unzip()
}

/// Mean of the defined entries.
pub fn mean_defined(series: &[Option<f64>]) -> Option<f64> {
    let v: Vec<f64> = series.iter().flatten().copied().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Mean over sample standard deviation of the defined entries.
pub fn icir(series: &[Option<f64>]) -> Option<f64> {
    let v: Vec<f64> = series.iter().flatten().copied().collect();
    if v.len() < 2 {
        return None;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    let sd = var.sqrt();
    if degenerate(&v, mean, sd) {
        return None;
    }
    Some(mean / sd)
}

/// Predictions and standardized labels of one day.
#[derive(Debug, Clone, PartialEq)]
pub struct DayPredictions {
    pub date: NaiveDate,
    pub tickers: Vec<String>,
    /// `N x L` row-major scores.
    pub scores: Vec<f64>,
    /// `N x L` row-major labels.
    pub labels: Vec<Option<f64>>,
}

impl DayPredictions {
    pub fn n_stocks(&self) -> usize {
        self.tickers.len()
    }

    pub fn score_column(&self, h: usize, n_h: usize) -> Vec<f64> {
        (0..self.n_stocks()).map(|i| self.scores[i * n_h + h]).collect()
    }

    pub fn label_column(&self, h: usize, n_h: usize) -> Vec<Option<f64>> {
        (0..self.n_stocks()).map(|i| self.labels[i * n_h + h]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionTable {
    pub horizons: Vec<usize>,
    pub days: Vec<DayPredictions>,
}

impl PredictionTable {
    pub fn new(horizons: Vec<usize>) -> Self {
        Self {
            horizons,
            days: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.days.iter().map(DayPredictions::n_stocks).sum()
    }

    pub fn horizon_index(&self, horizon: usize) -> Option<usize> {
        self.horizons.iter().position(|h| *h == horizon)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(w);
        let mut header = vec!["date".to_string(), "ticker".to_string()];
        header.extend(self.horizons.iter().map(|h| format!("pred_{h}")));
        header.extend(self.horizons.iter().map(|h| format!("label_{h}")));
        w.write_record(&header)?;
        let n_h = self.horizons.len();
        for day in &self.days {
            let date = day.date.format(DATE_FORMAT).to_string();
            for (i, t) in day.tickers.iter().enumerate() {
                let mut rec = vec![date.clone(), t.clone()];
                rec.extend((0..n_h).map(|h| format_decimal(day.scores[i * n_h + h])));
                rec.extend((0..n_h).map(|h| day.labels[i * n_h + h].map(format_decimal).unwrap_or_default()));
                w.write_record(&rec)?;
            }
        }
        w.flush().map_err(|e| DataError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let f = std::fs::File::create(path).map_err(|e| DataError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, DataError> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
        let bad_header = || DataError::Parse {
            line: 1,
            msg: format!("unexpected prediction header {}", header.join(",")),
        };
        if header.len() < 4 || header.len() % 2 != 0 || header[0] != "date" || header[1] != "ticker" {
            return Err(bad_header());
        }
        let n_h = (header.len() - 2) / 2;
        let mut horizons = Vec::with_capacity(n_h);
        for k in 0..n_h {
            let h = header[2 + k]
                .strip_prefix("pred_")
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(bad_header)?;
            if header[2 + n_h + k] != format!("label_{h}") {
                return Err(bad_header());
            }
            horizons.push(h);
        }
        let mut table = PredictionTable::new(horizons);
        for (row, rec) in rdr.records().enumerate() {
            let line = row + 2;
            let rec = rec?;
            let parse = |s: &str| -> Result<f64, DataError> {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| DataError::Parse {
                        line,
                        msg: format!("invalid number `{s}`"),
                    })
            };
            let date = NaiveDate::parse_from_str(&rec[0], DATE_FORMAT).map_err(|e| DataError::Parse {
                line,
                msg: format!("invalid date `{}`: {e}", &rec[0]),
            })?;
            if table.days.last().map(|d| d.date) != Some(date) {
                if table.days.last().is_some_and(|d| d.date > date) {
                    return Err(DataError::Parse {
                        line,
                        msg: "rows must be sorted by date".into(),
                    });
                }
                table.days.push(DayPredictions {
                    date,
                    tickers: Vec::new(),
                    scores: Vec::new(),
                    labels: Vec::new(),
                });
            }
            let day = table.days.last_mut().expect("pushed");
            day.tickers.push(rec[1].to_string());
            for k in 0..n_h {
                day.scores.push(parse(&rec[2 + k])?);
            }
            for k in 0..n_h {
                let s = &rec[2 + n_h + k];
                day.labels.push(if s.is_empty() { None } else { Some(parse(s)?) });
            }
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let f = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonMetrics {
    pub horizon: usize,
    pub ic: Option<f64>,
    pub icir: Option<f64>,
    pub rank_ic: Option<f64>,
    pub n_days: usize,
    pub n_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DailyRecord {
    pub date: NaiveDate,
    pub horizon: usize,
    pub ic: Option<f64>,
    pub rank_ic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub tag: String,
    pub horizons: Vec<HorizonMetrics>,
    pub daily: Vec<DailyRecord>,
}

fn opt(v: Option<f64>) -> String {
    v.map(format_decimal).unwrap_or_default()
}

impl MetricReport {
    pub fn horizon(&self, h: usize) -> Option<&HorizonMetrics> {
        self.horizons.iter().find(|m| m.horizon == h)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["horizon", "ic", "icir", "n_days", "n_excluded"])?;
        for m in &self.horizons {
            w.write_record([
                m.horizon.to_string(),
                opt(m.ic),
                opt(m.icir),
                m.n_days.to_string(),
                m.n_excluded.to_string(),
            ])?;
        }
        w.flush().map_err(|e| DataError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn write_daily_csv<W: Write>(&self, w: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["date", "horizon", "ic", "rank_ic"])?;
        for d in &self.daily {
            w.write_record([
                d.date.format(DATE_FORMAT).to_string(),
                d.horizon.to_string(),
                opt(d.ic),
                opt(d.rank_ic),
            ])?;
        }
        w.flush().map_err(|e| DataError::Invalid(e.to_string()))?;
        Ok(())
    }
}

/// Per-horizon IC summary of a prediction table. Days where the IC is
/// undefined count toward `n_excluded` and are left out of every mean.
pub fn metric_report(table: &PredictionTable, tag: &str) -> MetricReport {
    let n_h = table.horizons.len();
    let mut horizons = Vec::with_capacity(n_h);
    let mut daily = Vec::new();
    for (h, &horizon) in table.horizons.iter().enumerate() {
        let mut ics = Vec::with_capacity(table.days.len());
        let mut ranks = Vec::with_capacity(table.days.len());
        for day in &table.days {
            let (p, l) = (day.score_column(h, n_h), day.label_column(h, n_h));
            let (ic, ric) = (daily_ic(&p, &l), rank_ic(&p, &l));
            daily.push(DailyRecord {
                date: day.date,
                horizon,
                ic,
                rank_ic: ric,
            });
            ics.push(ic);
            ranks.push(ric);
        }
        let n_days = ics.iter().flatten().count();
        horizons.push(HorizonMetrics {
            horizon,
            ic: mean_defined(&ics),
            icir: icir(&ics),
            rank_ic: mean_defined(&ranks),
            n_days,
            n_excluded: ics.len() - n_days,
        });
    }
    daily.sort_by_key(|d| (d.date, d.horizon));
    MetricReport {
        tag: tag.to_string(),
        horizons,
        daily,
    }
}

/// Wide table, one row per report: `variant,ic_<h>,icir_<h>...`.
pub fn write_ablation_csv<W: Write>(reports: &[MetricReport], w: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(w);
    let Some(first) = reports.first() else {
        w.write_record(["variant"])?;
        w.flush().map_err(|e| DataError::Invalid(e.to_string()))?;
        return Ok(());
    };
    let mut header = vec!["variant".to_string()];
    for m in &first.horizons {
        header.push(format!("ic_{}", m.horizon));
        header.push(format!("icir_{}", m.horizon));
    }
    w.write_record(&header)?;
    for r in reports {
        let mut rec = vec![r.tag.clone()];
        for m in &r.horizons {
            rec.push(opt(m.ic));
            rec.push(opt(m.icir));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| DataError::Invalid(e.to_string()))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recovery {
    /// Mean over true factors of the best absolute correlation with any
    /// learned exposure column.
    pub max_corr: f64,
    /// Same, but each learned column may be matched to one true factor only.
    pub greedy: f64,
    /// Best absolute correlation per true factor.
    pub per_factor: Vec<f64>,
}

/// Scores how well learned soft exposures `N x M` span true loadings
/// `N x M*`. Constant learned columns are ignored; unmatched true factors
/// contribute 0.
pub fn hidden_recovery(learned: &Tensor, truth: &Tensor) -> Result<Recovery, DataError> {
    let (n, m) = learned
        .dims2()
        .map_err(|e| DataError::Invalid(e.to_string()))?;
    let (n2, mt) = truth.dims2().map_err(|e| DataError::Invalid(e.to_string()))?;
    if n != n2 {
        return Err(DataError::Invalid(format!(
            "learned exposures cover {n} stocks, truth {n2}"
        )));
    }
    if mt == 0 {
        return Err(DataError::Invalid("no true hidden factors".into()));
    }
    let col = |t: &Tensor, j: usize, w: usize| -> Vec<f64> { (0..n).map(|i| t.data()[i * w + j]).collect() };
    let truth_cols: Vec<Vec<f64>> = (0..mt).map(|j| col(truth, j, mt)).collect();
    // |corr| per (true, learned); None for constant learned columns
    let corr: Vec<Vec<Option<f64>>> = truth_cols
        .iter()
        .map(|tc| (0..m).map(|j| pearson(tc, &col(learned, j, m)).map(f64::abs)).collect())
        .collect();
    let per_factor: Vec<f64> = corr
        .iter()
        .map(|row| row.iter().flatten().fold(0.0f64, |a, b| a.max(*b)))
        .collect();
    let mut pairs: Vec<(f64, usize, usize)> = corr
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().filter_map(move |(j, c)| c.map(|c| (c, i, j))))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let (mut used_t, mut used_l) = (vec![false; mt], vec![false; m]);
    let mut greedy = 0.0;
    for (c, i, j) in pairs {
        if !used_t[i] && !used_l[j] {
            used_t[i] = true;
            used_l[j] = true;
            greedy += c;
        }
    }
    Ok(Recovery {
        max_corr: per_factor.iter().sum::<f64>() / mt as f64,
        greedy: greedy / mt as f64,
        per_factor,
    })
}
