//! TopK long-only simulation with staggered holding tranches.
//!
//! Capital is split into `delta_t` tranches. The signal of the `j`-th
//! prediction day rebalances tranche `j mod delta_t` into the equal-weighted
//! top-k stocks by score (ties: higher score first, then ticker ascending).
//! Orders fill at the next day's vwap and every position earns vwap-to-vwap
//! returns. A rebalance costs `cost_rate * |target - current|` of traded
//! notional, which charges both the sell and the buy side.
//!
//! Curves CSV: `date,cr,cer,turnover` with arithmetic cumulative sums.
//! Compounded CSV: `date,cr,cer`. Metrics CSV: `metric,value`.

use std::collections::HashMap;
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dataio::{format_decimal, DataError, Field, MarketPanel, DATE_FORMAT};
use crate::eval::PredictionTable;

#[derive(Debug, thiserror::Error)]
pub enum BacktestError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Precondition(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    /// Mean vwap-to-vwap return of every stock tradable on both days.
    EqualWeight,
    /// Daily benchmark returns by date; days not listed count as 0.
    External(Vec<(NaiveDate, f64)>),
}

impl Default for Benchmark {
    fn default() -> Self {
        Benchmark::EqualWeight
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    pub topk: usize,
    pub delta_t: usize,
    /// Fraction of traded notional charged per side.
    pub cost_rate: f64,
    pub trading_days_per_year: usize,
    /// Prediction horizon whose scores rank stocks; defaults to `delta_t`
    /// when available, otherwise the first horizon.
    pub horizon: Option<usize>,
    pub benchmark: Benchmark,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            topk: 30,
            delta_t: 10,
            cost_rate: 0.003,
            trading_days_per_year: 252,
            horizon: None,
            benchmark: Benchmark::EqualWeight,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<(), BacktestError> {
        if self.topk == 0 || self.delta_t == 0 || self.trading_days_per_year == 0 {
            return Err(BacktestError::Config(
                "topk, delta_t and trading_days_per_year must be at least 1".into(),
            ));
        }
        if !(self.cost_rate >= 0.0 && self.cost_rate.is_finite()) {
            return Err(BacktestError::Config(format!(
                "cost_rate must be non-negative, got {}",
                self.cost_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub ar: f64,
    pub ir: Option<f64>,
    pub romad: Option<f64>,
    pub max_drawdown: f64,
}

/// Running sum starting from 0: `[0, x0, x0 + x1, ...]`.
pub fn cumulative(series: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len() + 1);
    let mut acc = 0.0;
    out.push(acc);
    for v in series {
        acc += v;
        out.push(acc);
    }
    out
}

/// Largest peak-to-trough fall of a curve.
pub fn max_drawdown(curve: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut dd = 0.0f64;
    for &v in curve {
        peak = peak.max(v);
        dd = dd.max(peak - v);
    }
    dd
}

/// Final value over maximum drawdown of a curve; `None` without drawdown.
pub fn romad(curve: &[f64]) -> Option<f64> {
    let dd = max_drawdown(curve);
    let last = *curve.last()?;
    (dd > 0.0).then(|| last / dd)
}

/// AR, IR and RoMaD of a daily excess-return series.
pub fn report_metrics(excess: &[f64], days_per_year: usize) -> Result<Metrics, BacktestError> {
    if excess.len() < 2 {
        return Err(BacktestError::Precondition(format!(
            "metrics need at least 2 days, got {}",
            excess.len()
        )));
    }
    let n = excess.len() as f64;
    let mean = excess.iter().sum::<f64>() / n;
    let sd = (excess.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let year = days_per_year as f64;
    let ar = mean * year;
    let scale = excess.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let ir = (sd > 64.0 * f64::EPSILON * scale).then(|| ar / (sd * year.sqrt()));
    let curve = cumulative(excess);
    Ok(Metrics {
        ar,
        ir,
        romad: romad(&curve),
        max_drawdown: max_drawdown(&curve),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestReport {
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
    pub benchmark: Vec<f64>,
    pub excess: Vec<f64>,
    /// Arithmetic cumulative return, one entry per date.
    pub cr: Vec<f64>,
    /// Arithmetic cumulative excess return, one entry per date.
    pub cer: Vec<f64>,
    pub cr_compound: Vec<f64>,
    pub cer_compound: Vec<f64>,
    /// Traded notional over portfolio value.
    pub turnover: Vec<f64>,
    pub costs: Vec<f64>,
    /// Skipped selections and other notable events.
    pub events: Vec<String>,
    pub metrics: Metrics,
}

impl BacktestReport {
    /// `date,cr,cer,turnover`, starting with a zero row on the day before
    /// the first return.
    pub fn write_curves_csv<W: Write>(&self, w: W, start: NaiveDate) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["date", "cr", "cer", "turnover"])?;
        w.write_record([start.format(DATE_FORMAT).to_string(), "0".into(), "0".into(), "0".into()])?;
        for k in 0..self.dates.len() {
            w.write_record([
                self.dates[k].format(DATE_FORMAT).to_string(),
                format_decimal(self.cr[k]),
                format_decimal(self.cer[k]),
                format_decimal(self.turnover[k]),
            ])?;
        }
        w.flush().map_err(|e| DataError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn write_compound_csv<W: Write>(&self, w: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["date", "cr", "cer"])?;
        for k in 0..self.dates.len() {
            w.write_record([
                self.dates[k].format(DATE_FORMAT).to_string(),
                format_decimal(self.cr_compound[k]),
                format_decimal(self.cer_compound[k]),
            ])?;
        }
        w.flush().map_err(|e| DataError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn write_metrics_csv<W: Write>(&self, w: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["metric", "value"])?;
        let opt = |v: Option<f64>| v.map(format_decimal).unwrap_or_default();
        let m = &self.metrics;
        let rows = [
            ("ar", Some(m.ar)),
            ("ir", m.ir),
            ("romad", m.romad),
            ("max_drawdown", Some(m.max_drawdown)),
            ("final_cr", self.cr.last().copied()),
            ("final_cer", self.cer.last().copied()),
            ("days", Some(self.dates.len() as f64)),
        ];
        for (k, v) in rows {
            w.write_record([k.to_string(), opt(v)])?;
        }
        w.flush().map_err(|e| DataError::Invalid(e.to_string()))?;
        Ok(())
    }
}

#[derive(Clone, Default)]
struct Tranche {
    value: f64,
    /// Stock index -> fraction of tranche value.
    weights: Vec<(usize, f64)>,
}

fn vwap_return(panel: &MarketPanel, t: usize, s: usize) -> Option<f64> {
    if t == 0 || !panel.is_valid(t, s) || !panel.is_valid(t - 1, s) {
        return None;
    }
    let prev = panel.get(t - 1, s, Field::Vwap);
    (prev > 0.0).then(|| panel.get(t, s, Field::Vwap) / prev - 1.0)
}

/// Simulates the strategy over the prediction dates.
pub fn run_topk(
    predictions: &PredictionTable,
    panel: &MarketPanel,
    config: &BacktestConfig,
) -> Result<BacktestReport, BacktestError> {
    config.validate()?;
    let h = match config.horizon {
        Some(h) => predictions.horizon_index(h).ok_or_else(|| {
            BacktestError::Config(format!("predictions have no horizon {h}"))
        })?,
        None => predictions.horizon_index(config.delta_t).unwrap_or(0),
    };
    let n_h = predictions.horizons.len();
    if n_h == 0 || predictions.days.is_empty() {
        return Err(BacktestError::Precondition("no predictions".into()));
    }
    let n_dates = panel.n_dates();
    // signal date index -> ranked stock indices
    let mut signals: Vec<(usize, Vec<usize>)> = Vec::with_capacity(predictions.days.len());
    for day in &predictions.days {
        let t = panel.date_index(day.date).ok_or_else(|| {
            BacktestError::Precondition(format!("prediction date {} not in panel", day.date))
        })?;
        if day.n_stocks() < config.topk {
            return Err(BacktestError::Precondition(format!(
                "{}: {} stocks predicted, topk is {}",
                day.date,
                day.n_stocks(),
                config.topk
            )));
        }
        let mut ranked: Vec<(f64, &str, usize)> = Vec::with_capacity(day.n_stocks());
        for (i, ticker) in day.tickers.iter().enumerate() {
            let s = panel.ticker_index(ticker).ok_or_else(|| {
                BacktestError::Precondition(format!("ticker {ticker} not in panel"))
            })?;
            ranked.push((day.scores[i * n_h + h], ticker.as_str(), s));
        }
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        if signals.last().is_some_and(|(prev, _)| *prev >= t) {
            return Err(BacktestError::Precondition("prediction dates must increase".into()));
        }
        signals.push((t, ranked.into_iter().map(|r| r.2).collect()));
    }
    let first = signals[0].0;
    let last_day = (signals.last().expect("nonempty").0 + 1).min(n_dates - 1);
    if last_day <= first {
        return Err(BacktestError::Precondition("no trading day after the first signal".into()));
    }
    let by_day: HashMap<usize, usize> = signals.iter().enumerate().map(|(j, (t, _))| (*t, j)).collect();
    let external: HashMap<NaiveDate, f64> = match &config.benchmark {
        Benchmark::External(series) => series.iter().copied().collect(),
        Benchmark::EqualWeight => HashMap::new(),
    };

    let dt = config.delta_t;
    let mut tranches = vec![
        Tranche {
            value: 1.0 / dt as f64,
            weights: Vec::new(),
        };
        dt
    ];
    let mut report = BacktestReport {
        dates: Vec::new(),
        returns: Vec::new(),
        benchmark: Vec::new(),
        excess: Vec::new(),
        cr: Vec::new(),
        cer: Vec::new(),
        cr_compound: Vec::new(),
        cer_compound: Vec::new(),
        turnover: Vec::new(),
        costs: Vec::new(),
        events: Vec::new(),
        metrics: Metrics {
            ar: 0.0,
            ir: None,
            romad: None,
            max_drawdown: 0.0,
        },
    };
    for t in first + 1..=last_day {
        let before: f64 = tranches.iter().map(|tr| tr.value).sum();
        for tr in tranches.iter_mut() {
            if tr.weights.is_empty() {
                continue;
            }
            // weights drift with prices; any uninvested fraction stays cash
            let cash = 1.0 - tr.weights.iter().map(|(_, w)| w).sum::<f64>();
            for (s, w) in tr.weights.iter_mut() {
                *w *= 1.0 + vwap_return(panel, t, *s).unwrap_or(0.0);
            }
            let growth = cash + tr.weights.iter().map(|(_, w)| w).sum::<f64>();
            if growth > 0.0 {
                for (_, w) in tr.weights.iter_mut() {
                    *w /= growth;
                }
            }
            tr.value *= growth;
        }
        // orders from yesterday's signal fill at today's vwap
        let (mut turnover, mut cost) = (0.0, 0.0);
        if let Some(&j) = by_day.get(&(t - 1)) {
            let k = j % dt;
            let mut picked = Vec::with_capacity(config.topk);
            for &s in signals[j].1.iter().take(config.topk) {
                if panel.is_valid(t, s) && panel.get(t, s, Field::Vwap) > 0.0 {
                    picked.push(s);
                } else {
                    let msg = format!(
                        "{}: {} untradable, skipped",
                        panel.dates()[t].format(DATE_FORMAT),
                        panel.tickers()[s]
                    );
                    log::warn!("{msg}");
                    report.events.push(msg);
                }
            }
            if !picked.is_empty() {
                let tr = &mut tranches[k];
                let target = 1.0 / picked.len() as f64;
                let mut traded = 0.0;
                for &(s, w) in &tr.weights {
                    let goal = if picked.contains(&s) { target } else { 0.0 };
                    traded += (goal - w).abs();
                }
                for &s in &picked {
                    if !tr.weights.iter().any(|(h, _)| *h == s) {
                        traded += target;
                    }
                }
                let c = config.cost_rate * traded * tr.value;
                turnover += traded * tr.value;
                cost += c;
                tr.value -= c;
                tr.weights = picked.iter().map(|&s| (s, target)).collect();
            }
        }
        let after: f64 = tranches.iter().map(|tr| tr.value).sum();
        let r = after / before - 1.0;
        let bench = match &config.benchmark {
            Benchmark::EqualWeight => {
                let rs: Vec<f64> = (0..panel.n_stocks()).filter_map(|s| vwap_return(panel, t, s)).collect();
                if rs.is_empty() {
                    0.0
                } else {
                    rs.iter().sum::<f64>() / rs.len() as f64
                }
            }
            Benchmark::External(_) => external.get(&panel.dates()[t]).copied().unwrap_or(0.0),
        };
        report.dates.push(panel.dates()[t]);
        report.returns.push(r);
        report.benchmark.push(bench);
        report.excess.push(r - bench);
        report.turnover.push(turnover / before);
        report.costs.push(cost / before);
    }
    report.cr = cumulative(&report.returns)[1..].to_vec();
    report.cer = cumulative(&report.excess)[1..].to_vec();
    let (mut gp, mut gb) = (1.0, 1.0);
    for k in 0..report.dates.len() {
        gp *= 1.0 + report.returns[k];
        gb *= 1.0 + report.benchmark[k];
        report.cr_compound.push(gp - 1.0);
        report.cer_compound.push(gp / gb - 1.0);
    }
    report.metrics = if report.excess.len() >= 2 {
        report_metrics(&report.excess, config.trading_days_per_year)?
    } else {
        Metrics {
            ar: report.excess.first().copied().unwrap_or(0.0) * config.trading_days_per_year as f64,
            ir: None,
            romad: None,
            max_drawdown: 0.0,
        }
    };
    Ok(report)
}
