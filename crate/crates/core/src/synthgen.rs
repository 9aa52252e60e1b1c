//! Synthetic market with a known linear factor structure.
//!
//! Daily returns are `r = beta * z_prior + B * z_hidden + alpha` where `beta`
//! is one-hot industry membership, `B` holds fixed hidden loadings drawn from
//! Beta(2, 2), factor returns follow a stationary AR(1) and `alpha` is i.i.d.
//! Gaussian. Prices compound from 100.

use std::io::Write;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataio::{format_decimal, Bar, DataError, MarketPanel, PriorExposure, DATE_FORMAT};
use crate::diffcore::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_stocks: usize,
    pub n_prior: usize,
    pub n_hidden: usize,
    pub days: usize,
    /// Stationary daily std of every factor return.
    pub factor_vol: f64,
    /// Daily std of the idiosyncratic return.
    pub idio_vol: f64,
    /// AR(1) coefficient of factor returns, in `[0, 1)`.
    pub persistence: f64,
    pub seed: u64,
    pub start: NaiveDate,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_stocks: 100,
            n_prior: 5,
            n_hidden: 4,
            days: 2520,
            factor_vol: 0.02,
            idio_vol: 0.01,
            persistence: 0.1,
            seed: 7,
            start: NaiveDate::from_ymd_opt(2014, 1, 1).expect("valid date"),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::Invalid(format!("synthetic spec: {m}")));
        if self.n_stocks < 4 {
            return bad("need at least 4 stocks");
        }
        if self.n_prior < 1 {
            return bad("need at least one prior factor");
        }
        if self.days < 2 {
            return bad("need at least 2 days");
        }
        if !(self.factor_vol >= 0.0 && self.idio_vol >= 0.0) {
            return bad("volatilities must be non-negative");
        }
        if !(0.0..1.0).contains(&self.persistence) {
            return bad("persistence must lie in [0, 1)");
        }
        Ok(())
    }
}

/// The generating parameters and paths behind a synthetic panel.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub prior: PriorExposure,
    /// Industry index of each stock.
    pub industry: Vec<usize>,
    /// `N x M` hidden loadings in `[0, 1]`.
    pub hidden: Tensor,
    /// `days x (K + M)` factor returns, prior factors first.
    pub factor_returns: Tensor,
    /// `days x N` idiosyncratic returns.
    pub alpha: Tensor,
    /// `days x N` realized returns; row 0 is zero since prices start there.
    pub returns: Tensor,
}

impl GroundTruth {
    pub fn n_hidden(&self) -> usize {
        self.hidden.shape()[1]
    }

    /// Hidden loadings of the given panel stocks, in that order.
    pub fn hidden_rows(&self, stocks: &[usize]) -> Tensor {
        let m = self.n_hidden();
        let mut out = Vec::with_capacity(stocks.len() * m);
        for &s in stocks {
            out.extend_from_slice(self.hidden.row(s));
        }
        Tensor::matrix(stocks.len(), m, out).expect("row selection keeps width")
    }

    /// `ticker,industry,hidden_0..hidden_{M-1}`.
    pub fn write_loadings<W: Write>(&self, w: W, tickers: &[String]) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(w);
        let m = self.n_hidden();
        let mut header = vec!["ticker".to_string(), "industry".to_string()];
        header.extend((0..m).map(|j| format!("hidden_{j}")));
        w.write_record(&header)?;
        for (s, t) in tickers.iter().enumerate() {
            let mut rec = vec![t.clone(), self.prior.factor_ids()[self.industry[s]].clone()];
            rec.extend(self.hidden.row(s).iter().map(|v| format_decimal(*v)));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| DataError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// `date,<prior factor ids>,hidden_0..hidden_{M-1}`.
    pub fn write_factor_returns<W: Write>(&self, w: W, dates: &[NaiveDate]) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(w);
        let mut header = vec!["date".to_string()];
        header.extend(self.prior.factor_ids().iter().cloned());
        header.extend((0..self.n_hidden()).map(|j| format!("hidden_{j}")));
        w.write_record(&header)?;
        for (d, date) in dates.iter().enumerate() {
            let mut rec = vec![date.format(DATE_FORMAT).to_string()];
            rec.extend(self.factor_returns.row(d).iter().map(|v| format_decimal(*v)));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| DataError::Invalid(e.to_string()))?;
        Ok(())
    }
}

/// `days` consecutive weekdays starting on or after `start`.
pub fn weekdays(start: NaiveDate, days: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(days);
    let mut d = start;
    while out.len() < days {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date in range");
    }
    out
}

pub fn generate_market(
    spec: &SynthSpec,
) -> Result<(MarketPanel, PriorExposure, GroundTruth), DataError> {
    spec.validate()?;
    let n = spec.n_stocks;
    let k = spec.n_prior;
    let m = spec.n_hidden;
    let days = spec.days;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = move |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };

    let industry: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    let factor_ids: Vec<String> = (0..k).map(|j| format!("IND{j:02}")).collect();
    let prior = PriorExposure::from_assignment(factor_ids, &industry)?;

    let beta22 = Beta::new(2.0, 2.0).expect("valid beta parameters");
    let hidden_data: Vec<f64> = (0..n * m).map(|_| beta22.sample(&mut rng)).collect();
    let hidden = Tensor::matrix(n, m, hidden_data).expect("dims");

    let f = k + m;
    let innov = spec.factor_vol * (1.0 - spec.persistence * spec.persistence).sqrt();
    let mut z = vec![0.0; days * f];
    for j in 0..f {
        z[j] = spec.factor_vol * normal(&mut rng);
    }
    for t in 1..days {
        for j in 0..f {
            z[t * f + j] = spec.persistence * z[(t - 1) * f + j] + innov * normal(&mut rng);
        }
    }
    let alpha: Vec<f64> = (0..days * n).map(|_| spec.idio_vol * normal(&mut rng)).collect();

    let mut returns = vec![0.0; days * n];
    for t in 1..days {
        for s in 0..n {
            let mut r = z[t * f + industry[s]];
            for j in 0..m {
                r += hidden.data()[s * m + j] * z[t * f + k + j];
            }
            returns[t * n + s] = r + alpha[t * n + s];
        }
    }

    const JITTER: f64 = 0.005;
    let mut bars: Vec<Bar> = Vec::with_capacity(days * n);
    let mut close = vec![100.0; n];
    for t in 0..days {
        for s in 0..n {
            let prev = close[s];
            if t > 0 {
                close[s] = prev * (1.0 + returns[t * n + s]);
            }
            let c = close[s];
            let open = prev * (1.0 + JITTER * 0.5 * normal(&mut rng)).max(0.5);
            let high = open.max(c) * (1.0 + JITTER * normal(&mut rng).abs());
            let low = open.min(c) * (1.0 - JITTER * normal(&mut rng).abs()).max(0.5);
            let volume = (13.8 + 0.5 * normal(&mut rng)).exp();
            bars.push([open, high, low, c, c, volume]);
        }
    }
    let dates = weekdays(spec.start, days);
    let tickers: Vec<String> = (0..n).map(|s| format!("S{s:04}")).collect();
    let panel = MarketPanel::from_bars(dates, tickers, bars)?;
    let truth = GroundTruth {
        prior: prior.clone(),
        industry,
        hidden,
        factor_returns: Tensor::matrix(days, f, z).expect("dims"),
        alpha: Tensor::matrix(days, n, alpha).expect("dims"),
        returns: Tensor::matrix(days, n, returns).expect("dims"),
    };
    Ok((panel, prior, truth))
}
