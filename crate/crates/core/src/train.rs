//! Optimization loop, early stopping and the rolling train/valid/test
//! protocol.
//!
//! Every window read made while training is recorded with its purpose so
//! callers can audit that parameter updates only ever saw training dates.

use std::io::Write;
use std::ops::Range;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{
    build_inference_batch, build_window_batch, compute_labels, format_decimal, DataError,
    MarketPanel, PriorExposure, RawLabels, ReadSpan, SplitPlan, SplitTriple, WindowBatch,
};
use crate::diffcore::{Tape, Tensor};
use crate::eval::{daily_ic, hidden_recovery, mean_defined, DayPredictions, PredictionTable, Recovery};
use crate::model::{
    forward, forward_future, infer, Extractor, Mode, ModelConfig, ModelError, ModelParams,
};
use crate::objective::{pair_similarities, projection_head, total_loss, LossBreakdown};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("config: {0}")]
    Config(String),
    #[error("no usable {0} days")]
    NoDays(&'static str),
    #[error("loss diverged at epoch {epoch}, date index {anchor} (first non-finite op: {op})")]
    Divergence {
        epoch: usize,
        anchor: usize,
        op: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Global gradient-norm ceiling.
    pub grad_clip: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Training days drawn (without replacement) per epoch; 0 means all.
    pub days_per_epoch: usize,
    /// Validation days per epoch, evenly spaced; 0 means all.
    pub valid_days: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            max_epochs: 30,
            patience: 5,
            grad_clip: 3.0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            days_per_epoch: 0,
            valid_days: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be a non-negative number, got {}", self.lr));
        }
        if self.patience == 0 || self.max_epochs == 0 {
            return bad("patience and max_epochs must be at least 1".into());
        }
        if !(self.grad_clip > 0.0) {
            return bad(format!("grad_clip must be positive, got {}", self.grad_clip));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.adam_eps > 0.0) {
            return bad("Adam betas must lie in [0, 1) and eps must be positive".into());
        }
        Ok(())
    }
}

/// A panel with its prior exposures and raw labels for the model horizons.
pub struct TrainData<'a> {
    pub panel: &'a MarketPanel,
    pub prior: &'a PriorExposure,
    pub labels: RawLabels,
}

impl<'a> TrainData<'a> {
    pub fn new(panel: &'a MarketPanel, prior: &'a PriorExposure, horizons: &[usize]) -> Self {
        Self {
            panel,
            prior,
            labels: compute_labels(panel, horizons),
        }
    }

    fn max_horizon(&self) -> usize {
        self.labels.horizons().iter().copied().max().unwrap_or(0)
    }

    /// Anchors in `range` whose past window, future window and labels all
    /// fall inside `range`'s history, so a fit step never reads past
    /// `range.end - 1`.
    pub fn fit_anchors(&self, range: &Range<usize>, config: &ModelConfig) -> Vec<usize> {
        let reach = config.future_len.max(self.max_horizon() + 1);
        range
            .clone()
            .filter(|&a| a + 1 >= config.past_len && a + reach < range.end)
            .collect()
    }

    /// Anchors in `range` whose labels are complete before `range.end`.
    pub fn valid_anchors(&self, range: &Range<usize>, config: &ModelConfig) -> Vec<usize> {
        let reach = self.max_horizon() + 1;
        range
            .clone()
            .filter(|&a| a + 1 >= config.past_len && a + reach < range.end)
            .collect()
    }

    /// Every anchor in `range` with a full past window.
    pub fn test_anchors(&self, range: &Range<usize>, config: &ModelConfig) -> Vec<usize> {
        range
            .clone()
            .filter(|&a| a + 1 >= config.past_len && a < self.panel.n_dates())
            .collect()
    }

    /// Past window, labels and the future window; the future window is
    /// dropped when the contrastive term is off but still counts as read.
    pub fn fit_batch(&self, anchor: usize, config: &ModelConfig) -> Result<WindowBatch, DataError> {
        let mut b = build_window_batch(
            self.panel,
            &self.labels,
            self.prior,
            anchor,
            config.past_len,
            config.future_len,
        )?;
        if !config.needs_future() {
            b.x_future = None;
        }
        Ok(b)
    }

    pub fn eval_batch(&self, anchor: usize, config: &ModelConfig) -> Result<WindowBatch, DataError> {
        build_inference_batch(self.panel, Some(&self.labels), self.prior, anchor, config.past_len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    /// Read by a step that updates parameters.
    Fit,
    /// Read by an early-stopping evaluation.
    Validate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessRecord {
    pub purpose: Purpose,
    pub anchor: usize,
    pub reads: ReadSpan,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    pub skipped: usize,
    /// Means over the epoch's steps.
    pub loss: LossBreakdown,
    pub valid_ic: Vec<Option<f64>>,
    pub mean_valid_ic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainLog {
    pub horizons: Vec<usize>,
    pub epochs: Vec<EpochLog>,
    /// Epoch whose parameters were returned.
    pub selected_epoch: usize,
    pub stopped_early: bool,
    #[serde(skip)]
    pub access: Vec<AccessRecord>,
}

impl TrainLog {
    /// Last date index read by any parameter-updating step.
    pub fn last_fit_read(&self) -> Option<usize> {
        self.access
            .iter()
            .filter(|r| r.purpose == Purpose::Fit)
            .map(|r| r.reads.last)
            .max()
    }

    /// `epoch,steps,mse,cl,total,valid_ic_<h>...,mean_valid_ic,selected`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(w);
        let mut header: Vec<String> = ["epoch", "steps", "mse", "cl", "total"].map(String::from).to_vec();
        header.extend(self.horizons.iter().map(|h| format!("valid_ic_{h}")));
        header.push("mean_valid_ic".into());
        header.push("selected".into());
        w.write_record(&header)?;
        let opt = |v: Option<f64>| v.map(format_decimal).unwrap_or_default();
        for e in &self.epochs {
            let mut rec = vec![
                e.epoch.to_string(),
                e.steps.to_string(),
                format_decimal(e.loss.mse),
                format_decimal(e.loss.cl),
                format_decimal(e.loss.total),
            ];
            rec.extend(e.valid_ic.iter().map(|v| opt(*v)));
            rec.push(opt(e.mean_valid_ic));
            rec.push(u8::from(e.epoch == self.selected_epoch).to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| DataError::Invalid(e.to_string()))?;
        Ok(())
    }
}

struct Adam {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: i32,
}

impl Adam {
    fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, params: &mut ModelParams, grads: &IndexMap<String, Tensor>, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for (k, ((_, p), g)) in params.iter_mut().zip(grads.values()).enumerate() {
            let (m, v) = (self.m[k].data_mut(), self.v[k].data_mut());
            for (((pi, gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
                *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
                *pi -= cfg.lr * (*mi / c1) / ((*vi / c2).sqrt() + cfg.adam_eps);
            }
        }
    }
}

/// Scales all gradients so their joint L2 norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_global_norm(grads: &mut IndexMap<String, Tensor>, max_norm: f64) -> f64 {
    let norm = grads
        .values()
        .flat_map(|g| g.data().iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.values_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

/// One optimization step on one day. Returns the loss breakdown.
fn fit_step(
    params: &mut ModelParams,
    adam: &mut Adam,
    batch: &WindowBatch,
    tcfg: &TrainConfig,
    epoch: usize,
) -> Result<LossBreakdown, TrainError> {
    let cfg = params.config().clone();
    let labels = batch
        .label_tensor()
        .ok_or_else(|| DataError::Invalid(format!("fit day {} lacks labels", batch.anchor)))?;
    let tape = Tape::new();
    let (grads, breakdown, past_stats, future_stats) = {
        let bound = params.bind(&tape);
        let out = forward(&tape, &bound, &batch.x, &batch.prior, Mode::Train)?;
        let fut = match (&batch.x_future, cfg.needs_future()) {
            (Some(xf), true) => Some(forward_future(&tape, &bound, xf, &batch.prior, out.beta_h.as_ref(), Mode::Train)?),
            _ => None,
        };
        let (total, breakdown) = total_loss(&bound, &out, fut.as_ref(), &labels, cfg.effective_gamma())?;
        if !breakdown.total.is_finite() {
            return Err(TrainError::Divergence {
                epoch,
                anchor: batch.anchor,
                op: tape.fault().unwrap_or("unknown").to_string(),
            });
        }
        let g = tape.backward(&total).map_err(ModelError::from)?;
        let grads = bound.gradients(&g);
        (grads, breakdown, out.bn_stats, fut.map(|f| f.bn_stats))
    };
    let mut grads = grads;
    let norm = clip_global_norm(&mut grads, tcfg.grad_clip);
    if !norm.is_finite() {
        return Err(TrainError::Divergence {
            epoch,
            anchor: batch.anchor,
            op: "gradient".into(),
        });
    }
    adam.step(params, &grads, tcfg);
    params.update_running_stats(Extractor::Past, &past_stats)?;
    if let Some(s) = future_stats {
        params.update_running_stats(Extractor::Future, &s)?;
    }
    Ok(breakdown)
}

/// Mean daily IC per horizon over `anchors`, using eval-mode forwards.
pub fn validate_epoch(
    params: &ModelParams,
    data: &TrainData<'_>,
    anchors: &[usize],
    mut record: impl FnMut(&WindowBatch),
) -> Result<Vec<Option<f64>>, TrainError> {
    let n_h = params.config().n_horizons();
    let mut daily: Vec<Vec<Option<f64>>> = vec![Vec::new(); n_h];
    for &a in anchors {
        let batch = match data.eval_batch(a, params.config()) {
            Ok(b) => b,
            Err(DataError::TooFewStocks { .. }) => continue,
            Err(e) => return Err(e.into()),
        };
        record(&batch);
        let pred = infer(params, &batch.x, &batch.prior)?.pred;
        for (h, series) in daily.iter_mut().enumerate() {
            let p: Vec<f64> = (0..batch.n_stocks()).map(|i| pred.at(i, h)).collect();
            let l: Vec<Option<f64>> = (0..batch.n_stocks()).map(|i| batch.label(i, h)).collect();
            series.push(daily_ic(&p, &l));
        }
    }
    Ok(daily.iter().map(|s| mean_defined(s)).collect())
}

fn even_subset(anchors: Vec<usize>, k: usize) -> Vec<usize> {
    if k == 0 || k >= anchors.len() {
        return anchors;
    }
    (0..k).map(|i| anchors[i * anchors.len() / k]).collect()
}

/// Trains on `triple.train`, early-stops on `triple.valid` and returns the
/// parameters of the best validation epoch.
pub fn train_window(
    data: &TrainData<'_>,
    triple: &SplitTriple,
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<(ModelParams, TrainLog), TrainError> {
    tcfg.validate()?;
    if data.labels.horizons() != mcfg.horizons.as_slice() {
        return Err(TrainError::Config("label horizons differ from the model horizons".into()));
    }
    let fit = data.fit_anchors(&triple.train, mcfg);
    if fit.is_empty() {
        return Err(TrainError::NoDays("training"));
    }
    let valid = even_subset(data.valid_anchors(&triple.valid, mcfg), tcfg.valid_days);
    if valid.is_empty() {
        return Err(TrainError::NoDays("validation"));
    }
    let mut params = ModelParams::init(mcfg)?;
    let mut adam = Adam::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut log = TrainLog {
        horizons: mcfg.horizons.clone(),
        epochs: Vec::new(),
        selected_epoch: 0,
        stopped_early: false,
        access: Vec::new(),
    };
    let mut best: Option<(f64, ModelParams)> = None;
    let mut stale = 0;
    for epoch in 0..tcfg.max_epochs {
        let mut order = fit.clone();
        order.shuffle(&mut rng);
        if tcfg.days_per_epoch > 0 {
            order.truncate(tcfg.days_per_epoch);
        }
        let mut sums = LossBreakdown {
            mse: 0.0,
            cl: 0.0,
            total: 0.0,
            per_horizon_mse: vec![0.0; mcfg.n_horizons()],
        };
        let (mut steps, mut skipped) = (0, 0);
        for &a in &order {
            let batch = match data.fit_batch(a, mcfg) {
                Ok(b) => b,
                Err(DataError::TooFewStocks { got, .. }) => {
                    log::warn!("skipping training day {a}: only {got} usable stocks");
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            log.access.push(AccessRecord {
                purpose: Purpose::Fit,
                anchor: a,
                reads: batch.reads,
            });
            let b = fit_step(&mut params, &mut adam, &batch, tcfg, epoch)?;
            sums.mse += b.mse;
            sums.cl += b.cl;
            sums.total += b.total;
            sums.per_horizon_mse.iter_mut().zip(&b.per_horizon_mse).for_each(|(s, v)| *s += v);
            steps += 1;
        }
        let denom = steps.max(1) as f64;
        sums.mse /= denom;
        sums.cl /= denom;
        sums.total /= denom;
        sums.per_horizon_mse.iter_mut().for_each(|v| *v /= denom);

        let access = &mut log.access;
        let valid_ic = validate_epoch(&params, data, &valid, |b| {
            access.push(AccessRecord {
                purpose: Purpose::Validate,
                anchor: b.anchor,
                reads: b.reads,
            })
        })?;
        let mean_valid_ic = mean_defined(&valid_ic);
        log::info!("epoch {epoch}: loss {:.6} valid IC {:?}", sums.total, mean_valid_ic);
        log.epochs.push(EpochLog {
            epoch,
            steps,
            skipped,
            loss: sums,
            valid_ic,
            mean_valid_ic,
        });
        let score = mean_valid_ic.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().map_or(true, |(s, _)| score > *s) {
            best = Some((score, params.clone()));
            log.selected_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= tcfg.patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    let (_, best) = best.expect("at least one epoch ran");
    Ok((best, log))
}

/// Eval-mode predictions for every usable anchor in `range`.
pub fn predict_range(
    params: &ModelParams,
    data: &TrainData<'_>,
    range: &Range<usize>,
) -> Result<PredictionTable, TrainError> {
    let cfg = params.config();
    let n_h = cfg.n_horizons();
    let mut table = PredictionTable::new(cfg.horizons.clone());
    for a in data.test_anchors(range, cfg) {
        let batch = match data.eval_batch(a, cfg) {
            Ok(b) => b,
            Err(DataError::TooFewStocks { got, .. }) => {
                log::warn!("no predictions for date index {a}: only {got} usable stocks");
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let pred = infer(params, &batch.x, &batch.prior)?.pred;
        let tickers = batch.stocks.iter().map(|&s| data.panel.tickers()[s].clone()).collect();
        let labels = (0..batch.n_stocks())
            .flat_map(|i| (0..n_h).map(move |h| (i, h)))
            .map(|(i, h)| batch.label(i, h))
            .collect();
        table.days.push(DayPredictions {
            date: batch.anchor_date,
            tickers,
            scores: pred.into_data(),
            labels,
        });
    }
    Ok(table)
}

/// Hidden exposures averaged over every usable anchor in `range`, one row
/// per panel stock (rows never seen stay 0). `None` for variants without
/// the hidden module.
pub fn mean_hidden_exposures(
    params: &ModelParams,
    data: &TrainData<'_>,
    range: &Range<usize>,
) -> Result<Option<Tensor>, TrainError> {
    let cfg = params.config();
    if !cfg.variant.uses_hidden() {
        return Ok(None);
    }
    let (n, m) = (data.panel.n_stocks(), cfg.n_factors);
    let mut sum = vec![0.0; n * m];
    let mut count = vec![0usize; n];
    for a in data.test_anchors(range, cfg) {
        let batch = match data.eval_batch(a, cfg) {
            Ok(b) => b,
            Err(DataError::TooFewStocks { .. }) => continue,
            Err(e) => return Err(e.into()),
        };
        let Some(beta) = infer(params, &batch.x, &batch.prior)?.beta_h else {
            return Ok(None);
        };
        for (row, &s) in batch.stocks.iter().enumerate() {
            count[s] += 1;
            for j in 0..m {
                sum[s * m + j] += beta.at(row, j);
            }
        }
    }
    for s in 0..n {
        if count[s] > 0 {
            for v in &mut sum[s * m..(s + 1) * m] {
                *v /= count[s] as f64;
            }
        }
    }
    Ok(Some(Tensor::matrix(n, m, sum).map_err(ModelError::from)?))
}

/// Recovery of `truth` (`panel stocks x M*`) by each day's hidden exposures
/// over the usable anchors in `range`. Empty for variants without the
/// hidden module.
pub fn daily_hidden_recovery(
    params: &ModelParams,
    data: &TrainData<'_>,
    range: &Range<usize>,
    truth: &Tensor,
) -> Result<Vec<Recovery>, TrainError> {
    let cfg = params.config();
    let mut out = Vec::new();
    if !cfg.variant.uses_hidden() {
        return Ok(out);
    }
    let (_, mt) = truth.dims2().map_err(ModelError::from)?;
    for a in data.test_anchors(range, cfg) {
        let batch = match data.eval_batch(a, cfg) {
            Ok(b) => b,
            Err(DataError::TooFewStocks { .. }) => continue,
            Err(e) => return Err(e.into()),
        };
        let Some(beta) = infer(params, &batch.x, &batch.prior)?.beta_h else {
            break;
        };
        let rows: Vec<f64> = batch.stocks.iter().flat_map(|&s| truth.row(s).to_vec()).collect();
        let t = Tensor::matrix(batch.n_stocks(), mt, rows).map_err(ModelError::from)?;
        out.push(hidden_recovery(&beta, &t)?);
    }
    Ok(out)
}

/// Mean cosine similarity of projected positive (past, future) alpha pairs
/// and of negative pairs, averaged over the anchors in `range` whose future
/// window is complete. Eval-mode forwards throughout.
pub fn contrastive_gap(
    params: &ModelParams,
    data: &TrainData<'_>,
    range: &Range<usize>,
) -> Result<(f64, f64), TrainError> {
    let cfg = params.config();
    let (mut pos, mut neg, mut days) = (0.0, 0.0, 0usize);
    for a in data.test_anchors(range, cfg) {
        if a + cfg.future_len >= data.panel.n_dates() {
            continue;
        }
        let batch = match build_window_batch(
            data.panel,
            &data.labels,
            data.prior,
            a,
            cfg.past_len,
            cfg.future_len,
        ) {
            Ok(b) => b,
            Err(DataError::TooFewStocks { .. } | DataError::Window { .. }) => continue,
            Err(e) => return Err(e.into()),
        };
        let Some(xf) = batch.x_future.as_ref() else { continue };
        let tape = Tape::new();
        let bound = params.bind(&tape);
        let out = forward(&tape, &bound, &batch.x, &batch.prior, Mode::Eval)?;
        let fut = forward_future(&tape, &bound, xf, &batch.prior, out.beta_h.as_ref(), Mode::Eval)?;
        let p = projection_head(&bound, &out.e_alpha)?.value();
        let q = projection_head(&bound, &fut.e_alpha)?.value();
        let (sp, sn) = pair_similarities(&p, &q)?;
        pos += sp;
        neg += sn;
        days += 1;
    }
    if days == 0 {
        return Err(TrainError::NoDays("contrastive evaluation"));
    }
    Ok((pos / days as f64, neg / days as f64))
}

#[derive(Debug, Clone)]
pub struct TripleRun {
    pub triple: SplitTriple,
    pub params: ModelParams,
    pub log: TrainLog,
}

#[derive(Debug, Clone)]
pub struct RollingOutcome {
    pub predictions: PredictionTable,
    pub runs: Vec<TripleRun>,
}

/// One model per triple; test predictions concatenated in date order.
pub fn run_rolling(
    data: &TrainData<'_>,
    plan: &SplitPlan,
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<RollingOutcome, TrainError> {
    let mut predictions = PredictionTable::new(mcfg.horizons.clone());
    let mut runs = Vec::with_capacity(plan.triples.len());
    for (k, triple) in plan.triples.iter().enumerate() {
        log::info!("triple {k}: train {:?} valid {:?} test {:?}", triple.train, triple.valid, triple.test);
        let (params, log) = train_window(data, triple, mcfg, tcfg)?;
        let table = predict_range(&params, data, &triple.test)?;
        predictions.days.extend(table.days);
        runs.push(TripleRun {
            triple: triple.clone(),
            params,
            log,
        });
    }
    Ok(RollingOutcome { predictions, runs })
}
