use super::{Bound, Extractor, Mode, ModelError, ModelParams};
use crate::diffcore::{BatchStats, NormMode, Tape, Tensor, Var};

/// All intermediates of the past-window pass.
#[derive(Debug, Clone)]
pub struct ForwardOut<'t> {
    pub e_s: Var<'t>,
    pub e_p: Var<'t>,
    pub e_r: Var<'t>,
    pub e_h: Var<'t>,
    pub e_alpha: Var<'t>,
    /// Soft hidden exposures; absent when the hidden module is disabled.
    pub beta_h: Option<Var<'t>>,
    /// `N x L` predictions.
    pub pred: Var<'t>,
    /// Train-mode batch statistics, one entry per time step.
    pub bn_stats: Vec<BatchStats>,
}

/// Intermediates of the future-window pass.
#[derive(Debug, Clone)]
pub struct FutureOut<'t> {
    pub e_s: Var<'t>,
    pub e_p: Var<'t>,
    pub e_r: Var<'t>,
    pub e_h: Var<'t>,
    /// Double residual `e'_s - e'_p - e'_h`.
    pub e_alpha: Var<'t>,
    pub bn_stats: Vec<BatchStats>,
}

/// Row `t` of each stock from an `N x T x D` tensor, as `N x D`.
fn time_slice(x: &Tensor, t: usize) -> Tensor {
    let (n, steps, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut out = Vec::with_capacity(n * d);
    for i in 0..n {
        let base = (i * steps + t) * d;
        out.extend_from_slice(&x.data()[base..base + d]);
    }
    Tensor::matrix(n, d, out).expect("dims")
}

/// Per-time-step batch norm on the inputs, then a single-layer GRU from a
/// zero state. Returns the final hidden state `N x H`.
pub fn feature_extract<'t>(
    tape: &'t Tape,
    bound: &Bound<'t, '_>,
    extractor: Extractor,
    x: &Tensor,
    mode: Mode,
) -> Result<(Var<'t>, Vec<BatchStats>), ModelError> {
    let cfg = bound.config();
    let pre = extractor.prefix();
    let steps = extractor.len(cfg);
    if x.rank() != 3 || x.shape()[1] != steps || x.shape()[2] != cfg.n_features {
        return Err(ModelError::Input(format!(
            "{pre} extractor expects N x {steps} x {} features, got {:?}",
            cfg.n_features,
            x.shape()
        )));
    }
    let n = x.shape()[0];
    if n == 0 || (mode == Mode::Train && n < 2) {
        return Err(ModelError::Input(format!(
            "batch norm needs at least 2 stocks in train mode, got {n}"
        )));
    }
    let h = cfg.hidden_dim;
    let v = |k: &str| bound.var(&format!("{pre}.{k}"));
    let (gamma, beta) = (v("bn.gamma")?, v("bn.beta")?);
    let (w_i, w_h, b_i, b_h) = (v("gru.w_i")?, v("gru.w_h")?, v("gru.b_i")?, v("gru.b_h")?);
    let params = bound.params();
    let running_mean = params.buffer(&format!("{pre}.bn.running_mean")).expect("buffer");
    let running_var = params.buffer(&format!("{pre}.bn.running_var")).expect("buffer");

    let mut state = tape.constant(Tensor::zeros(&[n, h]));
    let mut stats = Vec::with_capacity(steps);
    for t in 0..steps {
        let xt = tape.constant(time_slice(x, t));
        let norm = match mode {
            Mode::Train => NormMode::Train,
            Mode::Eval => NormMode::Eval {
                mean: running_mean.row(t),
                var: running_var.row(t),
            },
        };
        let (xn, st) = xt.batch_norm(&gamma, &beta, cfg.bn_eps, norm)?;
        stats.extend(st);
        let gi = xn.matmul(&w_i)?.add_row(&b_i)?;
        let gh = state.matmul(&w_h)?.add_row(&b_h)?;
        let r = gi.slice_cols(0, h)?.add(&gh.slice_cols(0, h)?)?.sigmoid();
        let z = gi.slice_cols(h, h)?.add(&gh.slice_cols(h, h)?)?.sigmoid();
        let cand = gi
            .slice_cols(2 * h, h)?
            .add(&r.mul(&gh.slice_cols(2 * h, h)?)?)?
            .tanh();
        state = cand.add(&z.mul(&state.sub(&cand)?)?)?;
    }
    Ok((state, stats))
}

/// `LeakyReLU(Dn^-1/2 H De^-1 H^T Dn^-1/2 e w)` with unit hyperedge weights;
/// node and edge degrees are floored at `eps_deg` before inversion.
pub fn hypergcn_layer<'t>(
    e: &Var<'t>,
    incidence: &Var<'t>,
    w: &Var<'t>,
    slope: f64,
    eps_deg: f64,
) -> Result<Var<'t>, ModelError> {
    {
        let inc = incidence.value();
        if inc.data().iter().any(|v| !(*v >= 0.0)) {
            return Err(ModelError::Input("incidence entries must be non-negative".into()));
        }
        if inc.data().iter().all(|v| *v == 0.0) {
            return Err(ModelError::Input("incidence matrix is all zero".into()));
        }
    }
    let dn = incidence.sum_rows()?.clamp_min(eps_deg).powf(-0.5);
    let de = incidence.sum_cols()?.clamp_min(eps_deg).powf(-1.0);
    let left = incidence.scale_rows(&dn)?;
    let right = left.scale_cols(&de)?;
    let gathered = left.transpose()?.matmul(&e.matmul(w)?)?;
    Ok(right.matmul(&gathered)?.leaky_relu(slope))
}

fn stack<'t>(
    bound: &Bound<'t, '_>,
    module: &str,
    e: &Var<'t>,
    incidence: &Var<'t>,
) -> Result<Var<'t>, ModelError> {
    let cfg = bound.config();
    let mut out = *e;
    for layer in 0..cfg.hgcn_layers {
        let w = bound.var(&format!("{module}.w.{layer}"))?;
        out = hypergcn_layer(&out, incidence, &w, cfg.leaky_slope, cfg.eps_deg)?;
    }
    Ok(out)
}

/// Prior factor embedding from binary industry exposures.
pub fn prior_beta<'t>(
    bound: &Bound<'t, '_>,
    e_s: &Var<'t>,
    prior: &Var<'t>,
) -> Result<Var<'t>, ModelError> {
    stack(bound, "prior", e_s, prior)
}

/// `sigmoid(e_r c^T)`: soft membership of each stock in each hidden factor.
pub fn hidden_exposures<'t>(e_r: &Var<'t>, prototypes: &Var<'t>) -> Result<Var<'t>, ModelError> {
    Ok(e_r.matmul(&prototypes.transpose()?)?.sigmoid())
}

/// Hidden factor embedding over the soft hypergraph.
pub fn hidden_beta<'t>(
    bound: &Bound<'t, '_>,
    e_r: &Var<'t>,
    beta_h: &Var<'t>,
) -> Result<Var<'t>, ModelError> {
    stack(bound, "hidden", e_r, beta_h)
}

/// `LeakyReLU((e_s - e_p - e_h) w_alpha + b_alpha)`.
pub fn individual_alpha<'t>(
    bound: &Bound<'t, '_>,
    e_s: &Var<'t>,
    e_p: &Var<'t>,
    e_h: &Var<'t>,
) -> Result<Var<'t>, ModelError> {
    let resid = e_s.sub(e_p)?.sub(e_h)?;
    let out = resid
        .matmul(&bound.var("alpha.w")?)?
        .add_row(&bound.var("alpha.b")?)?;
    Ok(out.leaky_relu(bound.config().leaky_slope))
}

/// `e_p W_prior + e_h W_hidden + e_alpha W_alpha + b`; absent terms are
/// skipped. `n` is only consulted when every term is absent.
pub fn predict_heads<'t>(
    tape: &'t Tape,
    bound: &Bound<'t, '_>,
    n: usize,
    e_p: Option<&Var<'t>>,
    e_h: Option<&Var<'t>>,
    e_alpha: Option<&Var<'t>>,
) -> Result<Var<'t>, ModelError> {
    let mut acc: Option<Var<'t>> = None;
    for (e, name) in [(e_p, "head.prior"), (e_h, "head.hidden"), (e_alpha, "head.alpha")] {
        if let Some(e) = e {
            let term = e.matmul(&bound.var(name)?)?;
            acc = Some(match acc {
                Some(a) => a.add(&term)?,
                None => term,
            });
        }
    }
    let acc = match acc {
        Some(a) => a,
        None => tape.constant(Tensor::zeros(&[n, bound.config().n_horizons()])),
    };
    Ok(acc.add_row(&bound.var("head.b")?)?)
}

fn check_prior(prior: &Tensor, n: usize) -> Result<(), ModelError> {
    match prior.dims2() {
        Ok((rows, _)) if rows == n => Ok(()),
        _ => Err(ModelError::Input(format!(
            "prior exposures {:?} do not match {n} stocks",
            prior.shape()
        ))),
    }
}

/// Past-window pass: features, prior, residual, hidden, alpha, heads.
pub fn forward<'t>(
    tape: &'t Tape,
    bound: &Bound<'t, '_>,
    x: &Tensor,
    prior: &Tensor,
    mode: Mode,
) -> Result<ForwardOut<'t>, ModelError> {
    let cfg = bound.config();
    let variant = cfg.variant;
    let (e_s, bn_stats) = feature_extract(tape, bound, Extractor::Past, x, mode)?;
    let n = x.shape()[0];
    check_prior(prior, n)?;
    let zeros = || tape.constant(Tensor::zeros(&[n, cfg.hidden_dim]));
    let e_p = if variant.uses_prior() {
        prior_beta(bound, &e_s, &tape.constant(prior.clone()))?
    } else {
        zeros()
    };
    let e_r = e_s.sub(&e_p)?;
    let (e_h, beta_h) = if variant.uses_hidden() {
        let beta_h = hidden_exposures(&e_r, &bound.var("hidden.c")?)?;
        (hidden_beta(bound, &e_r, &beta_h)?, Some(beta_h))
    } else {
        (zeros(), None)
    };
    let e_alpha = if variant.uses_alpha() {
        individual_alpha(bound, &e_s, &e_p, &e_h)?
    } else {
        zeros()
    };
    let pred = predict_heads(
        tape,
        bound,
        n,
        variant.uses_prior().then_some(&e_p),
        variant.uses_hidden().then_some(&e_h),
        variant.uses_alpha().then_some(&e_alpha),
    )?;
    Ok(ForwardOut {
        e_s,
        e_p,
        e_r,
        e_h,
        e_alpha,
        beta_h,
        pred,
        bn_stats,
    })
}

/// Future-window pass with its own extractor, the shared prior and hidden
/// modules, and the past pass's soft exposures.
pub fn forward_future<'t>(
    tape: &'t Tape,
    bound: &Bound<'t, '_>,
    x_future: &Tensor,
    prior: &Tensor,
    beta_h: Option<&Var<'t>>,
    mode: Mode,
) -> Result<FutureOut<'t>, ModelError> {
    let cfg = bound.config();
    let variant = cfg.variant;
    let (e_s, bn_stats) = feature_extract(tape, bound, Extractor::Future, x_future, mode)?;
    let n = x_future.shape()[0];
    check_prior(prior, n)?;
    let zeros = || tape.constant(Tensor::zeros(&[n, cfg.hidden_dim]));
    let e_p = if variant.uses_prior() {
        prior_beta(bound, &e_s, &tape.constant(prior.clone()))?
    } else {
        zeros()
    };
    let e_r = e_s.sub(&e_p)?;
    let e_h = match (variant.uses_hidden(), beta_h) {
        (true, Some(b)) => hidden_beta(bound, &e_r, b)?,
        (true, None) => {
            return Err(ModelError::Input(
                "future pass needs the past soft exposures".into(),
            ))
        }
        (false, _) => zeros(),
    };
    let e_alpha = e_r.sub(&e_h)?;
    Ok(FutureOut {
        e_s,
        e_p,
        e_r,
        e_h,
        e_alpha,
        bn_stats,
    })
}

/// Eval-mode outputs of one window, detached from any tape.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub pred: Tensor,
    pub beta_h: Option<Tensor>,
    pub e_alpha: Tensor,
}

pub fn infer(params: &ModelParams, x: &Tensor, prior: &Tensor) -> Result<Inference, ModelError> {
    let tape = Tape::new();
    let bound = params.bind(&tape);
    let out = forward(&tape, &bound, x, prior, Mode::Eval)?;
    Ok(Inference {
        pred: out.pred.value(),
        beta_h: out.beta_h.map(|b| b.value()),
        e_alpha: out.e_alpha.value(),
    })
}

/// Eval-mode predictions `N x L` for one window.
pub fn predict(params: &ModelParams, x: &Tensor, prior: &Tensor) -> Result<Tensor, ModelError> {
    Ok(infer(params, x, prior)?.pred)
}
