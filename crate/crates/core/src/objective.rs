//! Multi-horizon MSE, the temporal residual InfoNCE term and their sum.

use crate::diffcore::{Tensor, Var};
use crate::model::{Bound, ForwardOut, FutureOut, ModelError};

/// Norm floor used by the cosine similarity.
pub const COSINE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LossBreakdown {
    pub mse: f64,
    pub cl: f64,
    pub total: f64,
    pub per_horizon_mse: Vec<f64>,
}

/// `LeakyReLU(e W1 + b1) W2 + b2`.
pub fn projection_head<'t>(bound: &Bound<'t, '_>, e: &Var<'t>) -> Result<Var<'t>, ModelError> {
    let hidden = e
        .matmul(&bound.var("proj.w1")?)?
        .add_row(&bound.var("proj.b1")?)?
        .leaky_relu(bound.config().leaky_slope);
    Ok(hidden.matmul(&bound.var("proj.w2")?)?.add_row(&bound.var("proj.b2")?)?)
}

/// InfoNCE over already projected rows: row `i` of `past` is the anchor,
/// row `i` of `future` its positive and every other future row a negative.
pub fn infonce<'t>(past: &Var<'t>, future: &Var<'t>, tau: f64) -> Result<Var<'t>, ModelError> {
    let n = past.shape()[0];
    if n < 2 {
        return Err(ModelError::Input(format!("InfoNCE needs at least 2 stocks, got {n}")));
    }
    if !(tau > 0.0) {
        return Err(ModelError::Config(format!("tau must be positive, got {tau}")));
    }
    let p = past.normalize_rows(COSINE_FLOOR)?;
    let q = future.normalize_rows(COSINE_FLOOR)?;
    let logits = p.matmul(&q.transpose()?)?.scale(1.0 / tau);
    Ok(logits.logsumexp_rows()?.sub(&logits.diag()?)?.mean())
}

/// Projects both embeddings through the shared head, then [`infonce`].
pub fn infonce_loss<'t>(
    bound: &Bound<'t, '_>,
    e_alpha: &Var<'t>,
    e_alpha_future: &Var<'t>,
    tau: f64,
) -> Result<Var<'t>, ModelError> {
    let p = projection_head(bound, e_alpha)?;
    let q = projection_head(bound, e_alpha_future)?;
    infonce(&p, &q, tau)
}

/// Mean squared error over all `N x L` entries, plus per-column means.
pub fn mse_loss<'t>(pred: &Var<'t>, labels: &Tensor) -> Result<(Var<'t>, Vec<f64>), ModelError> {
    if pred.shape() != labels.shape() {
        return Err(ModelError::Input(format!(
            "predictions {:?} vs labels {:?}",
            pred.shape(),
            labels.shape()
        )));
    }
    let (n, l) = labels.dims2()?;
    let diff = pred.sub(&pred.tape().constant(labels.clone()))?;
    let sq = diff.mul(&diff)?;
    let cols = sq.value();
    let per_horizon = (0..l)
        .map(|j| (0..n).map(|i| cols.at(i, j)).sum::<f64>() / n as f64)
        .collect();
    Ok((sq.mean(), per_horizon))
}

/// `mse + gamma * cl`. With `gamma == 0` or no future pass the contrastive
/// term is skipped and reported as 0.
pub fn total_loss<'t>(
    bound: &Bound<'t, '_>,
    out: &ForwardOut<'t>,
    future: Option<&FutureOut<'t>>,
    labels: &Tensor,
    gamma: f64,
) -> Result<(Var<'t>, LossBreakdown), ModelError> {
    let (mse, per_horizon_mse) = mse_loss(&out.pred, labels)?;
    let mse_value = mse.item()?;
    let (total, cl_value) = match future {
        Some(f) if gamma > 0.0 => {
            let cl = infonce_loss(bound, &out.e_alpha, &f.e_alpha, bound.config().tau)?;
            let cl_value = cl.item()?;
            (mse.add(&cl.scale(gamma))?, cl_value)
        }
        _ => (mse, 0.0),
    };
    let breakdown = LossBreakdown {
        mse: mse_value,
        cl: cl_value,
        total: total.item()?,
        per_horizon_mse,
    };
    Ok((total, breakdown))
}

/// Mean cosine similarity of positive pairs and of negative pairs between
/// two sets of projected rows.
pub fn pair_similarities(past: &Tensor, future: &Tensor) -> Result<(f64, f64), ModelError> {
    let (n, d) = past.dims2()?;
    if future.shape() != past.shape() || n < 2 {
        return Err(ModelError::Input("pair similarities need matching N x P inputs, N >= 2".into()));
    }
    let unit = |t: &Tensor, i: usize| {
        let r = t.row(i);
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt().max(COSINE_FLOOR);
        r.iter().map(|v| v / norm).collect::<Vec<_>>()
    };
    let p: Vec<_> = (0..n).map(|i| unit(past, i)).collect();
    let q: Vec<_> = (0..n).map(|i| unit(future, i)).collect();
    let (mut pos, mut neg) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let s: f64 = (0..d).map(|k| p[i][k] * q[j][k]).sum();
            if i == j {
                pos += s;
            } else {
                neg += s;
            }
        }
    }
    Ok((pos / n as f64, neg / (n * (n - 1)) as f64))
}
