use std::path::Path;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Extractor, ModelConfig, ModelError};
use crate::diffcore::{BatchStats, Gradients, Tape, Tensor, Var};

pub const CHECKPOINT_FORMAT: &str = "factorgcl-checkpoint-v1";

/// Named trainable tensors plus batch-norm running statistics.
///
/// Parameter names:
///
/// | name | shape |
/// |------|-------|
/// | `{past,future}.bn.gamma`, `.bn.beta` | `1 x D` |
/// | `{past,future}.gru.w_i` | `D x 3H` (gates r, z, n) |
/// | `{past,future}.gru.w_h` | `H x 3H` |
/// | `{past,future}.gru.b_i`, `.gru.b_h` | `1 x 3H` |
/// | `prior.w.{l}`, `hidden.w.{l}` | `H x H` |
/// | `hidden.c` | `M x H` |
/// | `alpha.w` / `alpha.b` | `H x H` / `1 x H` |
/// | `head.prior`, `head.hidden`, `head.alpha` | `H x L` |
/// | `head.b` | `1 x L` |
/// | `proj.w1` / `proj.b1` | `H x P` / `1 x P` |
/// | `proj.w2` / `proj.b2` | `P x P` / `1 x P` |
///
/// Buffers `{past,future}.bn.running_mean` and `.running_var` are `T x D`,
/// one row of statistics per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    tensors: IndexMap<String, Tensor>,
    buffers: IndexMap<String, Tensor>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    config: ModelConfig,
    params: Vec<Entry>,
    buffers: Vec<Entry>,
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::matrix(rows, cols, data).expect("dims")
}

impl ModelParams {
    /// Fresh parameters: weights uniform in `±1/sqrt(fan_in)`, prototypes
    /// `N(0, 1/H)`, biases zero, batch-norm scale one.
    pub fn init(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (d, h, m, l, p) = (
            config.n_features,
            config.hidden_dim,
            config.n_factors,
            config.n_horizons(),
            config.proj_width(),
        );
        let mut tensors = IndexMap::new();
        let mut buffers = IndexMap::new();
        for ex in [Extractor::Past, Extractor::Future] {
            let pre = ex.prefix();
            let t = ex.len(config);
            tensors.insert(format!("{pre}.bn.gamma"), Tensor::full(&[1, d], 1.0));
            tensors.insert(format!("{pre}.bn.beta"), Tensor::zeros(&[1, d]));
            tensors.insert(format!("{pre}.gru.w_i"), uniform(&mut rng, d, 3 * h, d));
            tensors.insert(format!("{pre}.gru.w_h"), uniform(&mut rng, h, 3 * h, h));
            tensors.insert(format!("{pre}.gru.b_i"), Tensor::zeros(&[1, 3 * h]));
            tensors.insert(format!("{pre}.gru.b_h"), Tensor::zeros(&[1, 3 * h]));
            buffers.insert(format!("{pre}.bn.running_mean"), Tensor::zeros(&[t, d]));
            buffers.insert(format!("{pre}.bn.running_var"), Tensor::full(&[t, d], 1.0));
        }
        for layer in 0..config.hgcn_layers {
            tensors.insert(format!("prior.w.{layer}"), uniform(&mut rng, h, h, h));
        }
        let scale = 1.0 / (h as f64).sqrt();
        let c = (0..m * h)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        tensors.insert("hidden.c".into(), Tensor::matrix(m, h, c).expect("dims"));
        for layer in 0..config.hgcn_layers {
            tensors.insert(format!("hidden.w.{layer}"), uniform(&mut rng, h, h, h));
        }
        tensors.insert("alpha.w".into(), uniform(&mut rng, h, h, h));
        tensors.insert("alpha.b".into(), Tensor::zeros(&[1, h]));
        for head in ["head.prior", "head.hidden", "head.alpha"] {
            tensors.insert(head.into(), uniform(&mut rng, h, l, h));
        }
        tensors.insert("head.b".into(), Tensor::zeros(&[1, l]));
        tensors.insert("proj.w1".into(), uniform(&mut rng, h, p, h));
        tensors.insert("proj.b1".into(), Tensor::zeros(&[1, p]));
        tensors.insert("proj.w2".into(), uniform(&mut rng, p, p, p));
        tensors.insert("proj.b2".into(), Tensor::zeros(&[1, p]));
        Ok(Self {
            config: config.clone(),
            tensors,
            buffers,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Replaces the configuration, keeping tensors. Only fields that do not
    /// change any tensor shape may differ.
    pub fn set_config(&mut self, config: ModelConfig) -> Result<(), ModelError> {
        let fresh = ModelParams::init(&config)?;
        for (name, t) in &fresh.tensors {
            if self.tensors.get(name).map(Tensor::shape) != Some(t.shape()) {
                return Err(ModelError::Config(format!("config change alters shape of `{name}`")));
            }
        }
        self.config = config;
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn buffer(&self, name: &str) -> Option<&Tensor> {
        self.buffers.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Records every parameter as a trainable leaf on `tape`.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Bound<'t, '_> {
        let vars = self
            .tensors
            .iter()
            .map(|(k, v)| (k.clone(), tape.param(v.clone())))
            .collect();
        Bound { params: self, vars }
    }

    /// Running-statistics update `r <- (1 - momentum) r + momentum * batch`
    /// for each time step of one extractor.
    pub fn update_running_stats(
        &mut self,
        extractor: Extractor,
        stats: &[BatchStats],
    ) -> Result<(), ModelError> {
        let pre = extractor.prefix();
        let mu = self.config.bn_momentum;
        for (field, pick) in [
            ("running_mean", (|s: &BatchStats| &s.mean) as fn(&BatchStats) -> &Vec<f64>),
            ("running_var", |s: &BatchStats| &s.var),
        ] {
            let buf = self
                .buffers
                .get_mut(&format!("{pre}.bn.{field}"))
                .expect("buffers created at init");
            let (t, d) = buf.dims2()?;
            if stats.len() != t {
                return Err(ModelError::Input(format!(
                    "{} batch-norm stats for a {t}-step extractor",
                    stats.len()
                )));
            }
            for (row, s) in buf.data_mut().chunks_mut(d).zip(stats) {
                for (r, b) in row.iter_mut().zip(pick(s)) {
                    *r = (1.0 - mu) * *r + mu * b;
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        let entries = |m: &IndexMap<String, Tensor>| {
            m.iter()
                .map(|(k, v)| Entry {
                    name: k.clone(),
                    shape: v.shape().to_vec(),
                    data: v.data().to_vec(),
                })
                .collect()
        };
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            config: self.config.clone(),
            params: entries(&self.tensors),
            buffers: entries(&self.buffers),
        };
        serde_json::to_string(&ck).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }

    /// Parses a checkpoint and checks every tensor against the shapes its
    /// config implies.
    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        let ck: Checkpoint =
            serde_json::from_str(s).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(ModelError::Checkpoint(format!("unknown format `{}`", ck.format)));
        }
        let template = ModelParams::init(&ck.config)?;
        let fill = |want: &IndexMap<String, Tensor>, got: Vec<Entry>| {
            let mut out = IndexMap::new();
            for e in got {
                let expected = want
                    .get(&e.name)
                    .ok_or_else(|| ModelError::Checkpoint(format!("unexpected tensor `{}`", e.name)))?;
                if expected.shape() != e.shape.as_slice() {
                    return Err(ModelError::Checkpoint(format!(
                        "`{}` has shape {:?}, config implies {:?}",
                        e.name,
                        e.shape,
                        expected.shape()
                    )));
                }
                let t = Tensor::new(e.shape, e.data)
                    .map_err(|err| ModelError::Checkpoint(format!("`{}`: {err}", e.name)))?;
                out.insert(e.name, t);
            }
            if let Some(missing) = want.keys().find(|k| !out.contains_key(*k)) {
                return Err(ModelError::Checkpoint(format!("missing tensor `{missing}`")));
            }
            Ok(out)
        };
        Ok(Self {
            tensors: fill(&template.tensors, ck.params)?,
            buffers: fill(&template.buffers, ck.buffers)?,
            config: ck.config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json()?).map_err(|e| ModelError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let s = std::fs::read_to_string(path).map_err(|e| ModelError::io(path, e))?;
        Self::from_json(&s)
    }
}

/// Parameters recorded on a tape for one forward/backward cycle.
pub struct Bound<'t, 'p> {
    params: &'p ModelParams,
    vars: IndexMap<String, Var<'t>>,
}

impl<'t, 'p> Bound<'t, 'p> {
    pub fn params(&self) -> &'p ModelParams {
        self.params
    }

    pub fn config(&self) -> &'p ModelConfig {
        &self.params.config
    }

    pub fn var(&self, name: &str) -> Result<Var<'t>, ModelError> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| ModelError::Config(format!("no parameter named `{name}`")))
    }

    /// Gradient for every parameter in name order; untouched ones are zero.
    pub fn gradients(&self, grads: &Gradients) -> IndexMap<String, Tensor> {
        self.vars
            .iter()
            .map(|(k, v)| {
                let g = grads
                    .wrt(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(&v.shape()));
                (k.clone(), g)
            })
            .collect()
    }
}
