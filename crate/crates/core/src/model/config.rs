use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Which parts of the cascade are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Full,
    /// `e_p = 0`; the hidden module sees `e_s` directly.
    WoPrior,
    /// `e_h = 0`; the future residual is `e'_s - e'_p`.
    WoHidden,
    /// No alpha layer, no alpha head term, no contrastive loss.
    WoAlphaCl,
    /// Contrastive weight forced to zero.
    WoCl,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::WoPrior,
        Variant::WoHidden,
        Variant::WoAlphaCl,
        Variant::WoCl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::WoPrior => "wo_prior",
            Variant::WoHidden => "wo_hidden",
            Variant::WoAlphaCl => "wo_alpha_cl",
            Variant::WoCl => "wo_cl",
        }
    }

    pub fn uses_prior(self) -> bool {
        self != Variant::WoPrior
    }

    pub fn uses_hidden(self) -> bool {
        self != Variant::WoHidden
    }

    pub fn uses_alpha(self) -> bool {
        self != Variant::WoAlphaCl
    }

    pub fn uses_contrastive(self) -> bool {
        !matches!(self, Variant::WoAlphaCl | Variant::WoCl)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| ModelError::Config(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Embedding width `H`.
    pub hidden_dim: usize,
    /// Number of hidden factors `M`.
    pub n_factors: usize,
    /// Label horizons in trading days; `L = horizons.len()`.
    pub horizons: Vec<usize>,
    /// Past window length `T`.
    pub past_len: usize,
    /// Future window length `T'`.
    pub future_len: usize,
    /// Features per day, fixed by the window builder.
    pub n_features: usize,
    pub leaky_slope: f64,
    /// InfoNCE temperature.
    pub tau: f64,
    /// Contrastive loss weight.
    pub gamma: f64,
    /// Projection head output width; 0 means `H`.
    pub proj_dim: usize,
    pub hgcn_layers: usize,
    pub eps_deg: f64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    pub variant: Variant,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            n_factors: 32,
            horizons: vec![1, 5, 10, 20],
            past_len: 60,
            future_len: 20,
            n_features: crate::dataio::NUM_FIELDS,
            leaky_slope: 0.01,
            tau: 0.1,
            gamma: 0.5,
            proj_dim: 0,
            hgcn_layers: 1,
            eps_deg: 1e-6,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
            variant: Variant::Full,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn n_horizons(&self) -> usize {
        self.horizons.len()
    }

    pub fn proj_width(&self) -> usize {
        if self.proj_dim == 0 {
            self.hidden_dim
        } else {
            self.proj_dim
        }
    }

    /// Contrastive weight after the variant is applied.
    pub fn effective_gamma(&self) -> f64 {
        if self.variant.uses_contrastive() {
            self.gamma
        } else {
            0.0
        }
    }

    /// Whether the future pass is needed at all.
    pub fn needs_future(&self) -> bool {
        self.effective_gamma() > 0.0
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.hidden_dim == 0 || self.n_factors == 0 || self.n_features == 0 {
            return bad("hidden_dim, n_factors and n_features must be at least 1".into());
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return bad("horizons must be a nonempty list of positive day counts".into());
        }
        if self.past_len == 0 || self.future_len == 0 {
            return bad("past_len and future_len must be at least 1".into());
        }
        if !(self.tau > 0.0) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.gamma >= 0.0) {
            return bad(format!("gamma must be non-negative, got {}", self.gamma));
        }
        if self.hgcn_layers == 0 {
            return bad("hgcn_layers must be at least 1".into());
        }
        if !(self.eps_deg > 0.0 && self.bn_eps > 0.0) {
            return bad("eps_deg and bn_eps must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return bad(format!("bn_momentum must lie in [0, 1], got {}", self.bn_momentum));
        }
        if !self.leaky_slope.is_finite() {
            return bad("leaky_slope must be finite".into());
        }
        Ok(())
    }
}
