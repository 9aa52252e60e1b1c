//! A hypergraph factor model for cross-sectional stock return
//! prediction.
//!
//! Stock embeddings from a batch-normalized GRU are decomposed in cascade:
//! a hypergraph convolution over prior (industry) exposures, a second one
//! over soft hidden exposures mined from the residual, and an individual
//! alpha from what remains. Training combines multi-horizon MSE with an
//! InfoNCE term contrasting past and future alpha embeddings of each stock.
//!
//! The crate also carries everything needed to exercise the model end to
//! end: CSV ingestion and window construction ([`dataio`]), a synthetic
//! market with known factor structure ([`synthgen`]), IC/ICIR evaluation
//! ([`eval`]) and a TopK backtester ([`backtest`]).
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod backtest;
pub mod cli;
pub mod dataio;
pub mod diffcore;
pub mod eval;
pub mod model;
pub mod objective;
pub mod synthgen;
pub mod train;

pub use dataio::{MarketPanel, PriorExposure, SplitPlan, WindowBatch};
pub use diffcore::{Tape, Tensor, Var};
pub use model::{ModelConfig, ModelParams, Variant};
pub use train::{TrainConfig, TrainLog};


