//! Point-wise encoder, twin decoders, and the coupling between them.
//!
//! ```text
//! features ─ encoder MLP ─┬─ local ───────────────┐
//!                         └─ max pool ─ global ───┴─ shared
//! shared ─ semantic decoder ─ F_SEM ─┬───────────────────────┐
//! shared ─ instance decoder ─ F_INS ─┴─ + FC(F_SEM) = F_SINS  │
//! F_SINS ─ embedding head ─ E_INS ─ kNN ─ max over F_SEM ─ F_ISEM ─ semantic head ─ P_SEM
//! ```
//!
//! With semantic awareness off `F_SINS = F_INS`; with instance fusion off
//! `F_ISEM = F_SEM`.

mod graph;
mod knn;
mod params;

pub use graph::{forward, ForwardGraph, ForwardOptions, ForwardOutputs, GraphBuilder, Mode};
pub use knn::{knn_embedding, l1};
pub use params::{NetworkParams, RunningStats};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{CheckpointError, TensorError};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error("checkpoint incompatible with configuration: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub input_dim: usize,
    /// Per-point MLP widths of the shared encoder; the last width is also
    /// the global feature width.
    pub encoder_widths: Vec<usize>,
    /// Widths of each decoder branch; the last is `N_F`.
    pub decoder_widths: Vec<usize>,
    pub n_classes: usize,
    pub embedding_dim: usize,
    /// Neighbors per point for instance fusion, self included.
    pub k_neighbors: usize,
    pub delta_v: f64,
    pub delta_d: f64,
    pub alpha: f64,
    pub use_sa: bool,
    pub use_if: bool,
    pub bn_epsilon: f64,
    pub bn_momentum: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            input_dim: crate::cloud::FEATURE_DIM,
            encoder_widths: vec![32, 64, 128],
            decoder_widths: vec![128, 64],
            n_classes: 4,
            embedding_dim: 5,
            k_neighbors: 30,
            delta_v: 0.5,
            delta_d: 1.5,
            alpha: 0.001,
            use_sa: true,
            use_if: true,
            bn_epsilon: 1e-5,
            bn_momentum: 0.9,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), NetworkError> {
        let bad = |m: &str| Err(NetworkError::Config(m.to_string()));
        if self.input_dim == 0 || self.n_classes == 0 || self.embedding_dim == 0 {
            return bad("input_dim, n_classes and embedding_dim must be positive");
        }
        if self.encoder_widths.is_empty() || self.decoder_widths.is_empty() {
            return bad("encoder and decoder need at least one layer");
        }
        if self.encoder_widths.iter().chain(&self.decoder_widths).any(|&w| w == 0) {
            return bad("layer widths must be positive");
        }
        if self.k_neighbors == 0 {
            return bad("k_neighbors must be at least 1");
        }
        if !(self.delta_v > 0.0 && self.delta_d > 0.0 && self.alpha >= 0.0) {
            return bad("margins must be positive and alpha non-negative");
        }
        if !(self.bn_epsilon > 0.0) || !(0.0..1.0).contains(&self.bn_momentum) {
            return bad("bn_epsilon must be positive and bn_momentum in [0, 1)");
        }
        Ok(())
    }

    /// Width of the shared feature matrix (local + global).
    pub fn shared_width(&self) -> usize {
        2 * self.encoder_widths.last().copied().unwrap_or(0)
    }

    /// `N_F`.
    pub fn feature_width(&self) -> usize {
        self.decoder_widths.last().copied().unwrap_or(0)
    }

    /// A small configuration for fast tests.
    pub fn tiny(n_classes: usize) -> Self {
        Self {
            encoder_widths: vec![8, 8],
            decoder_widths: vec![8, 6],
            n_classes,
            embedding_dim: 3,
            k_neighbors: 4,
            ..Self::default()
        }
    }
}
