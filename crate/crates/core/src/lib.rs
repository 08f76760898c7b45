//! Robustness certification for black-box graph classifiers.
//!
//! A base classifier over undirected, unweighted graphs is smoothed by
//! flipping node pairs (edge additions/deletions) with region-dependent
//! Bernoulli probabilities. The smoothed prediction comes with a
//! certificate: a per-region radius vector `R` such that no perturbation
//! flipping at most `R_i` node pairs inside region `C_i` can change the
//! prediction, with confidence `1 - alpha`.
//!
//! Module map:
//! - [`graph`]: bit-vector graph representation and per-region distances
//! - [`partition`]: disjoint node-pair regions (motif, sparsity-aware, custom)
//! - [`smoothing`]: noise sampling and Monte-Carlo vote estimation
//! - [`stats`]: Clopper-Pearson confidence bounds on vote probabilities
//! - [`engine`]: likelihood-ratio cells, greedy LPs, margins, certification grids
//! - [`classifier`]: degree-histogram linear model (vertex histogram kernel)
//! - [`synthgen`]: synthetic motif-plus-random-graph benchmark generator
//! - [`oracle`]: brute-force ground truth for validation at tiny scale

pub mod classifier;
pub mod engine;
pub mod graph;
mod numeric;
pub mod oracle;
pub mod partition;
pub mod smoothing;
pub mod stats;
pub mod synthgen;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("infeasible probability target {target} (total cell mass {total})")]
    InfeasibleTarget { target: f64, total: f64 },

    #[error("graph generation failed: {0}")]
    Generation(String),

    #[error("classifier failure: {0}")]
    Classifier(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

/// FNV-1a over a byte slice. Stable across runs and platforms, used for
/// cache keys and config fingerprints embedded in reports.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hex form of [`stable_hash`], convenient for filenames and report fields.
pub fn stable_hash_hex(bytes: &[u8]) -> String {
    format!("{:016x}", stable_hash(bytes))
}
