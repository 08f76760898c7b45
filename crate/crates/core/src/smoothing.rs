//! Anisotropic noise sampling and Monte-Carlo estimation of the smoothed
//! classifier's label distribution.
//!
//! Each node pair in region `C_i` is flipped independently with probability
//! `p_i`; noise-free pairs are never touched. Vote estimation fans out over
//! a thread pool in fixed-size chunks, each chunk seeded from the master
//! seed and its chunk index, so the result is identical for any worker
//! count.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::GraphBits;
use crate::partition::NodePairPartition;
use crate::{Error, Result};

/// Class label id.
pub type Label = u32;

/// A black-box classifier over graphs. Must be safe for concurrent
/// invocation; vote estimation calls it from multiple threads.
pub trait LabelOracle: Sync {
    fn label(&self, g: &GraphBits) -> Result<Label>;
}

impl<F> LabelOracle for F
where
    F: Fn(&GraphBits) -> Result<Label> + Sync,
{
    fn label(&self, g: &GraphBits) -> Result<Label> {
        self(g)
    }
}

/// Per-region flip probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    probs: Vec<f64>,
}

impl NoiseSpec {
    /// Certification-grade noise: every probability in `[0, 0.5)`. At
    /// `p >= 0.5` the likelihood ratio `(1-p)/p` drops to or below one and
    /// the certificate collapses, so such values are rejected here.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        for &p in &probs {
            if !(0.0..0.5).contains(&p) {
                return Err(Error::invalid(format!(
                    "flip probability {p} outside [0, 0.5)"
                )));
            }
        }
        Self::validated(probs)
    }

    /// Test-only override admitting probabilities in `[0, 1)`, e.g. the
    /// uniform `p = 0.5` channel used in diagnostics.
    pub fn unrestricted(probs: Vec<f64>) -> Result<Self> {
        for &p in &probs {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::invalid(format!(
                    "flip probability {p} outside [0, 1)"
                )));
            }
        }
        Self::validated(probs)
    }

    fn validated(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("noise spec needs at least one region"));
        }
        Ok(NoiseSpec { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn region_count(&self) -> usize {
        self.probs.len()
    }
}

/// Empirical label counts from `N` noisy classifier evaluations, with the
/// top class and runner-up. Ties break toward the smallest label id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelDistribution {
    counts: BTreeMap<Label, u64>,
    total: u64,
    top: Label,
    runner_up: Option<Label>,
}

impl LabelDistribution {
    pub fn from_counts(counts: BTreeMap<Label, u64>) -> Result<Self> {
        let total: u64 = counts.values().sum();
        if total == 0 {
            return Err(Error::invalid("label distribution needs at least one vote"));
        }
        let mut top: Option<(Label, u64)> = None;
        let mut runner: Option<(Label, u64)> = None;
        // BTreeMap iteration is ascending by label, so strict `>` keeps the
        // smallest label on ties.
        for (&label, &count) in &counts {
            if count == 0 {
                continue;
            }
            match top {
                Some((_, best)) if count <= best => match runner {
                    Some((_, second)) if count <= second => {}
                    _ => runner = Some((label, count)),
                },
                _ => {
                    runner = top;
                    top = Some((label, count));
                }
            }
        }
        let (top, _) = top.expect("total > 0 implies a top label");
        Ok(LabelDistribution {
            counts,
            total,
            top,
            runner_up: runner.map(|(l, _)| l),
        })
    }

    pub fn counts(&self) -> &BTreeMap<Label, u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Most frequent label (the smoothed prediction).
    pub fn top_label(&self) -> Label {
        self.top
    }

    /// Runner-up label; `None` when only one label was ever observed.
    pub fn runner_up(&self) -> Option<Label> {
        self.runner_up
    }

    pub fn count_of(&self, label: Label) -> u64 {
        self.counts.get(&label).copied().unwrap_or(0)
    }

    pub fn top_count(&self) -> u64 {
        self.count_of(self.top)
    }

    pub fn runner_up_count(&self) -> u64 {
        self.runner_up.map_or(0, |l| self.count_of(l))
    }
}

fn check_compatible(x: &GraphBits, partition: &NodePairPartition, noise: &NoiseSpec) -> Result<()> {
    if partition.num_nodes() != x.num_nodes() {
        return Err(Error::invalid(format!(
            "partition over {} nodes, graph has {}",
            partition.num_nodes(),
            x.num_nodes()
        )));
    }
    if partition.region_count() != noise.region_count() {
        return Err(Error::invalid(format!(
            "noise spec has {} regions, partition has {}",
            noise.region_count(),
            partition.region_count()
        )));
    }
    Ok(())
}

/// Draw one sample of the noise distribution centred on `x`: each bit in
/// region `i` flips independently with probability `p_i`, noise-free bits
/// stay fixed.
pub fn sample_noise<R: Rng>(
    x: &GraphBits,
    partition: &NodePairPartition,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<GraphBits> {
    check_compatible(x, partition, noise)?;
    let probs = noise.probs();
    let mut bits = x.bits().to_vec();
    for (k, bit) in bits.iter_mut().enumerate() {
        if let Some(i) = partition.region_of(k) {
            if rng.random::<f64>() < probs[i] {
                *bit = !*bit;
            }
        }
    }
    GraphBits::from_bits(x.num_nodes(), bits)
}

/// Samples per worker chunk. Chunk boundaries, not worker identity,
/// determine the random streams.
const VOTE_CHUNK: u64 = 1024;

fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&chunk.to_le_bytes());
    key[16..24].copy_from_slice(&0x9e37_79b9_7f4a_7c15u64.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Estimate the smoothed label distribution of `classify` at `x` from
/// `n_samples` independent noise draws. Deterministic given `seed`,
/// independent of how many threads execute the chunks.
pub fn estimate_label_distribution<O: LabelOracle + ?Sized>(
    x: &GraphBits,
    classify: &O,
    partition: &NodePairPartition,
    noise: &NoiseSpec,
    n_samples: u64,
    seed: u64,
) -> Result<LabelDistribution> {
    if n_samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    check_compatible(x, partition, noise)?;
    let n_chunks = n_samples.div_ceil(VOTE_CHUNK);
    let counts = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| -> Result<BTreeMap<Label, u64>> {
            let mut rng = chunk_rng(seed, chunk);
            let lo = chunk * VOTE_CHUNK;
            let hi = (lo + VOTE_CHUNK).min(n_samples);
            let mut local: BTreeMap<Label, u64> = BTreeMap::new();
            for _ in lo..hi {
                let sample = sample_noise(x, partition, noise, &mut rng)?;
                let label = classify.label(&sample)?;
                *local.entry(label).or_insert(0) += 1;
            }
            Ok(local)
        })
        .try_reduce(BTreeMap::new, |mut acc, other| {
            for (label, count) in other {
                *acc.entry(label).or_insert(0) += count;
            }
            Ok(acc)
        })?;
    LabelDistribution::from_counts(counts)
}

/// On-disk vote record, so certification can re-run without re-sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotesRecord {
    pub graph_id: String,
    pub seed: u64,
    pub n_samples: u64,
    pub counts: BTreeMap<Label, u64>,
    /// Fingerprint of the model that produced the votes.
    pub model_hash: String,
    pub noise_probs: Vec<f64>,
}

impl VotesRecord {
    pub fn distribution(&self) -> Result<LabelDistribution> {
        let dist = LabelDistribution::from_counts(self.counts.clone())?;
        if dist.total() != self.n_samples {
            return Err(Error::invalid(format!(
                "votes record for {} claims {} samples but counts sum to {}",
                self.graph_id,
                self.n_samples,
                dist.total()
            )));
        }
        Ok(dist)
    }
}
