//! Degree-histogram base classifier.
//!
//! The vertex histogram kernel over degree labels has an explicit finite
//! feature map (the degree histogram itself), so instead of a dual kernel
//! solver the model is a primal max-margin linear classifier trained with
//! hinge loss, L2 regularization and subgradient descent. Any classifier
//! implementing [`LabelOracle`] can plug into smoothing; this is the one
//! that ships.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use serde::{Deserialize, Serialize};

use crate::graph::GraphBits;
use crate::smoothing::{Label, LabelOracle};
use crate::{Error, Result};

/// Counts of nodes per degree: entry `d` is the number of nodes of degree
/// `d`. Indexed up to `num_nodes - 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeHistogram {
    counts: Vec<u64>,
}

impl DegreeHistogram {
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, degree: usize) -> u64 {
        self.counts.get(degree).copied().unwrap_or(0)
    }
}

/// Exact degree histogram of a graph.
pub fn degree_histogram(g: &GraphBits) -> DegreeHistogram {
    let mut counts = vec![0u64; g.num_nodes()];
    for d in g.degrees() {
        counts[d] += 1;
    }
    DegreeHistogram { counts }
}

/// Vertex histogram kernel: inner product of degree histograms, the shorter
/// histogram zero-padded. Exact integer arithmetic.
pub fn kernel(g1: &GraphBits, g2: &GraphBits) -> u64 {
    let h1 = degree_histogram(g1);
    let h2 = degree_histogram(g2);
    h1.counts
        .iter()
        .zip(h2.counts.iter())
        .map(|(a, b)| a * b)
        .sum()
}

/// Linear decision rule over degree-histogram features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub positive_label: Label,
    pub negative_label: Label,
}

impl LinearModel {
    pub fn feature_dim(&self) -> usize {
        self.weights.len()
    }

    fn score(&self, g: &GraphBits) -> f64 {
        let top_bin = self.weights.len() - 1;
        let mut clamped = false;
        let mut score = self.bias;
        for d in g.degrees() {
            let bin = if d > top_bin {
                clamped = true;
                top_bin
            } else {
                d
            };
            score += self.weights[bin];
        }
        if clamped {
            log::warn!(
                "degree beyond feature dimension {}, clamped into the top bin",
                self.weights.len()
            );
        }
        score
    }
}

impl LabelOracle for LinearModel {
    fn label(&self, g: &GraphBits) -> Result<Label> {
        Ok(predict(self, g))
    }
}

/// Sign of the linear score; exact zero maps to the negative label.
pub fn predict(model: &LinearModel, g: &GraphBits) -> Label {
    if model.score(g) > 0.0 {
        model.positive_label
    } else {
        model.negative_label
    }
}

/// Fraction of correct predictions.
pub fn accuracy(model: &LinearModel, graphs: &[GraphBits], labels: &[Label]) -> f64 {
    if graphs.is_empty() {
        return 0.0;
    }
    let correct = graphs
        .iter()
        .zip(labels)
        .filter(|(g, &y)| predict(model, g) == y)
        .count();
    correct as f64 / graphs.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            epochs: 60,
            learning_rate: 0.05,
            regularization: 1e-4,
            seed: 0,
        }
    }
}

/// Trained model plus its final training accuracy.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: LinearModel,
    pub train_accuracy: f64,
}

/// Train the primal hinge-loss model. Deterministic for a fixed seed: the
/// per-epoch shuffle is the only randomness.
pub fn train(graphs: &[GraphBits], labels: &[Label], params: &TrainParams) -> Result<TrainReport> {
    if graphs.is_empty() || graphs.len() != labels.len() {
        return Err(Error::invalid(
            "training set must be non-empty with one label per graph",
        ));
    }
    let mut distinct: Vec<Label> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() != 2 {
        return Err(Error::invalid(format!(
            "binary training needs exactly two classes, got {}",
            distinct.len()
        )));
    }
    let negative_label = distinct[0];
    let positive_label = distinct[1];

    let dim = graphs.iter().map(|g| g.num_nodes()).max().unwrap();
    let features: Vec<Vec<f64>> = graphs
        .iter()
        .map(|g| {
            let hist = degree_histogram(g);
            let mut x = vec![0.0; dim];
            for (d, &c) in hist.counts().iter().enumerate() {
                let bin = d.min(dim - 1);
                x[bin] += c as f64;
            }
            x
        })
        .collect();
    let targets: Vec<f64> = labels
        .iter()
        .map(|&y| if y == positive_label { 1.0 } else { -1.0 })
        .collect();

    let mut weights = vec![0.0f64; dim];
    let mut bias = 0.0f64;
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let lr = params.learning_rate;
    let reg = params.regularization;

    for _ in 0..params.epochs {
        shuffle(&mut order, &mut rng);
        for &i in &order {
            let x = &features[i];
            let y = targets[i];
            let score: f64 = bias + weights.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
            let decay = 1.0 - lr * reg;
            if y * score < 1.0 {
                for (w, xi) in weights.iter_mut().zip(x) {
                    *w = *w * decay + lr * y * xi;
                }
                bias += lr * y;
            } else {
                for w in weights.iter_mut() {
                    *w *= decay;
                }
            }
        }
    }

    let model = LinearModel {
        weights,
        bias,
        positive_label,
        negative_label,
    };
    let train_accuracy = accuracy(&model, graphs, labels);
    Ok(TrainReport {
        model,
        train_accuracy,
    })
}

fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    use rand::Rng;
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    weights: Vec<f64>,
    bias: f64,
    labels: ModelLabels,
    feature_dim: usize,
}

#[derive(Serialize, Deserialize)]
struct ModelLabels {
    positive: Label,
    negative: Label,
}

/// Write the model JSON file.
pub fn save_model(path: &Path, model: &LinearModel) -> Result<()> {
    let file = ModelFile {
        weights: model.weights.clone(),
        bias: model.bias,
        labels: ModelLabels {
            positive: model.positive_label,
            negative: model.negative_label,
        },
        feature_dim: model.feature_dim(),
    };
    let writer = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(writer, &file)?;
    Ok(())
}

/// Read a model JSON file written by [`save_model`].
pub fn load_model(path: &Path) -> Result<LinearModel> {
    let reader = BufReader::new(File::open(path)?);
    let file: ModelFile = serde_json::from_reader(reader)?;
    if file.feature_dim != file.weights.len() {
        return Err(Error::invalid(format!(
            "model file claims feature_dim {} but stores {} weights",
            file.feature_dim,
            file.weights.len()
        )));
    }
    Ok(LinearModel {
        weights: file.weights,
        bias: file.bias,
        positive_label: file.labels.positive,
        negative_label: file.labels.negative,
    })
}
