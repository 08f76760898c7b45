//! Pipeline commands: dataset generation, training, certification, the
//! score sweep and report emission.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use graphcert::classifier::{self, LinearModel, TrainParams};
use graphcert::engine::{
    certification_grid, write_grid_csv, CertificationGrid, EngineConfig, GridSidecar, RadiusVector,
};
use graphcert::graph::GraphBits;
use graphcert::partition::NodePairPartition;
use graphcert::smoothing::{
    estimate_label_distribution, Label, LabelDistribution, NoiseSpec, VotesRecord,
};
use graphcert::stats::{bound_top_two, ConfidenceBounds};
use graphcert::synthgen::{self, LabeledGraphs};
use graphcert::{stable_hash, stable_hash_hex};

use crate::config::{run_name, ExperimentConfig, Mode};

/// Generate the synthetic dataset onto disk. Deterministic per seed, so
/// re-running with the same config rewrites identical files.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<()> {
    let dataset = synthgen::generate_dataset(&cfg.synth_config())?;
    fs::create_dir_all(&cfg.dataset_dir)
        .with_context(|| format!("creating {}", cfg.dataset_dir.display()))?;
    synthgen::save_dataset(&cfg.dataset_dir, &dataset)?;
    log::info!(
        "wrote {} graphs to {}",
        cfg.train_size + cfg.val_size + cfg.test_size,
        cfg.dataset_dir.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub config_hash: String,
    pub seed: u64,
}

/// Train the degree-histogram model on the train split and store it with an
/// accuracy report over all three splits.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainSummary> {
    let dataset = synthgen::load_dataset(&cfg.dataset_dir)
        .with_context(|| format!("loading dataset from {}", cfg.dataset_dir.display()))?;
    let params = TrainParams {
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
        regularization: cfg.regularization,
        seed: cfg.seed,
    };
    let report = classifier::train(&dataset.train.graphs, &dataset.train.labels, &params)?;
    let summary = TrainSummary {
        train_accuracy: report.train_accuracy,
        val_accuracy: classifier::accuracy(&report.model, &dataset.val.graphs, &dataset.val.labels),
        test_accuracy: classifier::accuracy(
            &report.model,
            &dataset.test.graphs,
            &dataset.test.labels,
        ),
        config_hash: cfg.config_hash()?,
        seed: cfg.seed,
    };
    if let Some(parent) = cfg.model_path.parent() {
        fs::create_dir_all(parent)?;
    }
    classifier::save_model(&cfg.model_path, &report.model)?;
    let report_path = cfg.model_path.with_file_name("train_report.json");
    serde_json::to_writer_pretty(BufWriter::new(fs::File::create(&report_path)?), &summary)?;
    log::info!(
        "train/val/test accuracy: {}/{}/{}",
        summary.train_accuracy,
        summary.val_accuracy,
        summary.test_accuracy
    );
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphSummary {
    pub graph_id: String,
    pub label: Label,
    pub predicted: Label,
    pub abstain: bool,
    pub top_votes: u64,
    pub p_a_lower: f64,
    pub p_b_upper: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_name: String,
    pub mode: String,
    pub probs: Vec<f64>,
    pub n_samples: u64,
    pub alpha: f64,
    pub seed: u64,
    pub config_hash: String,
    pub n_graphs: usize,
    pub abstentions: usize,
    pub smoothed_accuracy: f64,
    pub certified_accuracy_at_origin: f64,
    pub certified_ratio_at_r_max: f64,
    pub r_max: Vec<usize>,
    pub per_graph: Vec<GraphSummary>,
}

/// Everything `certify` leaves behind, echoed to the caller.
#[derive(Debug, Clone)]
pub struct CertifyOutcome {
    pub run_dir: PathBuf,
    pub summary: RunSummary,
    /// Certified-ratio per common-grid index (lexicographic layout).
    pub aggregate: Vec<f64>,
}

struct GraphTask<'a> {
    graph_id: String,
    graph: &'a GraphBits,
    label: Label,
    partition: NodePairPartition,
    grid_r_max: RadiusVector,
}

fn derive_vote_seed(seed: u64, graph_id: &str) -> u64 {
    stable_hash(format!("votes:{seed}:{graph_id}").as_bytes())
}

fn votes_cache_path(
    votes_dir: &Path,
    graph_id: &str,
    model_hash: &str,
    probs: &[f64],
    seed: u64,
    n_samples: u64,
) -> PathBuf {
    let key =
        stable_hash_hex(format!("{graph_id}|{model_hash}|{probs:?}|{seed}|{n_samples}").as_bytes());
    votes_dir.join(format!("{graph_id}_{key}.json"))
}

fn load_or_sample_votes(
    cfg: &ExperimentConfig,
    task: &GraphTask,
    model: &LinearModel,
    model_hash: &str,
    noise: &NoiseSpec,
    votes_dir: &Path,
) -> Result<LabelDistribution> {
    let vote_seed = derive_vote_seed(cfg.seed, &task.graph_id);
    let cache_path = votes_cache_path(
        votes_dir,
        &task.graph_id,
        model_hash,
        noise.probs(),
        vote_seed,
        cfg.n_samples,
    );
    if cfg.use_votes_cache && cache_path.exists() {
        let record: VotesRecord = serde_json::from_reader(fs::File::open(&cache_path)?)
            .with_context(|| format!("reading votes cache {}", cache_path.display()))?;
        let matches = record.model_hash == model_hash
            && record.noise_probs == noise.probs()
            && record.seed == vote_seed
            && record.n_samples == cfg.n_samples;
        if matches {
            return Ok(record.distribution()?);
        }
        log::warn!("stale votes cache at {}, re-sampling", cache_path.display());
    }
    let dist = estimate_label_distribution(
        task.graph,
        model,
        &task.partition,
        noise,
        cfg.n_samples,
        vote_seed,
    )?;
    if cfg.use_votes_cache {
        let record = VotesRecord {
            graph_id: task.graph_id.clone(),
            seed: vote_seed,
            n_samples: cfg.n_samples,
            counts: dist.counts().clone(),
            model_hash: model_hash.to_string(),
            noise_probs: noise.probs().to_vec(),
        };
        serde_json::to_writer_pretty(BufWriter::new(fs::File::create(&cache_path)?), &record)?;
    }
    Ok(dist)
}

fn clamp_point(point: &[usize], r_max: &RadiusVector) -> Vec<usize> {
    point
        .iter()
        .zip(r_max.as_slice())
        .map(|(&p, &m)| p.min(m))
        .collect()
}

struct GraphResult {
    summary: GraphSummary,
    bounds: ConfidenceBounds,
    grid: CertificationGrid,
}

fn common_grid_len(r_max: &[usize]) -> usize {
    r_max.iter().map(|&r| r + 1).product()
}

fn common_grid_point(r_max: &[usize], mut index: usize) -> Vec<usize> {
    let mut point = vec![0usize; r_max.len()];
    for i in (0..r_max.len()).rev() {
        let base = r_max[i] + 1;
        point[i] = index % base;
        index /= base;
    }
    point
}

/// Certify every test graph: sample (or load cached) votes, bound the top
/// two class probabilities, compute the certification grid, and write
/// per-graph CSV/JSON reports plus the aggregate certified-ratio grid.
pub fn cmd_certify(cfg: &ExperimentConfig) -> Result<CertifyOutcome> {
    let dataset = synthgen::load_dataset(&cfg.dataset_dir)
        .with_context(|| format!("loading dataset from {}", cfg.dataset_dir.display()))?;
    let model = classifier::load_model(&cfg.model_path)
        .with_context(|| format!("loading model from {}", cfg.model_path.display()))?;
    let model_hash = stable_hash_hex(&fs::read(&cfg.model_path)?);
    let noise = NoiseSpec::new(cfg.probs.clone())?;
    let engine_cfg = EngineConfig {
        max_cells: cfg.max_cells,
        max_grid_points: cfg.max_cells,
        corner_pruning: cfg.corner_pruning,
    };

    let test: &LabeledGraphs = &dataset.test;
    if test.graphs.is_empty() {
        return Err(anyhow!("dataset has no test graphs"));
    }
    let id_offset = dataset.train.graphs.len() + dataset.val.graphs.len();

    let tasks = build_tasks(cfg, test, id_offset)?;
    let common_r_max: Vec<usize> = tasks
        .first()
        .map(|t| {
            let mut common = t.grid_r_max.as_slice().to_vec();
            for task in &tasks {
                for (c, &r) in common.iter_mut().zip(task.grid_r_max.as_slice()) {
                    *c = (*c).max(r);
                }
            }
            common
        })
        .expect("at least one task");
    if let Some(requested) = &cfg.r_max {
        // per-graph grids are clamped to region sizes; warn when the common
        // grid had to shrink below the request in every graph
        if requested != &common_r_max {
            log::info!("common grid r_max resolved to {common_r_max:?} (requested {requested:?})");
        }
    }

    let run_dir = cfg.run_dir();
    let grids_dir = run_dir.join("grids");
    let votes_dir = cfg.output_dir.join("votes");
    fs::create_dir_all(&grids_dir)?;
    fs::create_dir_all(&votes_dir)?;
    let config_hash = cfg.config_hash()?;

    let results: Vec<GraphResult> = tasks
        .par_iter()
        .map(|task| -> Result<GraphResult> {
            let dist = load_or_sample_votes(cfg, task, &model, &model_hash, &noise, &votes_dir)?;
            let bounds = bound_top_two(&dist, cfg.alpha)?;
            let grid = certification_grid(
                &bounds,
                &task.grid_r_max,
                &noise,
                &task.partition,
                &engine_cfg,
            )?;
            let summary = GraphSummary {
                graph_id: task.graph_id.clone(),
                label: task.label,
                predicted: dist.top_label(),
                abstain: bounds.is_abstain(),
                top_votes: dist.top_count(),
                p_a_lower: bounds.p_a_lower,
                p_b_upper: bounds.p_b_upper,
            };
            Ok(GraphResult {
                summary,
                bounds,
                grid,
            })
        })
        .collect::<Result<_>>()?;

    // per-graph reports, serialized in graph order
    for (task, result) in tasks.iter().zip(&results) {
        let csv_path = grids_dir.join(format!("{}_grid.csv", task.graph_id));
        let mut csv = BufWriter::new(fs::File::create(&csv_path)?);
        write_grid_csv(&mut csv, &result.grid)?;
        csv.flush()?;
        let sidecar = GridSidecar::new(
            task.graph_id.clone(),
            config_hash.clone(),
            &result.bounds,
            derive_vote_seed(cfg.seed, &task.graph_id),
            &noise,
            &result.grid,
        );
        let json_path = grids_dir.join(format!("{}_grid.json", task.graph_id));
        serde_json::to_writer_pretty(BufWriter::new(fs::File::create(&json_path)?), &sidecar)?;
    }

    // aggregate certified ratio: correct prediction AND certificate at R
    let total = common_grid_len(&common_r_max);
    let mut aggregate = Vec::with_capacity(total);
    for index in 0..total {
        let point = common_grid_point(&common_r_max, index);
        let mut hits = 0usize;
        for (task, result) in tasks.iter().zip(&results) {
            let correct = result.summary.predicted == task.label;
            let clamped = clamp_point(&point, &task.grid_r_max);
            if correct && result.grid.is_certified(&clamped) {
                hits += 1;
            }
        }
        aggregate.push(hits as f64 / tasks.len() as f64);
    }

    let aggregate_path = run_dir.join("aggregate_grid.csv");
    let mut agg = BufWriter::new(fs::File::create(&aggregate_path)?);
    let header: Vec<String> = (1..=common_r_max.len()).map(|i| format!("R_{i}")).collect();
    writeln!(agg, "{},certified_ratio", header.join(","))?;
    for (index, ratio) in aggregate.iter().enumerate() {
        let point = common_grid_point(&common_r_max, index);
        let coords: Vec<String> = point.iter().map(|r| r.to_string()).collect();
        writeln!(agg, "{},{}", coords.join(","), ratio)?;
    }
    agg.flush()?;

    let n = tasks.len();
    let correct = results
        .iter()
        .zip(&tasks)
        .filter(|(r, t)| r.summary.predicted == t.label)
        .count();
    let abstentions = results.iter().filter(|r| r.summary.abstain).count();
    let summary = RunSummary {
        run_name: run_name(cfg.mode, &cfg.probs),
        mode: cfg.mode.as_str().to_string(),
        probs: cfg.probs.clone(),
        n_samples: cfg.n_samples,
        alpha: cfg.alpha,
        seed: cfg.seed,
        config_hash,
        n_graphs: n,
        abstentions,
        smoothed_accuracy: correct as f64 / n as f64,
        certified_accuracy_at_origin: aggregate[0],
        certified_ratio_at_r_max: *aggregate.last().expect("non-empty grid"),
        r_max: common_r_max,
        per_graph: results.into_iter().map(|r| r.summary).collect(),
    };
    serde_json::to_writer_pretty(
        BufWriter::new(fs::File::create(run_dir.join("run_summary.json"))?),
        &summary,
    )?;
    log::info!(
        "{}: accuracy {} certified@r_max {}",
        summary.run_name,
        summary.smoothed_accuracy,
        summary.certified_ratio_at_r_max
    );
    Ok(CertifyOutcome {
        run_dir,
        summary,
        aggregate,
    })
}

fn build_tasks<'a>(
    cfg: &ExperimentConfig,
    test: &'a LabeledGraphs,
    id_offset: usize,
) -> Result<Vec<GraphTask<'a>>> {
    let mut tasks = Vec::with_capacity(test.graphs.len());
    for (i, (graph, &label)) in test.graphs.iter().zip(&test.labels).enumerate() {
        let partition = match cfg.mode {
            Mode::Isotropic => NodePairPartition::isotropic(graph.num_nodes())?,
            Mode::Anisotropic => {
                if graph.num_nodes() != cfg.n_motif + cfg.n_random {
                    return Err(anyhow!(
                        "graph has {} nodes but the motif partition needs {}",
                        graph.num_nodes(),
                        cfg.n_motif + cfg.n_random
                    ));
                }
                NodePairPartition::motif(cfg.n_motif, cfg.n_random)?
            }
            Mode::SparsityAware => NodePairPartition::sparsity_aware(graph),
        };
        let sizes = partition.region_sizes().to_vec();
        let grid_r_max: Vec<usize> = match &cfg.r_max {
            Some(requested) => requested
                .iter()
                .zip(&sizes)
                .map(|(&r, &s)| r.min(s))
                .collect(),
            None => sizes,
        };
        tasks.push(GraphTask {
            graph_id: format!("g{:05}", id_offset + i),
            graph,
            label,
            partition,
            grid_r_max: RadiusVector::new(grid_r_max),
        });
    }
    Ok(tasks)
}

/// One row of the score table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreEntry {
    pub p_motif: f64,
    pub p_random: f64,
    pub score: usize,
}

/// Count, for each noise setting of the sweep, the grid points where more
/// than half of the test set is certified. Reads the aggregate grids
/// written by `certify`; missing runs are an error listing every absentee.
pub fn cmd_score(cfg: &ExperimentConfig) -> Result<Vec<ScoreEntry>> {
    if cfg.mode != Mode::Anisotropic {
        return Err(anyhow!("score sweeps are defined for anisotropic mode"));
    }
    let mut missing = Vec::new();
    let mut entries = Vec::new();
    for &p_motif in &cfg.sweep_motif {
        for &p_random in &cfg.sweep_random {
            let name = run_name(Mode::Anisotropic, &[p_motif, p_random]);
            let path = cfg
                .output_dir
                .join("runs")
                .join(&name)
                .join("aggregate_grid.csv");
            if !path.exists() {
                missing.push(name);
                continue;
            }
            let ratios = read_aggregate_ratios(&path)?;
            let score = ratios.iter().filter(|&&r| r > 0.5).count();
            entries.push(ScoreEntry {
                p_motif,
                p_random,
                score,
            });
        }
    }
    if !missing.is_empty() {
        return Err(anyhow!(
            "missing aggregate grids for {} runs: {}",
            missing.len(),
            missing.join(", ")
        ));
    }
    let path = cfg.output_dir.join("score_heatmap.csv");
    let mut out = BufWriter::new(fs::File::create(&path)?);
    writeln!(out, "p_motif,p_random,score")?;
    for entry in &entries {
        writeln!(out, "{},{},{}", entry.p_motif, entry.p_random, entry.score)?;
    }
    out.flush()?;
    log::info!("score heatmap written to {}", path.display());
    Ok(entries)
}

fn read_aggregate_ratios(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading aggregate grid {}", path.display()))?;
    let mut ratios = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let ratio = line
            .rsplit(',')
            .next()
            .and_then(|t| t.parse::<f64>().ok())
            .ok_or_else(|| anyhow!("{}: bad row at line {}", path.display(), lineno + 1))?;
        ratios.push(ratio);
    }
    Ok(ratios)
}

/// Human-readable summary of one certify run; also written to `report.txt`
/// inside the run directory.
pub fn cmd_report(cfg: &ExperimentConfig) -> Result<String> {
    let run_dir = cfg.run_dir();
    let summary: RunSummary = serde_json::from_reader(
        fs::File::open(run_dir.join("run_summary.json"))
            .with_context(|| format!("no run summary under {}", run_dir.display()))?,
    )?;
    let ratios = read_aggregate_ratios(&run_dir.join("aggregate_grid.csv"))?;
    let majority = ratios.iter().filter(|&&r| r > 0.5).count();

    let mut text = String::new();
    text.push_str(&format!("run: {}\n", summary.run_name));
    text.push_str(&format!(
        "mode: {}  probs: {:?}\n",
        summary.mode, summary.probs
    ));
    text.push_str(&format!(
        "samples: {}  confidence: {}  seed: {}  config: {}\n",
        summary.n_samples, summary.alpha, summary.seed, summary.config_hash
    ));
    text.push_str(&format!(
        "graphs: {}  abstentions: {}  smoothed accuracy: {:.4}\n",
        summary.n_graphs, summary.abstentions, summary.smoothed_accuracy
    ));
    text.push_str(&format!(
        "certified accuracy at R=0: {:.4}\n",
        summary.certified_accuracy_at_origin
    ));
    text.push_str(&format!(
        "certified ratio at R={:?}: {:.4}\n",
        summary.r_max, summary.certified_ratio_at_r_max
    ));
    text.push_str(&format!(
        "grid points with majority certified: {majority} of {}\n",
        ratios.len()
    ));
    let abstainers: Vec<&str> = summary
        .per_graph
        .iter()
        .filter(|g| g.abstain)
        .map(|g| g.graph_id.as_str())
        .collect();
    if !abstainers.is_empty() {
        text.push_str(&format!("abstaining graphs: {}\n", abstainers.join(", ")));
    }
    fs::write(run_dir.join("report.txt"), &text)?;
    Ok(text)
}
