//! Synthetic motif benchmark: a label-determining motif (cycle = negative,
//! clique = positive) joined by a single bridge edge to a connected
//! Erdős–Rényi graph that carries no label information.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use serde::{Deserialize, Serialize};

use crate::graph::{pair_iter, read_edge_list, write_edge_list, GraphBits};
use crate::smoothing::Label;
use crate::{stable_hash_hex, Error, Result};

pub const NEGATIVE_LABEL: Label = 0;
pub const POSITIVE_LABEL: Label = 1;

const ER_ATTEMPT_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_motif: usize,
    pub n_random: usize,
    pub er_p: f64,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_motif: 10,
            n_random: 10,
            er_p: 0.5,
            train_size: 1000,
            val_size: 1000,
            test_size: 100,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn num_nodes(&self) -> usize {
        self.n_motif + self.n_random
    }

    fn validate(&self) -> Result<()> {
        if self.n_motif < 3 {
            return Err(Error::invalid("motif needs at least 3 nodes"));
        }
        if self.n_random < 1 {
            return Err(Error::invalid("random part needs at least 1 node"));
        }
        if !(self.er_p > 0.0 && self.er_p < 1.0) {
            return Err(Error::invalid(format!("er_p {} outside (0, 1)", self.er_p)));
        }
        for (name, size) in [
            ("train", self.train_size),
            ("val", self.val_size),
            ("test", self.test_size),
        ] {
            if size < 1 || size % 2 != 0 {
                return Err(Error::invalid(format!(
                    "{name} split size {size} must be a positive even count for class balance"
                )));
            }
        }
        Ok(())
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

fn is_connected(g: &GraphBits) -> bool {
    let n = g.num_nodes();
    let mut uf = UnionFind::new(n);
    for (k, (u, v)) in pair_iter(n).enumerate() {
        if g.bit(k) {
            uf.union(u, v);
        }
    }
    let root = uf.find(0);
    (1..n).all(|v| uf.find(v) == root)
}

/// Sample G(n, p) by rejection until connected. Errors when the attempt cap
/// is exhausted, which only happens for p far too small for connectivity.
pub fn connected_er<R: Rng>(n: usize, p: f64, rng: &mut R) -> Result<GraphBits> {
    if n == 0 {
        return Err(Error::invalid("need at least one node"));
    }
    for _ in 0..ER_ATTEMPT_CAP {
        let bits: Vec<bool> = (0..crate::graph::pair_count(n))
            .map(|_| rng.random::<f64>() < p)
            .collect();
        let g = GraphBits::from_bits(n, bits)?;
        if is_connected(&g) {
            return Ok(g);
        }
    }
    Err(Error::Generation(format!(
        "no connected G({n}, {p}) sample within {ER_ATTEMPT_CAP} attempts"
    )))
}

/// One benchmark graph: motif on nodes `0..n_motif` (cycle for the negative
/// label, clique for the positive), a connected ER graph on the rest, and
/// exactly one bridge edge with uniformly chosen endpoints.
pub fn generate_graph<R: Rng>(label: Label, cfg: &SynthConfig, rng: &mut R) -> Result<GraphBits> {
    cfg.validate()?;
    let n = cfg.num_nodes();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    match label {
        NEGATIVE_LABEL => {
            for i in 0..cfg.n_motif {
                edges.push((i, (i + 1) % cfg.n_motif));
            }
        }
        POSITIVE_LABEL => {
            edges.extend(pair_iter(cfg.n_motif));
        }
        other => return Err(Error::invalid(format!("unknown label {other}"))),
    }
    let random_part = connected_er(cfg.n_random, cfg.er_p, rng)?;
    for (u, v) in crate::graph::decode_graph(&random_part) {
        edges.push((u + cfg.n_motif, v + cfg.n_motif));
    }
    let bridge_motif = rng.random_range(0..cfg.n_motif);
    let bridge_random = cfg.n_motif + rng.random_range(0..cfg.n_random);
    edges.push((bridge_motif, bridge_random));
    crate::graph::encode_graph(&edges, n)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledGraphs {
    pub graphs: Vec<GraphBits>,
    pub labels: Vec<Label>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub train: LabeledGraphs,
    pub val: LabeledGraphs,
    pub test: LabeledGraphs,
}

pub const SPLIT_NAMES: [&str; 3] = ["train", "val", "test"];

impl SynthDataset {
    pub fn split(&self, name: &str) -> Option<&LabeledGraphs> {
        match name {
            "train" => Some(&self.train),
            "val" => Some(&self.val),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

fn generate_split(cfg: &SynthConfig, size: usize, split_index: u64) -> Result<LabeledGraphs> {
    let mut rng = ChaCha8Rng::seed_from_u64(
        cfg.seed
            .wrapping_add(split_index.wrapping_mul(0x9e37_79b9_7f4a_7c15)),
    );
    let mut graphs = Vec::with_capacity(size);
    let mut labels = Vec::with_capacity(size);
    for i in 0..size {
        let label = if i % 2 == 0 {
            NEGATIVE_LABEL
        } else {
            POSITIVE_LABEL
        };
        graphs.push(generate_graph(label, cfg, &mut rng)?);
        labels.push(label);
    }
    Ok(LabeledGraphs { graphs, labels })
}

/// Generate balanced train/val/test splits, deterministic per seed.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    Ok(SynthDataset {
        config: cfg.clone(),
        train: generate_split(cfg, cfg.train_size, 1)?,
        val: generate_split(cfg, cfg.val_size, 2)?,
        test: generate_split(cfg, cfg.test_size, 3)?,
    })
}

#[derive(Serialize, Deserialize)]
struct DatasetMeta {
    config: SynthConfig,
    config_hash: String,
}

pub fn config_hash(cfg: &SynthConfig) -> Result<String> {
    Ok(stable_hash_hex(serde_json::to_string(cfg)?.as_bytes()))
}

fn graph_file_name(id: usize) -> String {
    format!("g{id:05}.txt")
}

/// Write the dataset directory: `graphs/` with one edge-list file per
/// graph, `labels.csv` with `graph_id,label,split` rows, and `meta.json`.
pub fn save_dataset(dir: &Path, dataset: &SynthDataset) -> Result<()> {
    let graphs_dir = dir.join("graphs");
    fs::create_dir_all(&graphs_dir)?;
    let mut labels_csv = BufWriter::new(fs::File::create(dir.join("labels.csv"))?);
    writeln!(labels_csv, "graph_id,label,split")?;
    let mut id = 0usize;
    for split_name in SPLIT_NAMES {
        let split = dataset.split(split_name).expect("known split name");
        for (g, &label) in split.graphs.iter().zip(&split.labels) {
            let file = fs::File::create(graphs_dir.join(graph_file_name(id)))?;
            write_edge_list(BufWriter::new(file), g)?;
            writeln!(labels_csv, "g{id:05},{label},{split_name}")?;
            id += 1;
        }
    }
    labels_csv.flush()?;
    let meta = DatasetMeta {
        config: dataset.config.clone(),
        config_hash: config_hash(&dataset.config)?,
    };
    let meta_file = BufWriter::new(fs::File::create(dir.join("meta.json"))?);
    serde_json::to_writer_pretty(meta_file, &meta)?;
    Ok(())
}

/// Read a dataset directory written by [`save_dataset`].
pub fn load_dataset(dir: &Path) -> Result<SynthDataset> {
    let meta: DatasetMeta = serde_json::from_reader(fs::File::open(dir.join("meta.json"))?)?;
    let labels_text = fs::read_to_string(dir.join("labels.csv"))?;
    let mut splits: BTreeMap<&str, LabeledGraphs> = BTreeMap::new();
    for name in SPLIT_NAMES {
        splits.insert(
            name,
            LabeledGraphs {
                graphs: Vec::new(),
                labels: Vec::new(),
            },
        );
    }
    for (lineno, line) in labels_text.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [graph_id, label, split_name] = fields.as_slice() else {
            return Err(Error::invalid(format!(
                "labels.csv line {}: bad row",
                lineno + 1
            )));
        };
        let label: Label = label
            .parse()
            .map_err(|_| Error::invalid(format!("labels.csv line {}: bad label", lineno + 1)))?;
        let path = dir.join("graphs").join(format!("{graph_id}.txt"));
        let graph = read_edge_list(std::io::BufReader::new(fs::File::open(&path)?))?;
        let split = splits
            .get_mut(split_name)
            .ok_or_else(|| Error::invalid(format!("unknown split {split_name}")))?;
        split.graphs.push(graph);
        split.labels.push(label);
    }
    let mut take = |name: &str| splits.remove(name).expect("split prefilled");
    Ok(SynthDataset {
        config: meta.config,
        train: take("train"),
        val: take("val"),
        test: take("test"),
    })
}
