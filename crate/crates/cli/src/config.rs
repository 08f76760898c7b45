//! Experiment configuration: defaults, a flat key-value config file (TOML),
//! and same-named command-line overrides, merged in that order.

use std::path::{Path, PathBuf};

use clap::Args;
use graphcert::synthgen::SynthConfig;
use graphcert::{stable_hash_hex, Error};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Isotropic,
    Anisotropic,
    SparsityAware,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Isotropic => "isotropic",
            Mode::Anisotropic => "anisotropic",
            Mode::SparsityAware => "sparsity-aware",
        }
    }

    /// Number of flip probabilities the mode expects.
    pub fn prob_arity(&self) -> usize {
        match self {
            Mode::Isotropic => 1,
            Mode::Anisotropic | Mode::SparsityAware => 2,
        }
    }
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub dataset_dir: PathBuf,
    pub model_path: PathBuf,
    pub output_dir: PathBuf,
    pub n_motif: usize,
    pub n_random: usize,
    pub er_p: f64,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub seed: u64,
    pub probs: Vec<f64>,
    pub n_samples: u64,
    pub alpha: f64,
    /// Per-region grid bounds; `None` means the full region sizes.
    pub r_max: Option<Vec<usize>>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    pub sweep_motif: Vec<f64>,
    pub sweep_random: Vec<f64>,
    pub use_votes_cache: bool,
    pub corner_pruning: bool,
    pub max_cells: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::Anisotropic,
            dataset_dir: PathBuf::from("out/dataset"),
            model_path: PathBuf::from("out/model.json"),
            output_dir: PathBuf::from("out"),
            n_motif: 10,
            n_random: 10,
            er_p: 0.5,
            train_size: 1000,
            val_size: 1000,
            test_size: 100,
            seed: 42,
            probs: vec![0.02, 0.45],
            n_samples: 100_000,
            alpha: 0.99,
            r_max: None,
            epochs: 60,
            learning_rate: 0.05,
            regularization: 1e-4,
            sweep_motif: vec![0.02, 0.04, 0.06, 0.08, 0.10, 0.12, 0.14, 0.16, 0.18, 0.20],
            sweep_random: vec![0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45],
            use_votes_cache: true,
            corner_pruning: false,
            max_cells: 10_000_000,
        }
    }
}

/// Flat config file; every key optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub mode: Option<Mode>,
    pub dataset_dir: Option<PathBuf>,
    pub model_path: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub n_motif: Option<usize>,
    pub n_random: Option<usize>,
    pub er_p: Option<f64>,
    pub train_size: Option<usize>,
    pub val_size: Option<usize>,
    pub test_size: Option<usize>,
    pub seed: Option<u64>,
    pub probs: Option<Vec<f64>>,
    pub n_samples: Option<u64>,
    pub alpha: Option<f64>,
    pub r_max: Option<Vec<usize>>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub regularization: Option<f64>,
    pub sweep_motif: Option<Vec<f64>>,
    pub sweep_random: Option<Vec<f64>>,
    pub use_votes_cache: Option<bool>,
    pub corner_pruning: Option<bool>,
    pub max_cells: Option<usize>,
}

/// Command-line overrides; one flag per config key.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub dataset_dir: Option<PathBuf>,
    #[arg(long)]
    pub model_path: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub n_motif: Option<usize>,
    #[arg(long)]
    pub n_random: Option<usize>,
    #[arg(long)]
    pub er_p: Option<f64>,
    #[arg(long)]
    pub train_size: Option<usize>,
    #[arg(long)]
    pub val_size: Option<usize>,
    #[arg(long)]
    pub test_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub probs: Option<Vec<f64>>,
    #[arg(long)]
    pub n_samples: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub r_max: Option<Vec<usize>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub regularization: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub sweep_motif: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub sweep_random: Option<Vec<f64>>,
    #[arg(long)]
    pub use_votes_cache: Option<bool>,
    #[arg(long)]
    pub corner_pruning: Option<bool>,
    #[arg(long)]
    pub max_cells: Option<usize>,
}

macro_rules! merge {
    ($cfg:ident, $layer:ident, $($field:ident),+ $(,)?) => {
        $(if let Some(value) = $layer.$field.clone() {
            $cfg.$field = value;
        })+
    };
}

impl ExperimentConfig {
    /// Defaults, then the config file, then command-line flags.
    pub fn resolve(file: Option<&Path>, cli: &Overrides) -> Result<Self, Error> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)?;
            let parsed: FileConfig = toml::from_str(&text)
                .map_err(|e| Error::InvalidInput(format!("config file {}: {e}", path.display())))?;
            apply_file(&mut cfg, &parsed);
        }
        apply_cli(&mut cfg, cli);
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), Error> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput(format!(
                "alpha {} outside (0, 1)",
                self.alpha
            )));
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidInput("n_samples must be at least 1".into()));
        }
        if self.probs.len() != self.mode.prob_arity() {
            return Err(Error::InvalidInput(format!(
                "{} mode expects {} flip probabilities, got {}",
                self.mode.as_str(),
                self.mode.prob_arity(),
                self.probs.len()
            )));
        }
        if let Some(r_max) = &self.r_max {
            if r_max.len() != self.probs.len() {
                return Err(Error::InvalidInput(format!(
                    "r_max has {} entries for {} regions",
                    r_max.len(),
                    self.probs.len()
                )));
            }
        }
        Ok(())
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            n_motif: self.n_motif,
            n_random: self.n_random,
            er_p: self.er_p,
            train_size: self.train_size,
            val_size: self.val_size,
            test_size: self.test_size,
            seed: self.seed,
        }
    }

    /// Fingerprint of the resolved configuration, embedded in every report.
    pub fn config_hash(&self) -> Result<String, Error> {
        Ok(stable_hash_hex(serde_json::to_string(self)?.as_bytes()))
    }

    /// Directory holding the outputs of one certify run.
    pub fn run_dir(&self) -> PathBuf {
        self.output_dir
            .join("runs")
            .join(run_name(self.mode, &self.probs))
    }
}

fn apply_file(cfg: &mut ExperimentConfig, layer: &FileConfig) {
    merge!(
        cfg,
        layer,
        mode,
        dataset_dir,
        model_path,
        output_dir,
        n_motif,
        n_random,
        er_p,
        train_size,
        val_size,
        test_size,
        seed,
        n_samples,
        alpha,
        epochs,
        learning_rate,
        regularization,
        sweep_motif,
        sweep_random,
        use_votes_cache,
        corner_pruning,
        max_cells,
        probs,
    );
    if layer.r_max.is_some() {
        cfg.r_max = layer.r_max.clone();
    }
}

fn apply_cli(cfg: &mut ExperimentConfig, layer: &Overrides) {
    merge!(
        cfg,
        layer,
        mode,
        dataset_dir,
        model_path,
        output_dir,
        n_motif,
        n_random,
        er_p,
        train_size,
        val_size,
        test_size,
        seed,
        n_samples,
        alpha,
        epochs,
        learning_rate,
        regularization,
        sweep_motif,
        sweep_random,
        use_votes_cache,
        corner_pruning,
        max_cells,
        probs,
    );
    if layer.r_max.is_some() {
        cfg.r_max = layer.r_max.clone();
    }
}

/// Deterministic run directory name from mode and noise probabilities.
pub fn run_name(mode: Mode, probs: &[f64]) -> String {
    match mode {
        Mode::Isotropic => format!("isotropic_p{}", probs[0]),
        Mode::Anisotropic => format!("anisotropic_pm{}_pr{}", probs[0], probs[1]),
        Mode::SparsityAware => format!("sparsity_pd{}_pa{}", probs[0], probs[1]),
    }
}
