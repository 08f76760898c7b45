use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use graphcert_cli::commands;
use graphcert_cli::config::{ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(
    name = "graphcert",
    version,
    about = "Robustness certification for graph classifiers via region-wise randomized smoothing"
)]
struct Cli {
    /// Flat key-value config file (TOML); flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic benchmark dataset.
    Generate(Overrides),
    /// Train the degree-histogram base classifier.
    Train(Overrides),
    /// Sample votes and compute certification grids for the test split.
    Certify(Overrides),
    /// Score the noise sweep from existing aggregate grids.
    Score(Overrides),
    /// Summarize one certify run.
    Report(Overrides),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (overrides, action): (&Overrides, _) = match &cli.command {
        Command::Generate(o) => (o, "generate"),
        Command::Train(o) => (o, "train"),
        Command::Certify(o) => (o, "certify"),
        Command::Score(o) => (o, "score"),
        Command::Report(o) => (o, "report"),
    };
    let cfg = ExperimentConfig::resolve(cli.config.as_deref(), overrides)?;
    match action {
        "generate" => {
            commands::cmd_generate(&cfg)?;
            println!(
                "dataset with {} graphs written to {}",
                cfg.train_size + cfg.val_size + cfg.test_size,
                cfg.dataset_dir.display()
            );
        }
        "train" => {
            let summary = commands::cmd_train(&cfg)?;
            println!(
                "model saved to {} (train {:.4}, val {:.4}, test {:.4})",
                cfg.model_path.display(),
                summary.train_accuracy,
                summary.val_accuracy,
                summary.test_accuracy
            );
        }
        "certify" => {
            let outcome = commands::cmd_certify(&cfg)?;
            println!(
                "{}: {} graphs, {} abstentions, smoothed accuracy {:.4}, certified at R={:?}: {:.4}",
                outcome.summary.run_name,
                outcome.summary.n_graphs,
                outcome.summary.abstentions,
                outcome.summary.smoothed_accuracy,
                outcome.summary.r_max,
                outcome.summary.certified_ratio_at_r_max
            );
            println!("reports under {}", outcome.run_dir.display());
        }
        "score" => {
            let entries = commands::cmd_score(&cfg)?;
            println!("p_motif\tp_random\tscore");
            for entry in entries {
                println!("{}\t{}\t{}", entry.p_motif, entry.p_random, entry.score);
            }
        }
        "report" => {
            let text = commands::cmd_report(&cfg)?;
            print!("{text}");
        }
        _ => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(graphcert_cli::exit_code(&err) as u8)
        }
    }
}
