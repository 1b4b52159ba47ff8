//! Command-line entry points for cohort generation, training, evaluation,
//! and strategy-comparison sweeps.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use oculomix::cohort::{save_cohort, sidecar_path};
use oculomix::harness::{
    compare, evaluate, run_experiment, ExperimentConfig, SplitChoice, SweepSpec,
};
use oculomix::synth::{cohort_summary, generate_cohort, SynthConfig};

#[derive(Parser)]
#[command(
    name = "oculomix",
    about = "Hierarchy-constrained mixed-sample augmentation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort and write cohort.json, cohort.pixels,
    /// and summary.json into the output directory.
    Generate {
        /// Path to a SynthConfig JSON file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one experiment; outputs land in the config's output_dir.
    Train {
        /// Path to an ExperimentConfig JSON file.
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint on a cohort file.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Path to the cohort JSON (the .pixels sidecar sits next to it).
        #[arg(long)]
        cohort: PathBuf,
        /// train | val | test | all
        #[arg(long, default_value = "test")]
        split: SplitChoice,
    },
    /// Run a sweep and write table.csv / table.txt / cells.csv.
    Compare {
        /// Path to a SweepSpec JSON file.
        #[arg(long)]
        sweep: PathBuf,
        /// Output directory for cells and tables.
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let raw = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&raw).with_context(|| format!("parsing {}", path.display()))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate { config, out } => {
            let synth: SynthConfig = read_json(&config)?;
            let index = generate_cohort(&synth)?;
            std::fs::create_dir_all(&out)
                .with_context(|| format!("creating {}", out.display()))?;
            let cohort_path = out.join("cohort.json");
            save_cohort(&index, &cohort_path)?;
            let summary = cohort_summary(&index)?;
            let summary_path = out.join("summary.json");
            let mut bytes = serde_json::to_vec_pretty(&summary)?;
            bytes.push(b'\n');
            std::fs::write(&summary_path, bytes)
                .with_context(|| format!("writing {}", summary_path.display()))?;
            println!(
                "wrote {} + {} ({} patients, {} exams, {} images)",
                cohort_path.display(),
                sidecar_path(&cohort_path).display(),
                summary.n_patients,
                summary.n_exams,
                summary.n_images
            );
        }
        Command::Train { config } => {
            let experiment: ExperimentConfig = read_json(&config)?;
            let log = run_experiment(&experiment)?;
            println!(
                "finished {} epochs in {:.1}s: test AUROC {:.4}, AUPRC {:.4}, C-index {:.4} ({})",
                log.epochs.len(),
                log.summary.wall_seconds,
                log.summary.test_auroc,
                log.summary.test_auprc,
                log.summary.test_c_index,
                log.summary.config_hash
            );
        }
        Command::Evaluate {
            checkpoint,
            cohort,
            split,
        } => {
            let report = evaluate(&checkpoint, &cohort, split)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Compare { sweep, out } => {
            let spec: SweepSpec = read_json(&sweep)?;
            let report = compare(&spec, &out)?;
            println!(
                "{} cells -> {}",
                report.cells.len(),
                out.join("table.txt").display()
            );
            let rendered = std::fs::read_to_string(out.join("table.txt"))?;
            print!("{rendered}");
        }
    }
    Ok(())
}
