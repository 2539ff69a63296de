//! `mash` — command-line front end for the desk-scale experiment.
//!
//! Subcommands: `gen-data` (dataset summary), `train` (full experiment,
//! optionally with the full-causal baseline), `eval` and `profile` (run a
//! saved checkpoint against a regenerated dataset), `ablate` (one-axis
//! configuration grids), and `grad-check` (whole-model finite-difference
//! verification).

use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use mash_core::harness::checkpoint::load_model;
use mash_core::harness::config::RunConfig;
use mash_core::harness::dataset::{gen_dataset, Dataset, QuestionCategory, SyntheticSample};
use mash_core::harness::experiment::{
    evaluate_model, revision, run_ablation, run_experiment, AblationAxis,
};
use mash_core::harness::profile::{mean_profile, ProfileRow};
use mash_core::harness::report::{RunMeta, PROFILE_ACTION_FILE, PROFILE_SCENE_FILE};
use mash_core::model::{grad_check_config, model_gradient_check};

#[derive(Parser)]
#[command(name = "mash", about = "Desk-scale disentangled spatial-temporal attention experiment")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

/// Flags shared by every data-touching subcommand.
#[derive(Args)]
struct Common {
    /// Flat key = value configuration file; defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Overrides the config file's seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> anyhow::Result<RunConfig> {
        let mut run = match &self.config {
            Some(path) => RunConfig::from_path(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            run.seed = seed;
        }
        Ok(run)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic dataset and write a split summary.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Output directory for dataset_summary.csv.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Train the configured model (and optionally the baseline), evaluate,
    /// and write checkpoints plus report CSVs.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Also train and evaluate the full-causal + distinct baseline.
        #[arg(long)]
        baseline: bool,
    },
    /// Evaluate a saved checkpoint on a regenerated dataset split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Which split to evaluate.
        #[arg(long, value_name = "train|test", default_value = "test")]
        split: String,
    },
    /// Write attention profiles of a saved checkpoint over the test split.
    Profile {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Train and evaluate every variant along one configuration axis.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// attention | disentangle | rope_scheme | all
        #[arg(long, value_name = "AXIS")]
        axis: String,
    },
    /// Verify analytic gradients of the tiny full model against central
    /// differences; exits nonzero if the max relative error reaches 1e-4.
    GradCheck {
        /// Seed for the probe model and input.
        #[arg(long, value_name = "U64", default_value_t = 7)]
        seed: u64,
    },
}

fn split_of<'a>(dataset: &'a Dataset, name: &str) -> anyhow::Result<&'a [SyntheticSample]> {
    match name {
        "train" => Ok(&dataset.train),
        "test" => Ok(&dataset.test),
        other => bail!("unknown split '{other}' (want train|test)"),
    }
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout();
    match cli.command {
        Cmd::GenData { common, out } => {
            let run = common.load()?;
            run.validate()?;
            let dataset = gen_dataset(&run.gen, run.seed)?;
            std::fs::create_dir_all(&out)?;
            let (train_usual, _, _) = Dataset::regime_counts(&dataset.train);
            let (usual, unusual, scene_only) = Dataset::regime_counts(&dataset.test);
            let mut csv = String::from("split,regime,count\n");
            csv.push_str(&format!("train,usual,{train_usual}\n"));
            csv.push_str(&format!("test,usual,{usual}\n"));
            csv.push_str(&format!("test,unusual,{unusual}\n"));
            csv.push_str(&format!("test,scene_only,{scene_only}\n"));
            csv.push_str(&format!("all,digest,{:016x}\n", dataset.digest()));
            std::fs::write(out.join("dataset_summary.csv"), csv)?;
            writeln!(
                stdout,
                "generated {} train / {} test samples, digest {:016x}",
                dataset.train.len(),
                dataset.test.len(),
                dataset.digest()
            )?;
        }
        Cmd::Train { common, out, baseline } => {
            let run = common.load()?;
            let arts = run_experiment(&run, &out, baseline, &mut stdout)?;
            if let Some(base) = &arts.baseline {
                writeln!(
                    stdout,
                    "hallucination-regime dual accuracy: model {:.4} vs baseline {:.4}",
                    arts.report.halluc_regimes_dual_mean(),
                    base.halluc_regimes_dual_mean()
                )?;
            }
        }
        Cmd::Eval { common, checkpoint, out, split } => {
            let run = common.load()?;
            run.validate()?;
            let (params, cfg) = load_model(&checkpoint)
                .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
            let expected = run.model_config()?;
            if cfg != expected {
                bail!(
                    "checkpoint was trained under a different configuration than --config \
                     (checkpoint seed {}, config seed {})",
                    cfg.seed,
                    run.seed
                );
            }
            let dataset = gen_dataset(&run.gen, run.seed)?;
            let samples = split_of(&dataset, &split)?;
            let meta = RunMeta {
                config_hash: run.config_hash(),
                seed: run.seed,
                revision: revision(),
                invalid_answers: 0,
            };
            let report = evaluate_model(&params, &cfg, samples, meta)?;
            report.write_dir(&out)?;
            for row in &report.dual {
                writeln!(
                    stdout,
                    "{}/{}: dual {:.4} (n={})",
                    row.regime.as_str(),
                    row.category.as_str(),
                    row.dual_acc,
                    row.n
                )?;
            }
            writeln!(stdout, "report written to {}", out.display())?;
        }
        Cmd::Profile { common, checkpoint, out } => {
            let run = common.load()?;
            run.validate()?;
            let (params, cfg) = load_model(&checkpoint)
                .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
            let dataset = gen_dataset(&run.gen, run.seed)?;
            let action = mean_profile(&dataset.test, QuestionCategory::Action, &params, &cfg)?;
            let scene = mean_profile(&dataset.test, QuestionCategory::Scene, &params, &cfg)?;
            std::fs::create_dir_all(&out)?;
            let write_profile = |file: &str, rows: &[ProfileRow]| -> anyhow::Result<()> {
                let mut csv = String::from("layer,head,block,mass\n");
                for r in rows {
                    csv.push_str(&format!("{},{},{},{}\n", r.layer, r.head, r.block.as_str(), r.mass));
                }
                std::fs::write(out.join(file), csv)?;
                Ok(())
            };
            write_profile(PROFILE_ACTION_FILE, &action)?;
            write_profile(PROFILE_SCENE_FILE, &scene)?;
            writeln!(stdout, "profiles written to {}", out.display())?;
        }
        Cmd::Ablate { common, out, axis } => {
            let run = common.load()?;
            let axis = AblationAxis::parse(&axis)?;
            let ran = run_ablation(&run, axis, &out, &mut stdout)?;
            for (name, report) in &ran {
                writeln!(
                    stdout,
                    "{name}: hallucination-regime dual accuracy {:.4}",
                    report.halluc_regimes_dual_mean()
                )?;
            }
        }
        Cmd::GradCheck { seed } => {
            let cfg = grad_check_config(seed);
            let err = model_gradient_check(&cfg, seed ^ 1)?;
            writeln!(stdout, "max relative gradient error: {err:.3e}")?;
            if err >= 1e-4 {
                bail!("gradient check failed: {err:.3e} >= 1e-4");
            }
        }
    }
    Ok(())
}
