//! End-to-end run orchestration: generate data, train, evaluate, ablate.
//!
//! Every run is a pure function of (config, seed): the dataset, the shuffle
//! order, the initialization, and the evaluation are all seeded, so two
//! invocations write byte-identical metric files.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::process::Command;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::dst_attention::{AttnDir, MaskMode};
use crate::error::{Error, Result};
use crate::harness::checkpoint::save_model;
use crate::harness::config::RunConfig;
use crate::harness::dataset::{gen_dataset, Dataset, QuestionCategory, SyntheticSample};
use crate::harness::eval::{evaluate_dual, ModelAnswerer};
use crate::harness::profile::mean_profile;
use crate::harness::report::{EvalReport, RunMeta};
use crate::harness::vocab::Vocab;
use crate::model::{train_step, AdamState, ModelConfig, ModelParams, TrainConfig, TrainExample};
use crate::positional::RopeScheme;

/// Separate seed stream for the example shuffle so it never aliases the
/// per-sample generation streams.
const SHUFFLE_STREAM: u64 = 0xa076_1d64_78bd_642f;

/// Short git revision of the working tree, or "unknown" outside a checkout.
pub fn revision() -> String {
    Command::new("git")
        .args(["rev-parse", "--short", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".to_owned())
}

/// Train one model on the train split. Progress is reported as
/// (completed step, batch loss) once per step.
pub fn train_model(
    run: &RunConfig,
    cfg: &ModelConfig,
    dataset: &Dataset,
    progress: &mut dyn FnMut(usize, f64),
) -> Result<ModelParams> {
    let mut params = ModelParams::init(cfg)?;
    let mut opt = AdamState::new(&params);
    let tcfg = TrainConfig { lr: run.train.lr, ..TrainConfig::default() };

    // One flat list of (sample, question) items, shuffled once.
    let mut items: Vec<(usize, usize)> = dataset
        .train
        .iter()
        .enumerate()
        .flat_map(|(i, s)| (0..s.qa.len()).map(move |q| (i, q)))
        .collect();
    if items.is_empty() {
        return Err(Error::Validation("training split has no questions".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(run.seed ^ SHUFFLE_STREAM);
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
    let texts: Vec<Vec<u32>> =
        items.iter().map(|&(i, q)| dataset.train[i].qa[q].full_text()).collect();

    let batch = run.train.batch_size.min(items.len());
    for step in 0..run.train.steps {
        let mut examples = Vec::with_capacity(batch);
        for k in 0..batch {
            let pos = (step * batch + k) % items.len();
            let (i, _) = items[pos];
            examples.push(TrainExample {
                fe: &dataset.train[i].fe,
                text: &texts[pos],
                prompt_len: Vocab::PROMPT_LEN,
                answer_len: Vocab::ANSWER_LEN,
            });
        }
        // Hold the configured rate for the first 60% of the run, then decay
        // linearly to 10% so late batches settle instead of kicking the
        // weights around the minimum.
        let frac = (step + 1) as f64 / run.train.steps as f64;
        let scale = if frac <= 0.6 { 1.0 } else { 1.0 - 0.9 * (frac - 0.6) / 0.4 };
        let step_cfg = TrainConfig { lr: tcfg.lr * scale, ..tcfg };
        let loss = train_step(&examples, &mut params, &mut opt, &step_cfg, cfg)?;
        progress(step + 1, loss);
    }
    Ok(params)
}

/// Evaluate a model on samples: dual accuracies plus attention profiles over
/// gold action and gold scene questions.
pub fn evaluate_model(
    params: &ModelParams,
    cfg: &ModelConfig,
    samples: &[SyntheticSample],
    meta: RunMeta,
) -> Result<EvalReport> {
    let outcome = evaluate_dual(samples, &mut ModelAnswerer { params, cfg })?;
    let profile_action = mean_profile(samples, QuestionCategory::Action, params, cfg)?;
    let profile_scene = mean_profile(samples, QuestionCategory::Scene, params, cfg)?;
    Ok(EvalReport::new(outcome, profile_action, profile_scene, meta))
}

/// The comparison model: one undifferentiated causal attention block over
/// the whole sequence, no disentangling, per-token distinct rotation.
pub fn baseline_run(run: &RunConfig) -> RunConfig {
    let mut b = run.clone();
    b.model.mask_mode = MaskMode::FullCausal;
    b.model.disentangle = false;
    b.model.rope_scheme = RopeScheme::Distinct;
    b
}

fn run_meta(run: &RunConfig) -> RunMeta {
    RunMeta { config_hash: run.config_hash(), seed: run.seed, revision: revision(), invalid_answers: 0 }
}

/// Train + checkpoint + evaluate one configuration against an existing
/// dataset. Writes `<name>.mashv1` and `<name>_report/` under `out`.
pub fn train_and_report(
    run: &RunConfig,
    dataset: &Dataset,
    out: &Path,
    name: &str,
    log: &mut dyn Write,
) -> Result<EvalReport> {
    let cfg = run.model_config()?;
    writeln!(log, "[{name}] config {:016x} seed {}", run.config_hash(), run.seed)?;
    let mut last_logged = 0usize;
    let params = train_model(run, &cfg, dataset, &mut |step, loss| {
        if step - last_logged >= 100 || step == run.train.steps {
            let _ = writeln!(log, "[{name}] step {step}/{} loss {loss:.4}", run.train.steps);
            last_logged = step;
        }
    })?;
    if !params.all_finite() {
        return Err(Error::NonFinite(format!("[{name}] non-finite weights after training")));
    }
    save_model(&out.join(format!("{name}.mashv1")), &params, &cfg)?;
    let report = evaluate_model(&params, &cfg, &dataset.test, run_meta(run))?;
    report.write_dir(&out.join(format!("{name}_report")))?;
    writeln!(
        log,
        "[{name}] dual mean over hallucination regimes: {:.4} (invalid answers: {})",
        report.halluc_regimes_dual_mean(),
        report.meta.invalid_answers
    )?;
    Ok(report)
}

/// Reports from one experiment run.
pub struct ExperimentArtifacts {
    pub report: EvalReport,
    pub baseline: Option<EvalReport>,
}

/// The full experiment: generate the dataset, train and evaluate the
/// configured model, optionally also the full-causal baseline on the same
/// data.
pub fn run_experiment(
    run: &RunConfig,
    out: &Path,
    with_baseline: bool,
    log: &mut dyn Write,
) -> Result<ExperimentArtifacts> {
    run.validate()?;
    std::fs::create_dir_all(out)?;
    let dataset = gen_dataset(&run.gen, run.seed)?;
    writeln!(
        log,
        "dataset: {} train / {} test samples, digest {:016x}",
        dataset.train.len(),
        dataset.test.len(),
        dataset.digest()
    )?;
    let report = train_and_report(run, &dataset, out, "model", log)?;
    let baseline = if with_baseline {
        Some(train_and_report(&baseline_run(run), &dataset, out, "baseline", log)?)
    } else {
        None
    };
    Ok(ExperimentArtifacts { report, baseline })
}

/// One-axis ablation grids, mirroring the switchable attention settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationAxis {
    Attention,
    Disentangle,
    RopeScheme,
    All,
}

impl AblationAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            AblationAxis::Attention => "attention",
            AblationAxis::Disentangle => "disentangle",
            AblationAxis::RopeScheme => "rope_scheme",
            AblationAxis::All => "all",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "attention" => Ok(AblationAxis::Attention),
            "disentangle" => Ok(AblationAxis::Disentangle),
            "rope_scheme" => Ok(AblationAxis::RopeScheme),
            "all" => Ok(AblationAxis::All),
            other => Err(Error::Config(format!(
                "unknown ablation axis '{other}' (want attention|disentangle|rope_scheme|all)"
            ))),
        }
    }

    fn basic(self) -> Vec<AblationAxis> {
        match self {
            AblationAxis::All => {
                vec![AblationAxis::Attention, AblationAxis::Disentangle, AblationAxis::RopeScheme]
            }
            one => vec![one],
        }
    }
}

/// Named variants of one axis, all other settings at the run's values.
pub fn ablation_variants(run: &RunConfig, axis: AblationAxis) -> Vec<(String, RunConfig)> {
    let mut out = Vec::new();
    match axis {
        AblationAxis::Attention => {
            for t in [AttnDir::Causal, AttnDir::Bidirectional] {
                for s in [AttnDir::Causal, AttnDir::Bidirectional] {
                    let mut v = run.clone();
                    v.model.temporal_attn = t;
                    v.model.spatial_attn = s;
                    out.push((format!("attn_t_{}_s_{}", t.as_str(), s.as_str()), v));
                }
            }
        }
        AblationAxis::Disentangle => {
            for on in [true, false] {
                let mut v = run.clone();
                v.model.disentangle = on;
                out.push((format!("disentangle_{}", if on { "on" } else { "off" }), v));
            }
        }
        AblationAxis::RopeScheme => {
            for scheme in [RopeScheme::Distinct, RopeScheme::Balanced, RopeScheme::Harmonic] {
                let mut v = run.clone();
                v.model.rope_scheme = scheme;
                out.push((format!("rope_{}", scheme.as_str()), v));
            }
        }
        AblationAxis::All => {
            for basic in axis.basic() {
                out.extend(ablation_variants(run, basic));
            }
        }
    }
    out
}

/// Run every variant of the axis once (configurations appearing on several
/// axes are trained once) and write per-variant reports plus one summary CSV
/// per basic axis: `variant,regime,category,dual_acc,n`.
pub fn run_ablation(
    run: &RunConfig,
    axis: AblationAxis,
    out: &Path,
    log: &mut dyn Write,
) -> Result<Vec<(String, EvalReport)>> {
    run.validate()?;
    std::fs::create_dir_all(out)?;
    let dataset = gen_dataset(&run.gen, run.seed)?;
    writeln!(log, "ablation over {} on dataset digest {:016x}", axis.as_str(), dataset.digest())?;

    let variants = ablation_variants(run, axis);
    let mut by_hash: BTreeMap<u64, (String, EvalReport)> = BTreeMap::new();
    let mut ran = Vec::new();
    for (name, variant) in &variants {
        let hash = variant.config_hash();
        if let Some((first, _)) = by_hash.get(&hash) {
            writeln!(log, "[{name}] same configuration as [{first}], reusing its run")?;
            continue;
        }
        variant.validate()?;
        let report = train_and_report(variant, &dataset, &out.join(name), "model", log)?;
        by_hash.insert(hash, (name.clone(), report.clone()));
        ran.push((name.clone(), report));
    }

    for basic in axis.basic() {
        let mut csv = String::from("variant,regime,category,dual_acc,n\n");
        for (name, variant) in ablation_variants(run, basic) {
            let (_, report) = &by_hash[&variant.config_hash()];
            for row in &report.dual {
                csv.push_str(&format!(
                    "{name},{},{},{},{}\n",
                    row.regime.as_str(),
                    row.category.as_str(),
                    row.dual_acc,
                    row.n
                ));
            }
        }
        std::fs::write(out.join(format!("summary_{}.csv", basic.as_str())), csv)?;
    }
    Ok(ran)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::dataset::GenConfig;
    use crate::harness::config::{ModelSettings, TrainSettings};

    fn tiny_run() -> RunConfig {
        RunConfig {
            gen: GenConfig {
                train_samples: 8,
                test_samples: 6,
                grid_h: 6,
                grid_w: 4,
                enc_dim: 5,
                ..GenConfig::default()
            },
            model: ModelSettings {
                blocks: 1,
                width: 8,
                heads: 2,
                head_dim: 4,
                mlp_hidden: 8,
                ..ModelSettings::default()
            },
            train: TrainSettings { lr: 3e-3, steps: 3, batch_size: 4 },
            seed: 7,
        }
    }

    #[test]
    fn training_is_deterministic() {
        let run = tiny_run();
        let cfg = run.model_config().unwrap();
        let dataset = gen_dataset(&run.gen, run.seed).unwrap();
        let mut losses_a = Vec::new();
        let a = train_model(&run, &cfg, &dataset, &mut |_, l| losses_a.push(l)).unwrap();
        let mut losses_b = Vec::new();
        let b = train_model(&run, &cfg, &dataset, &mut |_, l| losses_b.push(l)).unwrap();
        assert_eq!(losses_a.len(), 3);
        for (x, y) in losses_a.iter().zip(&losses_b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        for ((n, ta), (_, tb)) in a.named_tensors().iter().zip(b.named_tensors().iter()) {
            assert!(ta.bits_eq(tb), "{n} diverged");
        }
    }

    #[test]
    fn experiment_writes_all_artifacts() {
        let run = tiny_run();
        let dir = tempfile::tempdir().unwrap();
        let mut log = Vec::new();
        let arts = run_experiment(&run, dir.path(), true, &mut log).unwrap();
        assert!(dir.path().join("model.mashv1").is_file());
        assert!(dir.path().join("model_report/report.csv").is_file());
        assert!(dir.path().join("baseline.mashv1").is_file());
        assert!(dir.path().join("baseline_report/meta.csv").is_file());
        let baseline = arts.baseline.unwrap();
        assert_ne!(arts.report.meta.config_hash, baseline.meta.config_hash);
        let text = String::from_utf8(log).unwrap();
        assert!(text.contains("dataset:"), "{text}");
        // Written reports read back equal to the in-memory ones.
        let back = EvalReport::read_dir(&dir.path().join("model_report")).unwrap();
        assert_eq!(back.meta, arts.report.meta);
    }

    #[test]
    fn ablation_axis_sizes_and_dedup() {
        let run = tiny_run();
        assert_eq!(ablation_variants(&run, AblationAxis::Attention).len(), 4);
        assert_eq!(ablation_variants(&run, AblationAxis::Disentangle).len(), 2);
        assert_eq!(ablation_variants(&run, AblationAxis::RopeScheme).len(), 3);
        let all = ablation_variants(&run, AblationAxis::All);
        assert_eq!(all.len(), 9);
        let unique: std::collections::BTreeSet<u64> =
            all.iter().map(|(_, v)| v.config_hash()).collect();
        // The run's own configuration appears on every axis.
        assert_eq!(unique.len(), 7);
    }

    #[test]
    fn ablation_writes_summary_per_axis() {
        let run = tiny_run();
        let dir = tempfile::tempdir().unwrap();
        let mut log = Vec::new();
        let ran = run_ablation(&run, AblationAxis::RopeScheme, dir.path(), &mut log).unwrap();
        assert_eq!(ran.len(), 3);
        let summary =
            std::fs::read_to_string(dir.path().join("summary_rope_scheme.csv")).unwrap();
        assert!(summary.starts_with("variant,regime,category,dual_acc,n\n"));
        assert_eq!(summary.lines().count(), 1 + 3 * 5);
        for name in ["rope_distinct", "rope_balanced", "rope_harmonic"] {
            assert!(summary.contains(name));
            assert!(dir.path().join(name).join("model_report/report.csv").is_file());
            assert!(dir.path().join(name).join("model.mashv1").is_file());
        }
    }

    #[test]
    fn baseline_flips_the_three_mechanism_switches() {
        let run = tiny_run();
        let b = baseline_run(&run);
        assert_eq!(b.model.mask_mode, MaskMode::FullCausal);
        assert!(!b.model.disentangle);
        assert_eq!(b.model.rope_scheme, RopeScheme::Distinct);
        assert_eq!(b.gen, run.gen);
        assert_eq!(b.seed, run.seed);
    }
}
