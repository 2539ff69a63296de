//! Synthetic action-scene video generator.
//!
//! Each sample carries two independent latent factors rendered into disjoint
//! statistics of the frame embeddings. The scene is a class-specific static
//! patch pattern with zero spatial mean per channel, so spatial pooling (the
//! temporal stream) cancels it. The action is a class-specific temporal sign
//! trajectory, zero-mean inside every temporal segment, so segment averaging
//! (the spatial stream) cancels it. Training pairs scenes and actions along
//! a fixed diagonal co-occurrence map; held-out off-diagonal pairs and
//! action-free videos probe whether a model answers from the right stream or
//! from the learned correlation.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::harness::vocab::Vocab;
use crate::harness::Fnv1a;
use crate::numerics::matrix::gaussian;
use crate::numerics::Matrix;
use crate::token_pipeline::FrameEmbeddings;

/// Stream selector for the pattern RNG, keeping class patterns decorrelated
/// from per-sample noise streams.
const PATTERN_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

/// Test-time distribution slice of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Scene and action paired as in training.
    Usual,
    /// Off-diagonal pair never seen in training.
    Unusual,
    /// No action at all; gold action label is the absence class.
    SceneOnly,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Usual => "usual",
            Regime::Unusual => "unusual",
            Regime::SceneOnly => "scene_only",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "usual" => Ok(Regime::Usual),
            "unusual" => Ok(Regime::Unusual),
            "scene_only" => Ok(Regime::SceneOnly),
            other => Err(Error::Report(format!("unknown regime '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuestionCategory {
    Action,
    Scene,
}

impl QuestionCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            QuestionCategory::Action => "action",
            QuestionCategory::Scene => "scene",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "action" => Ok(QuestionCategory::Action),
            "scene" => Ok(QuestionCategory::Scene),
            other => Err(Error::Report(format!("unknown question category '{other}'"))),
        }
    }
}

/// Whether a question asks about the true label (expects "yes") or the
/// hallucination label (expects "no").
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QaKind {
    Gold,
    Halluc,
}

impl QaKind {
    pub fn as_str(self) -> &'static str {
        match self {
            QaKind::Gold => "gold",
            QaKind::Halluc => "halluc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gold" => Ok(QaKind::Gold),
            "halluc" => Ok(QaKind::Halluc),
            other => Err(Error::Report(format!("unknown question kind '{other}'"))),
        }
    }
}

/// One binary question with its correct answer.
#[derive(Debug, Clone)]
pub struct QaPair {
    pub prompt: Vec<u32>,
    pub gold_yes: bool,
    pub category: QuestionCategory,
    pub kind: QaKind,
}

impl QaPair {
    /// Prompt followed by the correct answer, for teacher-forced training.
    pub fn full_text(&self) -> Vec<u32> {
        let mut text = self.prompt.clone();
        text.extend(Vocab::answer(self.gold_yes));
        text
    }
}

/// One rendered video with its latent labels and question set: four
/// questions normally, two (both action) for scene-only videos.
#[derive(Debug, Clone)]
pub struct SyntheticSample {
    pub fe: FrameEmbeddings,
    pub scene_id: usize,
    pub action_id: Option<usize>,
    pub regime: Regime,
    pub qa: Vec<QaPair>,
}

/// Generation knobs. `scene_amp`/`action_amp` scale the class signals;
/// `noise_std` is i.i.d. Gaussian noise on every embedding entry;
/// `none_question_rate` is the fraction of training action-hallucination
/// questions that query the absence class instead of a wrong action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenConfig {
    pub scene_classes: usize,
    pub action_classes: usize,
    pub frames: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub enc_dim: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub scene_amp: f64,
    pub action_amp: f64,
    pub noise_std: f64,
    pub none_question_rate: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            scene_classes: 4,
            action_classes: 4,
            frames: 8,
            grid_h: 6,
            grid_w: 6,
            enc_dim: 12,
            train_samples: 2000,
            test_samples: 600,
            scene_amp: 1.0,
            action_amp: 1.0,
            noise_std: 0.2,
            none_question_rate: 0.25,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scene_classes < 2 || self.action_classes < 2 {
            return Err(Error::Validation(format!(
                "need at least two classes per factor, got {}/{}",
                self.scene_classes, self.action_classes
            )));
        }
        // The diagonal co-occurrence map and its inverse (used for
        // hallucination labels) need a bijection between the factors.
        if self.scene_classes != self.action_classes {
            return Err(Error::Validation(format!(
                "co-occurrence map needs equal class counts, got {} scenes / {} actions",
                self.scene_classes, self.action_classes
            )));
        }
        // Zero-mean trajectories need an even number of frames per segment.
        if self.frames == 0 || self.frames % 8 != 0 {
            return Err(Error::Validation(format!(
                "frame count must be a positive multiple of 8, got {}",
                self.frames
            )));
        }
        if self.grid_h < 2 || self.grid_w < 2 || self.grid_h % 2 != 0 || self.grid_w % 2 != 0 {
            return Err(Error::Validation(format!(
                "patch grid must be even and at least 2x2, got {}x{}",
                self.grid_h, self.grid_w
            )));
        }
        if self.enc_dim == 0 || self.train_samples == 0 {
            return Err(Error::Validation("enc_dim and train_samples must be positive".into()));
        }
        if self.test_samples < 3 {
            return Err(Error::Validation(format!(
                "test split must cover all three regimes, got {} samples",
                self.test_samples
            )));
        }
        if !(self.scene_amp > 0.0) || !(self.action_amp > 0.0) {
            return Err(Error::Validation("signal amplitudes must be positive".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Validation(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        if !(0.0..=1.0).contains(&self.none_question_rate) {
            return Err(Error::Validation(format!(
                "none_question_rate must be in [0, 1], got {}",
                self.none_question_rate
            )));
        }
        Ok(())
    }

    pub fn vocab(&self) -> Result<Vocab> {
        Vocab::new(self.action_classes, self.scene_classes)
    }

    /// The training co-occurrence map: scene s pairs with action s.
    pub fn usual_action(&self, scene: usize) -> usize {
        scene
    }

    /// Inverse map: the scene that action a usually occurs in.
    pub fn usual_scene(&self, action: usize) -> usize {
        action
    }
}

/// Per-class render ingredients, drawn once per dataset seed and shared by
/// both splits.
#[derive(Debug, Clone)]
pub struct ClassPatterns {
    /// One (h·w)×enc_dim static pattern per scene class, zero-mean per
    /// channel over patches.
    pub scene: Vec<Matrix>,
    /// Unit channel direction per action class, scaled by `action_amp`.
    pub action_dir: Vec<Vec<f64>>,
    /// Per-segment sign code per action class.
    pub action_signs: Vec<[f64; 4]>,
}

/// Mutually orthogonal ±1 codes over the four segments.
const SIGN_CODES: [[f64; 4]; 4] = [
    [1.0, 1.0, 1.0, 1.0],
    [1.0, -1.0, 1.0, -1.0],
    [1.0, 1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0, 1.0],
];

pub fn class_patterns(cfg: &GenConfig, seed: u64) -> ClassPatterns {
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ PATTERN_STREAM);
    let n_f = cfg.grid_h * cfg.grid_w;
    let mut scene = Vec::with_capacity(cfg.scene_classes);
    for _ in 0..cfg.scene_classes {
        let mut p = Matrix::randn(n_f, cfg.enc_dim, cfg.scene_amp, &mut rng);
        for d in 0..cfg.enc_dim {
            let mut mean = 0.0;
            for i in 0..n_f {
                mean += p.get(i, d);
            }
            mean /= n_f as f64;
            for i in 0..n_f {
                let v = p.get(i, d) - mean;
                p.set(i, d, v);
            }
        }
        scene.push(p);
    }
    let mut action_dir = Vec::with_capacity(cfg.action_classes);
    let mut action_signs = Vec::with_capacity(cfg.action_classes);
    for a in 0..cfg.action_classes {
        let mut dir: Vec<f64> = (0..cfg.enc_dim).map(|_| gaussian(&mut rng)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        for v in &mut dir {
            *v *= cfg.action_amp / norm;
        }
        action_dir.push(dir);
        let signs = if a < 4 {
            SIGN_CODES[a]
        } else {
            let mut s = [0.0; 4];
            for v in &mut s {
                *v = if rng.random::<bool>() { 1.0 } else { -1.0 };
            }
            s
        };
        action_signs.push(signs);
    }
    ClassPatterns { scene, action_dir, action_signs }
}

/// Per-frame action coefficient: the class's segment sign code, alternating
/// in sign frame-by-frame so each segment's temporal mean is zero.
fn trajectory(patterns: &ClassPatterns, action: usize, frame: usize, per_segment: usize) -> f64 {
    let seg = frame / per_segment;
    let flip = if frame % 2 == 0 { 1.0 } else { -1.0 };
    patterns.action_signs[action][seg] * flip
}

/// Render one video: scene pattern + action trajectory + noise. CLS tokens
/// are the spatial means of the noisy patch grids plus their own noise.
pub fn render_video(
    cfg: &GenConfig,
    patterns: &ClassPatterns,
    scene: usize,
    action: Option<usize>,
    rng: &mut ChaCha12Rng,
) -> Result<FrameEmbeddings> {
    let n_f = cfg.grid_h * cfg.grid_w;
    let per_segment = cfg.frames / 4;
    let base = &patterns.scene[scene];
    let mut patch_tokens = Vec::with_capacity(cfg.frames);
    for t in 0..cfg.frames {
        let c = action.map_or(0.0, |a| trajectory(patterns, a, t, per_segment));
        let dir = action.map(|a| patterns.action_dir[a].as_slice());
        let mut frame = Matrix::zeros(n_f, cfg.enc_dim);
        for p in 0..n_f {
            let row = frame.row_mut(p);
            for d in 0..cfg.enc_dim {
                let act = dir.map_or(0.0, |u| c * u[d]);
                row[d] = base.get(p, d) + act + cfg.noise_std * gaussian(rng);
            }
        }
        patch_tokens.push(frame);
    }
    let mut cls = Matrix::zeros(cfg.frames, cfg.enc_dim);
    for t in 0..cfg.frames {
        let row = cls.row_mut(t);
        for d in 0..cfg.enc_dim {
            let mut mean = 0.0;
            for p in 0..n_f {
                mean += patch_tokens[t].get(p, d);
            }
            row[d] = mean / n_f as f64 + cfg.noise_std * gaussian(rng);
        }
    }
    FrameEmbeddings::new(cfg.frames, cfg.grid_h, cfg.grid_w, cfg.enc_dim, patch_tokens, cls)
}

/// Uniform class other than `avoid`.
fn other_class(classes: usize, avoid: usize, rng: &mut ChaCha12Rng) -> usize {
    let r = rng.random_range(0..classes - 1);
    if r >= avoid {
        r + 1
    } else {
        r
    }
}

fn build_questions(
    cfg: &GenConfig,
    vocab: &Vocab,
    regime: Regime,
    scene: usize,
    action: Option<usize>,
    rng: &mut ChaCha12Rng,
) -> Vec<QaPair> {
    use QaKind::*;
    use QuestionCategory::*;
    let mut qa = Vec::with_capacity(4);
    match (regime, action) {
        (Regime::SceneOnly, None) => {
            qa.push(QaPair {
                prompt: vocab.action_prompt(None),
                gold_yes: true,
                category: Action,
                kind: Gold,
            });
            qa.push(QaPair {
                prompt: vocab.action_prompt(Some(cfg.usual_action(scene))),
                gold_yes: false,
                category: Action,
                kind: Halluc,
            });
        }
        (regime, Some(a)) => {
            qa.push(QaPair {
                prompt: vocab.action_prompt(Some(a)),
                gold_yes: true,
                category: Action,
                kind: Gold,
            });
            let halluc_action_prompt = match regime {
                // The scene's usual action: the shortcut answer.
                Regime::Unusual => vocab.action_prompt(Some(cfg.usual_action(scene))),
                _ => {
                    if rng.random::<f64>() < cfg.none_question_rate {
                        vocab.action_prompt(None)
                    } else {
                        vocab.action_prompt(Some(other_class(cfg.action_classes, a, rng)))
                    }
                }
            };
            qa.push(QaPair {
                prompt: halluc_action_prompt,
                gold_yes: false,
                category: Action,
                kind: Halluc,
            });
            qa.push(QaPair {
                prompt: vocab.scene_prompt(scene),
                gold_yes: true,
                category: Scene,
                kind: Gold,
            });
            let halluc_scene = match regime {
                Regime::Unusual => cfg.usual_scene(a),
                _ => other_class(cfg.scene_classes, scene, rng),
            };
            qa.push(QaPair {
                prompt: vocab.scene_prompt(halluc_scene),
                gold_yes: false,
                category: Scene,
                kind: Halluc,
            });
        }
        (regime, None) => unreachable!("regime {regime:?} requires an action"),
    }
    qa
}

/// Both splits of one generated dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<SyntheticSample>,
    pub test: Vec<SyntheticSample>,
}

/// Deterministic generation: class patterns come from a dedicated stream of
/// `seed`, and sample i (globally indexed across train then test) draws
/// everything else from a fresh RNG seeded `seed ^ i`, so any evaluation
/// order reproduces identical bytes.
pub fn gen_dataset(cfg: &GenConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let vocab = cfg.vocab()?;
    let patterns = class_patterns(cfg, seed);

    let mut train = Vec::with_capacity(cfg.train_samples);
    for i in 0..cfg.train_samples {
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ i as u64);
        let scene = rng.random_range(0..cfg.scene_classes);
        let action = cfg.usual_action(scene);
        let fe = render_video(cfg, &patterns, scene, Some(action), &mut rng)?;
        let qa = build_questions(cfg, &vocab, Regime::Usual, scene, Some(action), &mut rng);
        train.push(SyntheticSample {
            fe,
            scene_id: scene,
            action_id: Some(action),
            regime: Regime::Usual,
            qa,
        });
    }

    let mut test = Vec::with_capacity(cfg.test_samples);
    for j in 0..cfg.test_samples {
        let global = cfg.train_samples + j;
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ global as u64);
        let regime = match j % 3 {
            0 => Regime::Usual,
            1 => Regime::Unusual,
            _ => Regime::SceneOnly,
        };
        let scene = rng.random_range(0..cfg.scene_classes);
        let action = match regime {
            Regime::Usual => Some(cfg.usual_action(scene)),
            Regime::Unusual => Some(other_class(cfg.action_classes, cfg.usual_action(scene), &mut rng)),
            Regime::SceneOnly => None,
        };
        let fe = render_video(cfg, &patterns, scene, action, &mut rng)?;
        let qa = build_questions(cfg, &vocab, regime, scene, action, &mut rng);
        test.push(SyntheticSample { fe, scene_id: scene, action_id: action, regime, qa });
    }

    Ok(Dataset { train, test })
}

impl Dataset {
    /// Content digest over every sample's labels, embeddings, and questions.
    pub fn digest(&self) -> u64 {
        let mut h = Fnv1a::new();
        for split in [&self.train, &self.test] {
            h.write_u64(split.len() as u64);
            for s in split {
                h.write_u64(s.scene_id as u64);
                h.write_u64(s.action_id.map_or(u64::MAX, |a| a as u64));
                h.write(s.regime.as_str().as_bytes());
                for frame in s.fe.patch_tokens() {
                    for v in frame.data() {
                        h.write_f64(*v);
                    }
                }
                for v in s.fe.cls_tokens().data() {
                    h.write_f64(*v);
                }
                for qa in &s.qa {
                    for t in &qa.prompt {
                        h.write_u64(*t as u64);
                    }
                    h.write_u64(qa.gold_yes as u64);
                }
            }
        }
        h.finish()
    }

    pub fn regime_counts(split: &[SyntheticSample]) -> (usize, usize, usize) {
        let mut counts = (0, 0, 0);
        for s in split {
            match s.regime {
                Regime::Usual => counts.0 += 1,
                Regime::Unusual => counts.1 += 1,
                Regime::SceneOnly => counts.2 += 1,
            }
        }
        counts
    }
}
