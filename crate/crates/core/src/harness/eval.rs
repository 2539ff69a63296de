//! Dual-validation evaluation.
//!
//! Each (sample, category) cell pairs a gold question ("is the true label
//! present?", answer yes) with a hallucination question ("is the decoy label
//! present?", answer no). The cell scores 1 only when both answers are
//! correct, so a model cannot score by always agreeing: an always-yes
//! answerer lands at exactly zero and a uniform guesser near 0.25.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::Result;
use crate::harness::dataset::{QaKind, QaPair, QuestionCategory, Regime, SyntheticSample};
use crate::harness::vocab::Vocab;
use crate::model::{greedy_decode, ModelConfig, ModelParams};

/// Fixed row order for every dual-accuracy table.
pub const DUAL_CELLS: [(Regime, QuestionCategory); 5] = [
    (Regime::Usual, QuestionCategory::Action),
    (Regime::Usual, QuestionCategory::Scene),
    (Regime::Unusual, QuestionCategory::Action),
    (Regime::Unusual, QuestionCategory::Scene),
    (Regime::SceneOnly, QuestionCategory::Action),
];

/// One row of the dual-accuracy table.
#[derive(Debug, Clone, PartialEq)]
pub struct DualRow {
    pub regime: Regime,
    pub category: QuestionCategory,
    pub dual_acc: f64,
    pub n: usize,
}

/// One row of the per-question accuracy table.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionRow {
    pub regime: Regime,
    pub category: QuestionCategory,
    pub kind: QaKind,
    pub acc: f64,
    pub n: usize,
}

/// Evaluation result before CSV serialization.
#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub dual: Vec<DualRow>,
    pub questions: Vec<QuestionRow>,
    /// Answers that were neither yes nor no; each counts as wrong.
    pub invalid_answers: usize,
}

/// Anything that can answer one binary question about one sample. `None`
/// means the answer token was neither yes nor no.
pub trait Answerer {
    fn answer(&mut self, sample: &SyntheticSample, pair: &QaPair) -> Result<Option<bool>>;
}

/// Answers by greedy decoding from the trained model.
pub struct ModelAnswerer<'a> {
    pub params: &'a ModelParams,
    pub cfg: &'a ModelConfig,
}

impl Answerer for ModelAnswerer<'_> {
    fn answer(&mut self, sample: &SyntheticSample, pair: &QaPair) -> Result<Option<bool>> {
        let generated = greedy_decode(
            &sample.fe,
            &pair.prompt,
            self.params,
            self.cfg,
            Vocab::ANSWER_LEN,
            Vocab::END,
        )?;
        Ok(generated.first().copied().and_then(Vocab::parse_answer))
    }
}

/// Always answers the ground truth; calibrates the ceiling at 1.0.
pub struct OracleAnswerer;

impl Answerer for OracleAnswerer {
    fn answer(&mut self, _sample: &SyntheticSample, pair: &QaPair) -> Result<Option<bool>> {
        Ok(Some(pair.gold_yes))
    }
}

/// Uniform coin flips; calibrates the chance floor near 0.25 dual accuracy.
pub struct RandomAnswerer {
    rng: ChaCha12Rng,
}

impl RandomAnswerer {
    pub fn new(seed: u64) -> Self {
        RandomAnswerer { rng: ChaCha12Rng::seed_from_u64(seed) }
    }
}

impl Answerer for RandomAnswerer {
    fn answer(&mut self, _sample: &SyntheticSample, _pair: &QaPair) -> Result<Option<bool>> {
        Ok(Some(self.rng.random::<bool>()))
    }
}

/// Always yes; the agreement strategy dual validation is built to defeat.
pub struct YesManAnswerer;

impl Answerer for YesManAnswerer {
    fn answer(&mut self, _sample: &SyntheticSample, _pair: &QaPair) -> Result<Option<bool>> {
        Ok(Some(true))
    }
}

/// Score every question of every sample, then aggregate dual accuracy per
/// (regime, category) cell and plain accuracy per (regime, category, kind).
pub fn evaluate_dual(samples: &[SyntheticSample], answerer: &mut dyn Answerer) -> Result<EvalOutcome> {
    let mut invalid = 0usize;
    // (correct, total) per question cell, dual (hits, n) per dual cell.
    let mut q_correct = vec![(0usize, 0usize); DUAL_CELLS.len() * 2];
    let mut dual_hits = vec![(0usize, 0usize); DUAL_CELLS.len()];

    for sample in samples {
        let mut answers = Vec::with_capacity(sample.qa.len());
        for pair in &sample.qa {
            let ans = answerer.answer(sample, pair)?;
            if ans.is_none() {
                invalid += 1;
            }
            answers.push(ans);
        }
        for (cell, &(regime, category)) in DUAL_CELLS.iter().enumerate() {
            if sample.regime != regime {
                continue;
            }
            let mut gold_ok = None;
            let mut halluc_ok = None;
            for (pair, ans) in sample.qa.iter().zip(&answers) {
                if pair.category != category {
                    continue;
                }
                let correct = *ans == Some(pair.gold_yes);
                let slot = cell * 2 + (pair.kind == QaKind::Halluc) as usize;
                q_correct[slot].0 += correct as usize;
                q_correct[slot].1 += 1;
                match pair.kind {
                    QaKind::Gold => gold_ok = Some(correct),
                    QaKind::Halluc => halluc_ok = Some(correct),
                }
            }
            if let (Some(g), Some(h)) = (gold_ok, halluc_ok) {
                dual_hits[cell].0 += (g && h) as usize;
                dual_hits[cell].1 += 1;
            }
        }
    }

    let dual = DUAL_CELLS
        .iter()
        .zip(&dual_hits)
        .map(|(&(regime, category), &(hits, n))| DualRow {
            regime,
            category,
            dual_acc: if n == 0 { 0.0 } else { hits as f64 / n as f64 },
            n,
        })
        .collect();
    let mut questions = Vec::with_capacity(DUAL_CELLS.len() * 2);
    for (cell, &(regime, category)) in DUAL_CELLS.iter().enumerate() {
        for kind in [QaKind::Gold, QaKind::Halluc] {
            let (correct, n) = q_correct[cell * 2 + (kind == QaKind::Halluc) as usize];
            questions.push(QuestionRow {
                regime,
                category,
                kind,
                acc: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
                n,
            });
        }
    }
    Ok(EvalOutcome { dual, questions, invalid_answers: invalid })
}
