//! Attention-profile extraction.
//!
//! For one question, teacher-force the prompt plus its correct answer, run
//! the model, and measure where the answer-token rows put their post-softmax
//! attention mass: onto temporal tokens, spatial tokens, or text tokens.
//! Profiles are reported per layer and head; comparing the split between
//! action questions and scene questions shows which stream each answer
//! actually reads.

use crate::error::{Error, Result};
use crate::harness::dataset::{QaKind, QaPair, QuestionCategory, SyntheticSample};
use crate::harness::vocab::Vocab;
use crate::model::{forward, ForwardPass, ModelConfig, ModelParams};
use crate::token_pipeline::TokenTag;

/// Token block a mass measurement refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockType {
    Temporal,
    Spatial,
    Text,
}

pub const BLOCK_TYPES: [BlockType; 3] = [BlockType::Temporal, BlockType::Spatial, BlockType::Text];

impl BlockType {
    pub fn as_str(self) -> &'static str {
        match self {
            BlockType::Temporal => "temporal",
            BlockType::Spatial => "spatial",
            BlockType::Text => "text",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "temporal" => Ok(BlockType::Temporal),
            "spatial" => Ok(BlockType::Spatial),
            "text" => Ok(BlockType::Text),
            other => Err(Error::Report(format!("unknown block type '{other}'"))),
        }
    }

    fn of(tag: TokenTag) -> Self {
        match tag {
            TokenTag::Temporal => BlockType::Temporal,
            TokenTag::Spatial => BlockType::Spatial,
            TokenTag::Text => BlockType::Text,
        }
    }
}

/// One profile measurement: mean attention mass from the answer rows of one
/// layer/head onto one block.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileRow {
    pub layer: usize,
    pub head: usize,
    pub block: BlockType,
    pub mass: f64,
}

/// Raw per-(layer, head, block) masses for one forward pass, averaged over
/// the answer-token rows. Layout: `[layer][head][block]`.
fn answer_row_masses(fp: &ForwardPass, prompt_len: usize, answer_len: usize) -> Result<Vec<Vec<[f64; 3]>>> {
    if fp.layout.l < prompt_len + answer_len {
        return Err(Error::Validation(format!(
            "text has {} tokens, need {} prompt + {} answer",
            fp.layout.l, prompt_len, answer_len
        )));
    }
    let first = fp.layout.text_start() + prompt_len;
    let total = fp.layout.total();
    let mut out = Vec::with_capacity(fp.attn_probs.len());
    for heads in &fp.attn_probs {
        let mut per_head = Vec::with_capacity(heads.len());
        for &node in heads {
            let probs = fp.tape.value(node);
            let mut mass = [0.0f64; 3];
            for row in first..first + answer_len {
                for col in 0..total {
                    let b = BlockType::of(fp.layout.tag_of(col)) as usize;
                    mass[b] += probs.get(row, col);
                }
            }
            for m in &mut mass {
                *m /= answer_len as f64;
            }
            per_head.push(mass);
        }
        out.push(per_head);
    }
    Ok(out)
}

/// Profile one question: run the model on prompt + correct answer and
/// aggregate attention mass from the answer rows. Emits layers × heads × 3
/// rows in (layer, head, block) order.
pub fn extract_attention_profile(
    sample: &SyntheticSample,
    pair: &QaPair,
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<Vec<ProfileRow>> {
    let fp = forward(&sample.fe, &pair.full_text(), params, cfg)?;
    let masses = answer_row_masses(&fp, pair.prompt.len(), Vocab::ANSWER_LEN)?;
    Ok(rows_from_masses(&masses))
}

fn rows_from_masses(masses: &[Vec<[f64; 3]>]) -> Vec<ProfileRow> {
    let mut rows = Vec::new();
    for (layer, heads) in masses.iter().enumerate() {
        for (head, mass) in heads.iter().enumerate() {
            for (b, block) in BLOCK_TYPES.iter().enumerate() {
                rows.push(ProfileRow { layer, head, block: *block, mass: mass[b] });
            }
        }
    }
    rows
}

/// Mean profile over every gold question of one category in `samples`.
/// Samples without that category (scene-free videos asked only action
/// questions) are skipped.
pub fn mean_profile(
    samples: &[SyntheticSample],
    category: QuestionCategory,
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<Vec<ProfileRow>> {
    let mut acc: Option<Vec<Vec<[f64; 3]>>> = None;
    let mut count = 0usize;
    for sample in samples {
        for pair in &sample.qa {
            if pair.category != category || pair.kind != QaKind::Gold {
                continue;
            }
            let fp = forward(&sample.fe, &pair.full_text(), params, cfg)?;
            let masses = answer_row_masses(&fp, pair.prompt.len(), Vocab::ANSWER_LEN)?;
            match &mut acc {
                None => acc = Some(masses),
                Some(a) => {
                    for (la, lm) in a.iter_mut().zip(&masses) {
                        for (ha, hm) in la.iter_mut().zip(lm) {
                            for b in 0..3 {
                                ha[b] += hm[b];
                            }
                        }
                    }
                }
            }
            count += 1;
        }
    }
    let mut acc = acc.ok_or_else(|| {
        Error::Validation(format!("no gold {} questions to profile", category.as_str()))
    })?;
    for heads in &mut acc {
        for mass in heads {
            for b in 0..3 {
                mass[b] /= count as f64;
            }
        }
    }
    Ok(rows_from_masses(&acc))
}

/// Largest post-softmax weight crossing between the two visual streams, over
/// every visual query row, layer, and head: (spatial rows onto temporal
/// columns, temporal rows onto spatial columns). Both are exactly zero when
/// the disentangling mask is active.
pub fn max_visual_cross_mass(fp: &ForwardPass) -> (f64, f64) {
    let layout = &fp.layout;
    let mut spatial_to_temporal = 0.0f64;
    let mut temporal_to_spatial = 0.0f64;
    for heads in &fp.attn_probs {
        for &node in heads {
            let probs = fp.tape.value(node);
            for row in 0..layout.visual_len() {
                let row_is_temporal = layout.tag_of(row) == TokenTag::Temporal;
                for col in 0..layout.visual_len() {
                    let col_is_temporal = layout.tag_of(col) == TokenTag::Temporal;
                    if row_is_temporal && !col_is_temporal {
                        temporal_to_spatial = temporal_to_spatial.max(probs.get(row, col));
                    }
                    if !row_is_temporal && col_is_temporal {
                        spatial_to_temporal = spatial_to_temporal.max(probs.get(row, col));
                    }
                }
            }
        }
    }
    (spatial_to_temporal, temporal_to_spatial)
}

/// Sum profile mass per block across layers and heads, normalized to the
/// per-row total (1 per layer/head). Returns [temporal, spatial, text].
pub fn block_split(rows: &[ProfileRow]) -> [f64; 3] {
    let mut sums = [0.0f64; 3];
    let mut per_block_rows = 0usize;
    for row in rows {
        sums[row.block as usize] += row.mass;
        if row.block == BlockType::Temporal {
            per_block_rows += 1;
        }
    }
    if per_block_rows > 0 {
        for s in &mut sums {
            *s /= per_block_rows as f64;
        }
    }
    sums
}
