//! Single forward evaluation of the decoder on one video-plus-text sample.

use crate::dst_attention::{attend, full_dst_mask};
use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::params::ModelParams;
use crate::numerics::tape::{NodeId, Tape};
use crate::positional::{distinct_ids, PositionIds, RopeScheme};
use crate::token_pipeline::{
    build_spatial_tokens, build_temporal_tokens, FrameEmbeddings, SequenceLayout,
};

/// Parameter leaf nodes of one forward pass, in the canonical traversal
/// order of [`ModelParams::named_tensors`].
pub struct ParamNodes {
    pub nodes: Vec<NodeId>,
}

/// One recorded evaluation: the tape plus handles to everything downstream
/// consumers read — logits, per-block attention probabilities, and per-block
/// hidden states.
pub struct ForwardPass {
    pub tape: Tape,
    /// L×V logits over the text positions.
    pub logits: NodeId,
    /// `attn_probs[block][head]` is an S×S attention-probability node.
    pub attn_probs: Vec<Vec<NodeId>>,
    /// Sequence hidden state after each block (S×D).
    pub hidden: Vec<NodeId>,
    pub layout: SequenceLayout,
    pub ids: PositionIds,
    pub params: ParamNodes,
}

/// Run the pipeline: token streams → projector → K pre-norm blocks →
/// output head over text rows. Logit row i scores the token following text
/// position i.
pub fn forward(
    fe: &FrameEmbeddings,
    text: &[u32],
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<ForwardPass> {
    cfg.validate()?;
    if text.is_empty() {
        return Err(Error::Validation("need at least one text token".into()));
    }
    if fe.frames() != cfg.frames || fe.grid() != (cfg.grid_h, cfg.grid_w) {
        return Err(Error::Validation(format!(
            "input has {} frames on a {:?} grid, config expects {} on {}x{}",
            fe.frames(),
            fe.grid(),
            cfg.frames,
            cfg.grid_h,
            cfg.grid_w
        )));
    }
    if fe.dim() != cfg.enc_dim {
        return Err(Error::Validation(format!(
            "frame embeddings are {}-wide, projector expects {}",
            fe.dim(),
            cfg.enc_dim
        )));
    }

    let temporal = build_temporal_tokens(fe)?;
    let spatial = build_spatial_tokens(fe)?;
    let layout = SequenceLayout { m: temporal.rows(), n: spatial.rows(), l: text.len() };
    // A distinct-only model never reads the balanced track, which would be
    // undefined for N < M; alias it instead of failing the build.
    let ids = match cfg.attention.rope_scheme {
        RopeScheme::Distinct => {
            let d = distinct_ids(layout.n, layout.m, layout.l);
            PositionIds { balanced: d.clone(), distinct: d }
        }
        _ => PositionIds::build(layout.n, layout.m, layout.l)?,
    };
    let mask = full_dst_mask(&layout.tags(), &cfg.attention)?;

    let mut tape = Tape::new();
    let named = params.named_tensors();
    let param_nodes: Vec<NodeId> = named.iter().map(|(_, m)| tape.leaf((*m).clone())).collect();
    // Fixed traversal-order offsets into `param_nodes`.
    let proj_w1 = param_nodes[0];
    let proj_w2 = param_nodes[1];
    let text_embedding = param_nodes[2];
    let block_base = 3;
    let final_norm_gain = param_nodes[block_base + 9 * cfg.blocks];
    let output_head = param_nodes[block_base + 9 * cfg.blocks + 1];

    // Project both visual streams through the shared two-layer projector.
    let temporal_leaf = tape.leaf(temporal);
    let spatial_leaf = tape.leaf(spatial);
    let visual = tape.concat_rows(&[temporal_leaf, spatial_leaf])?;
    let h1 = tape.matmul(visual, proj_w1)?;
    let h1 = tape.silu(h1);
    let visual_proj = tape.matmul(h1, proj_w2)?;
    let text_emb = tape.embed_lookup(text_embedding, text)?;
    let mut x = tape.concat_rows(&[visual_proj, text_emb])?;

    let mut attn_probs = Vec::with_capacity(cfg.blocks);
    let mut hidden = Vec::with_capacity(cfg.blocks);
    for b in 0..cfg.blocks {
        let at = block_base + 9 * b;
        let [attn_norm_gain, wq, wk, wv, wo, mlp_norm_gain, w_gate, w_up, w_down] =
            [0, 1, 2, 3, 4, 5, 6, 7, 8].map(|o| param_nodes[at + o]);

        let normed = tape.rms_norm(x, attn_norm_gain)?;
        let q = tape.matmul(normed, wq)?;
        let k = tape.matmul(normed, wk)?;
        let v = tape.matmul(normed, wv)?;
        let att = attend(&mut tape, q, k, v, &mask, &ids, &cfg.rope, &cfg.attention)?;
        let projected = tape.matmul(att.out, wo)?;
        x = tape.add(x, projected)?;

        let normed = tape.rms_norm(x, mlp_norm_gain)?;
        let gate = tape.matmul(normed, w_gate)?;
        let gate = tape.silu(gate);
        let up = tape.matmul(normed, w_up)?;
        let act = tape.mul(gate, up)?;
        let down = tape.matmul(act, w_down)?;
        x = tape.add(x, down)?;

        attn_probs.push(att.head_probs);
        hidden.push(x);
    }

    let final_normed = tape.rms_norm(x, final_norm_gain)?;
    let text_rows = tape.slice_rows(final_normed, layout.text_start(), layout.l)?;
    let logits = tape.matmul(text_rows, output_head)?;

    Ok(ForwardPass {
        tape,
        logits,
        attn_probs,
        hidden,
        layout,
        ids,
        params: ParamNodes { nodes: param_nodes },
    })
}

/// Next-token supervision for an autoregressive text segment: position i is
/// supervised iff token i+1 lies in the answer range
/// [prompt_len, prompt_len + answer_len); its target is that next token.
pub fn supervision(text: &[u32], prompt_len: usize, answer_len: usize) -> Result<(Vec<bool>, Vec<u32>)> {
    let text_len = text.len();
    if prompt_len + answer_len > text_len || prompt_len == 0 || answer_len == 0 {
        return Err(Error::Validation(format!(
            "supervision range {prompt_len}+{answer_len} does not fit text of {text_len}"
        )));
    }
    let mask: Vec<bool> =
        (0..text_len).map(|i| i + 1 >= prompt_len && i + 1 < prompt_len + answer_len).collect();
    let targets: Vec<u32> = (0..text_len).map(|i| text[(i + 1).min(text_len - 1)]).collect();
    Ok((mask, targets))
}
