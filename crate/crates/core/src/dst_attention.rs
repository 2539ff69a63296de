//! Additive attention masks for the disentangled spatio-temporal scheme, and
//! masked multi-head attention over the gradient tape.
//!
//! Two mask ingredients govern the visual region. The disentangling mask
//! blocks every temporal↔spatial pair so the two streams cannot exchange
//! information. The structured mask applies each query's directional rule —
//! causal for temporal tokens, bidirectional for spatial ones by default —
//! across the visual region. Text rows attend to everything visual plus
//! causally to earlier text; visual rows never attend to text. A plain
//! lower-triangular mode serves as the baseline.

use crate::error::{Error, Result};
use crate::numerics::tape::{NodeId, Tape};
use crate::numerics::Matrix;
use crate::positional::{rotation_angles, PositionIds, RopeConfig, RopeScheme};
use crate::token_pipeline::TokenTag;

const NEG_INF: f64 = f64::NEG_INFINITY;

/// Overall masking regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskMode {
    /// Standard lower-triangular causal mask over the whole sequence.
    FullCausal,
    /// Disentangled + structured visual region with text rules.
    Dst,
}

impl MaskMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MaskMode::FullCausal => "full_causal",
            MaskMode::Dst => "dst",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full_causal" => Ok(MaskMode::FullCausal),
            "dst" => Ok(MaskMode::Dst),
            other => Err(Error::Config(format!("unknown mask mode '{other}'"))),
        }
    }
}

/// Directional rule for one visual token type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttnDir {
    Causal,
    Bidirectional,
}

impl AttnDir {
    pub fn as_str(self) -> &'static str {
        match self {
            AttnDir::Causal => "causal",
            AttnDir::Bidirectional => "bidirectional",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "causal" => Ok(AttnDir::Causal),
            "bidirectional" => Ok(AttnDir::Bidirectional),
            other => Err(Error::Config(format!("unknown attention direction '{other}'"))),
        }
    }
}

/// Attention shape and masking/rotation switches. Every ablated axis is one
/// field here.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionConfig {
    pub heads: usize,
    pub head_dim: usize,
    pub mask_mode: MaskMode,
    pub temporal_attn: AttnDir,
    pub spatial_attn: AttnDir,
    pub disentangle: bool,
    pub rope_scheme: RopeScheme,
}

impl AttentionConfig {
    /// Reference configuration: disentangled + structured masking,
    /// causal temporal, bidirectional spatial, harmonic rotation.
    pub fn dst_default(heads: usize, head_dim: usize) -> Self {
        AttentionConfig {
            heads,
            head_dim,
            mask_mode: MaskMode::Dst,
            temporal_attn: AttnDir::Causal,
            spatial_attn: AttnDir::Bidirectional,
            disentangle: true,
            rope_scheme: RopeScheme::Harmonic,
        }
    }

    /// Baseline: plain causal decoding over sequence-order positions.
    pub fn full_causal_baseline(heads: usize, head_dim: usize) -> Self {
        AttentionConfig {
            heads,
            head_dim,
            mask_mode: MaskMode::FullCausal,
            temporal_attn: AttnDir::Causal,
            spatial_attn: AttnDir::Causal,
            disentangle: false,
            rope_scheme: RopeScheme::Distinct,
        }
    }

    pub fn width(&self) -> usize {
        self.heads * self.head_dim
    }
}

/// Which mask ingredients produced a [`DstMask`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskProvenance {
    FullCausal,
    /// Structured directional rules and text rules always apply in this
    /// mode; the disentangling term is optional.
    Dst { disentangling: bool },
}

/// Additive attention mask: every entry is 0.0 or -inf.
#[derive(Debug, Clone)]
pub struct DstMask {
    entries: Matrix,
    provenance: MaskProvenance,
}

impl DstMask {
    /// Wrap a mask matrix, enforcing that self-attention is always permitted
    /// (no mask may produce a fully-excluded softmax row).
    fn checked(entries: Matrix, provenance: MaskProvenance) -> Result<Self> {
        for i in 0..entries.rows() {
            if entries.get(i, i) != 0.0 {
                return Err(Error::Invariant(format!("mask diagonal blocked at row {i}")));
            }
        }
        Ok(DstMask { entries, provenance })
    }

    pub fn size(&self) -> usize {
        self.entries.rows()
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn provenance(&self) -> MaskProvenance {
        self.provenance
    }

    /// True when query row i may attend to source column j.
    pub fn permits(&self, i: usize, j: usize) -> bool {
        self.entries.get(i, j) == 0.0
    }
}

fn require_visual_only(tags: &[TokenTag]) -> Result<()> {
    if tags.iter().any(|&t| t == TokenTag::Text) {
        return Err(Error::Validation("visual mask over a region containing text tags".into()));
    }
    Ok(())
}

/// Blocks every temporal↔spatial pair: entry (i, j) is -inf iff the types
/// differ. Visual region only.
pub fn disentangling_mask(tags: &[TokenTag]) -> Result<Matrix> {
    require_visual_only(tags)?;
    let s = tags.len();
    Ok(Matrix::from_fn(s, s, |i, j| if tags[i] == tags[j] { 0.0 } else { NEG_INF }))
}

/// Directional structure over the visual region: each query row applies its
/// own type's rule (causal → sources at or before it; bidirectional → all)
/// across every visual column, regardless of the source's type. Cross-type
/// exclusion is the disentangling mask's job, not this one's.
pub fn structured_st_mask(tags: &[TokenTag], cfg: &AttentionConfig) -> Result<Matrix> {
    require_visual_only(tags)?;
    let s = tags.len();
    Ok(Matrix::from_fn(s, s, |i, j| {
        let dir = match tags[i] {
            TokenTag::Temporal => cfg.temporal_attn,
            TokenTag::Spatial => cfg.spatial_attn,
            TokenTag::Text => unreachable!(),
        };
        match dir {
            AttnDir::Causal if j > i => NEG_INF,
            _ => 0.0,
        }
    }))
}

/// The complete additive mask for a [temporal | spatial | text] sequence.
///
/// In `Dst` mode the visual block is the sum of the structured mask and
/// (when enabled) the disentangling mask; text rows attend to all visual
/// positions and causally to text; visual rows never attend to text. In
/// `FullCausal` mode the whole sequence gets the standard lower-triangular
/// mask.
pub fn full_dst_mask(tags: &[TokenTag], cfg: &AttentionConfig) -> Result<DstMask> {
    // Layout check: tag kinds must appear in temporal → spatial → text order.
    let rank = |t: TokenTag| match t {
        TokenTag::Temporal => 0,
        TokenTag::Spatial => 1,
        TokenTag::Text => 2,
    };
    if tags.windows(2).any(|p| rank(p[0]) > rank(p[1])) {
        return Err(Error::Validation(
            "tags must be laid out [temporal, spatial, text]".into(),
        ));
    }
    let s = tags.len();

    if cfg.mask_mode == MaskMode::FullCausal {
        let entries = Matrix::from_fn(s, s, |i, j| if j <= i { 0.0 } else { NEG_INF });
        return DstMask::checked(entries, MaskProvenance::FullCausal);
    }

    let visual_len = tags.iter().filter(|&&t| t != TokenTag::Text).count();
    let visual_tags = &tags[..visual_len];
    let structured = structured_st_mask(visual_tags, cfg)?;
    let disentangling =
        if cfg.disentangle { Some(disentangling_mask(visual_tags)?) } else { None };

    let entries = Matrix::from_fn(s, s, |i, j| {
        match (tags[i] == TokenTag::Text, tags[j] == TokenTag::Text) {
            // Visual → visual: additive combination; -inf saturates.
            (false, false) => {
                let d = disentangling.as_ref().map_or(0.0, |m| m.get(i, j));
                structured.get(i, j) + d
            }
            // Visual → text: never permitted.
            (false, true) => NEG_INF,
            // Text → visual: always permitted.
            (true, false) => 0.0,
            // Text → text: causal.
            (true, true) => {
                if j <= i {
                    0.0
                } else {
                    NEG_INF
                }
            }
        }
    });
    DstMask::checked(entries, MaskProvenance::Dst { disentangling: cfg.disentangle })
}

/// Attention output plus the per-head attention-probability nodes, kept for
/// profile extraction.
pub struct Attended {
    pub out: NodeId,
    pub head_probs: Vec<NodeId>,
}

/// Masked multi-head attention on the tape: per head, rotate Q and K under
/// the configured ID scheme, scale scores by 1/sqrt(head_dim), add the mask,
/// softmax, and weight V; head outputs are concatenated.
pub fn attend(
    tape: &mut Tape,
    q: NodeId,
    k: NodeId,
    v: NodeId,
    mask: &DstMask,
    ids: &PositionIds,
    rope: &RopeConfig,
    cfg: &AttentionConfig,
) -> Result<Attended> {
    let width = cfg.width();
    let s = tape.value(q).rows();
    for (name, node) in [("Q", q), ("K", k), ("V", v)] {
        let (r, c) = tape.value(node).shape();
        if r != s || c != width {
            return Err(Error::Validation(format!(
                "attend: {name} is {r}x{c}, expected {s}x{width}"
            )));
        }
    }
    if mask.size() != s || ids.len() != s {
        return Err(Error::Validation(format!(
            "attend: mask size {} and {} ids for {s} rows",
            mask.size(),
            ids.len()
        )));
    }
    if rope.head_dim != cfg.head_dim {
        return Err(Error::Validation(format!(
            "attend: rope head_dim {} != attention head_dim {}",
            rope.head_dim, cfg.head_dim
        )));
    }

    let angles = rotation_angles(ids, rope, cfg.rope_scheme)?;
    let inv_sqrt = 1.0 / (cfg.head_dim as f64).sqrt();
    let mut head_outs = Vec::with_capacity(cfg.heads);
    let mut head_probs = Vec::with_capacity(cfg.heads);
    for hd in 0..cfg.heads {
        let at = hd * cfg.head_dim;
        let qh = tape.slice_cols(q, at, cfg.head_dim)?;
        let kh = tape.slice_cols(k, at, cfg.head_dim)?;
        let vh = tape.slice_cols(v, at, cfg.head_dim)?;
        let q_rot = tape.rope(qh, &angles)?;
        let k_rot = tape.rope(kh, &angles)?;
        let scores = tape.matmul_transpose_b(q_rot, k_rot)?;
        let scaled = tape.scale(scores, inv_sqrt);
        let probs = tape.softmax_masked(scaled, mask.entries())?;
        let out_h = tape.matmul(probs, vh)?;
        head_outs.push(out_h);
        head_probs.push(probs);
    }
    let out = tape.concat_cols(&head_outs)?;
    Ok(Attended { out, head_probs })
}
