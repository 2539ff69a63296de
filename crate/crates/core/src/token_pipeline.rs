//! Builds the two visual token streams from per-frame embeddings and
//! assembles the tagged model input sequence.
//!
//! The spatial stream compresses time away: frames are split into four
//! contiguous temporal segments, each segment is averaged over time, and each
//! averaged map is 2x2 average-pooled, so the concatenated result keeps full
//! spatial layout at the original token count N = h·w. The temporal stream
//! compresses space away: per-frame CLS tokens, spatially pooled frame means,
//! and means of neighboring-frame differences, M = 3T-1 tokens total.

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::positional::PositionIds;

/// Number of contiguous temporal segments in the spatial stream. Fixed, not
/// configurable: the stream's token count equals h·w only at four segments
/// with 2x2 pooling.
pub const TEMPORAL_SEGMENTS: usize = 4;

/// Role of one sequence position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenTag {
    Temporal,
    Spatial,
    Text,
}

/// Per-frame encoder output: patch grids plus one CLS vector per frame.
#[derive(Debug, Clone)]
pub struct FrameEmbeddings {
    t: usize,
    h: usize,
    w: usize,
    d: usize,
    /// One (h·w)×D matrix per frame, patches in row-major grid order.
    patch_tokens: Vec<Matrix>,
    /// T×D, row t is frame t's CLS vector.
    cls_tokens: Matrix,
}

impl FrameEmbeddings {
    pub fn new(
        t: usize,
        h: usize,
        w: usize,
        d: usize,
        patch_tokens: Vec<Matrix>,
        cls_tokens: Matrix,
    ) -> Result<Self> {
        if t == 0 || t % TEMPORAL_SEGMENTS != 0 {
            return Err(Error::Validation(format!(
                "frame count must be a positive multiple of {TEMPORAL_SEGMENTS}, got {t}"
            )));
        }
        if h < 2 || w < 2 || h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Validation(format!(
                "patch grid must be even and at least 2x2, got {h}x{w}"
            )));
        }
        if patch_tokens.len() != t {
            return Err(Error::Validation(format!(
                "{} patch matrices for {t} frames",
                patch_tokens.len()
            )));
        }
        for (i, m) in patch_tokens.iter().enumerate() {
            if m.shape() != (h * w, d) {
                return Err(Error::Validation(format!(
                    "frame {i} patches are {}x{}, expected {}x{d}",
                    m.rows(),
                    m.cols(),
                    h * w
                )));
            }
            if !m.all_finite() {
                return Err(Error::NonFinite(format!("patch tokens of frame {i}")));
            }
        }
        if cls_tokens.shape() != (t, d) {
            return Err(Error::Validation(format!(
                "cls tokens are {}x{}, expected {t}x{d}",
                cls_tokens.rows(),
                cls_tokens.cols()
            )));
        }
        if !cls_tokens.all_finite() {
            return Err(Error::NonFinite("cls tokens".into()));
        }
        Ok(FrameEmbeddings { t, h, w, d, patch_tokens, cls_tokens })
    }

    pub fn frames(&self) -> usize {
        self.t
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Tokens per frame and per spatial-stream output.
    pub fn tokens_per_frame(&self) -> usize {
        self.h * self.w
    }

    /// Temporal-stream length 3T-1.
    pub fn temporal_len(&self) -> usize {
        3 * self.t - 1
    }

    pub fn patch_tokens(&self) -> &[Matrix] {
        &self.patch_tokens
    }

    pub fn cls_tokens(&self) -> &Matrix {
        &self.cls_tokens
    }
}

/// Spatial stream: four temporally averaged segment maps, each 2x2
/// average-pooled, concatenated segment-major with each pooled map flattened
/// row-major. Output is N×D with N = h·w.
pub fn build_spatial_tokens(fe: &FrameEmbeddings) -> Result<Matrix> {
    let (h, w) = fe.grid();
    let d = fe.dim();
    let per_segment = fe.frames() / TEMPORAL_SEGMENTS;
    let mut out = Matrix::zeros(fe.tokens_per_frame(), d);
    let mut row = 0;
    for seg in 0..TEMPORAL_SEGMENTS {
        // Temporal mean of the segment, full h×w resolution.
        let mut mean = Matrix::zeros(h * w, d);
        for f in 0..per_segment {
            let frame = &fe.patch_tokens()[seg * per_segment + f];
            for (acc, v) in mean.data_mut().iter_mut().zip(frame.data()) {
                *acc += v;
            }
        }
        let inv = 1.0 / per_segment as f64;
        for v in mean.data_mut() {
            *v *= inv;
        }
        // 2x2 average pool, output positions in row-major order.
        for pr in 0..h / 2 {
            for pc in 0..w / 2 {
                for j in 0..d {
                    let mut acc = 0.0;
                    for (dr, dc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        acc += mean.get((2 * pr + dr) * w + (2 * pc + dc), j);
                    }
                    out.set(row, j, acc / 4.0);
                }
                row += 1;
            }
        }
    }
    Ok(out)
}

/// Temporal stream: [cls_1..cls_T | pool_1..pool_T | diff_1..diff_{T-1}],
/// where pool_t is the spatial mean of frame t and diff_t the spatial mean
/// of frame_{t+1} - frame_t. Output is M×D with M = 3T-1.
pub fn build_temporal_tokens(fe: &FrameEmbeddings) -> Result<Matrix> {
    let t = fe.frames();
    let d = fe.dim();
    let n_f = fe.tokens_per_frame();
    let mut out = Matrix::zeros(fe.temporal_len(), d);

    for f in 0..t {
        let src = fe.cls_tokens().row(f);
        out.row_mut(f).copy_from_slice(src);
    }
    let spatial_mean = |frame: &Matrix| -> Vec<f64> {
        let mut acc = vec![0.0; d];
        for p in 0..n_f {
            for (a, v) in acc.iter_mut().zip(frame.row(p)) {
                *a += v;
            }
        }
        let inv = 1.0 / n_f as f64;
        for a in &mut acc {
            *a *= inv;
        }
        acc
    };
    for f in 0..t {
        let pooled = spatial_mean(&fe.patch_tokens()[f]);
        out.row_mut(t + f).copy_from_slice(&pooled);
    }
    for f in 0..t - 1 {
        let delta = fe.patch_tokens()[f + 1].sub(&fe.patch_tokens()[f])?;
        let pooled = spatial_mean(&delta);
        out.row_mut(2 * t + f).copy_from_slice(&pooled);
    }
    Ok(out)
}

/// Token counts of one assembled sequence, in layout order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceLayout {
    pub m: usize,
    pub n: usize,
    pub l: usize,
}

impl SequenceLayout {
    pub fn visual_len(&self) -> usize {
        self.m + self.n
    }

    pub fn total(&self) -> usize {
        self.m + self.n + self.l
    }

    pub fn spatial_start(&self) -> usize {
        self.m
    }

    pub fn text_start(&self) -> usize {
        self.m + self.n
    }

    pub fn tag_of(&self, i: usize) -> TokenTag {
        if i < self.m {
            TokenTag::Temporal
        } else if i < self.m + self.n {
            TokenTag::Spatial
        } else {
            TokenTag::Text
        }
    }

    pub fn tags(&self) -> Vec<TokenTag> {
        (0..self.total()).map(|i| self.tag_of(i)).collect()
    }
}

/// Model input: stacked token rows in [temporal | spatial | text] order with
/// matching tags and both positional-ID tracks.
#[derive(Debug, Clone)]
pub struct TokenSequence {
    pub tokens: Matrix,
    pub tags: Vec<TokenTag>,
    pub layout: SequenceLayout,
    pub ids: PositionIds,
}

/// Stack the three streams and derive tags and position IDs. The balanced ID
/// scheme constrains the shape: there must be at least as many spatial as
/// temporal tokens.
pub fn assemble_sequence(temporal: &Matrix, spatial: &Matrix, text: &Matrix) -> Result<TokenSequence> {
    let m = temporal.rows();
    let n = spatial.rows();
    let l = text.rows();
    if m == 0 {
        return Err(Error::Validation("temporal stream required (M >= 1)".into()));
    }
    let d = temporal.cols();
    if spatial.cols() != d || (l > 0 && text.cols() != d) {
        return Err(Error::Validation(format!(
            "stream widths differ: temporal {d}, spatial {}, text {}",
            spatial.cols(),
            text.cols()
        )));
    }
    let layout = SequenceLayout { m, n, l };
    let ids = PositionIds::build(n, m, l)?;
    let mut data = Vec::with_capacity(layout.total() * d);
    data.extend_from_slice(temporal.data());
    data.extend_from_slice(spatial.data());
    data.extend_from_slice(text.data());
    Ok(TokenSequence { tokens: Matrix::from_vec(layout.total(), d, data), tags: layout.tags(), layout, ids })
}
