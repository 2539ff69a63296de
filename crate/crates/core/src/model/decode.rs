//! Greedy autoregressive decoding.

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::forward::forward;
use crate::model::params::ModelParams;
use crate::token_pipeline::FrameEmbeddings;

/// First index of the row maximum; ties break toward the lower token id.
fn argmax(row: &[f64]) -> u32 {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &v) in row.iter().enumerate() {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best as u32
}

/// Append argmax tokens one at a time until `stop_token` is produced or
/// `max_new` tokens have been added. Returns only the generated tokens.
/// Each appended token takes the next position ID on both tracks.
pub fn greedy_decode(
    fe: &FrameEmbeddings,
    prompt: &[u32],
    params: &ModelParams,
    cfg: &ModelConfig,
    max_new: usize,
    stop_token: u32,
) -> Result<Vec<u32>> {
    if max_new == 0 {
        return Err(Error::Validation("max_new must be at least 1".into()));
    }
    let mut text = prompt.to_vec();
    for _ in 0..max_new {
        let pass = forward(fe, &text, params, cfg)?;
        let logits = pass.tape.value(pass.logits);
        let next = argmax(logits.row(logits.rows() - 1));
        text.push(next);
        if next == stop_token {
            break;
        }
    }
    Ok(text[prompt.len()..].to_vec())
}
