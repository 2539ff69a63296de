//! Whole-model gradient verification.
//!
//! Runs the complete pipeline — token streams, projector, attention blocks,
//! loss — as a scalar function of the flattened parameter vector and compares
//! every analytic gradient entry against central differences. Sized so the
//! dense probe loop stays under a second.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::dst_attention::AttentionConfig;
use crate::error::Result;
use crate::model::config::{default_mlp_hidden, ModelConfig};
use crate::model::forward::{forward, supervision};
use crate::model::params::ModelParams;
use crate::numerics::{finite_diff_check, Matrix};
use crate::positional::{RopeConfig, RopeScheme};
use crate::token_pipeline::FrameEmbeddings;

/// Smallest full-featured model: one block, two heads, a 2x2 patch grid.
/// The grid yields fewer spatial than temporal tokens, which only the
/// distinct rotation scheme permits.
pub fn grad_check_config(seed: u64) -> ModelConfig {
    let mut attention = AttentionConfig::dst_default(2, 4);
    attention.rope_scheme = RopeScheme::Distinct;
    ModelConfig {
        blocks: 1,
        width: 8,
        heads: 2,
        head_dim: 4,
        vocab: 8,
        mlp_hidden: default_mlp_hidden(8, 2),
        enc_dim: 3,
        attention,
        rope: RopeConfig::with_default_base(4).unwrap(),
        frames: 4,
        grid_h: 2,
        grid_w: 2,
        seed,
    }
}

fn random_input(cfg: &ModelConfig, seed: u64) -> Result<(FrameEmbeddings, Vec<u32>)> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n_f = cfg.grid_h * cfg.grid_w;
    let patch_tokens: Vec<Matrix> =
        (0..cfg.frames).map(|_| Matrix::randn(n_f, cfg.enc_dim, 1.0, &mut rng)).collect();
    let cls_tokens = Matrix::randn(cfg.frames, cfg.enc_dim, 1.0, &mut rng);
    let fe = FrameEmbeddings::new(cfg.frames, cfg.grid_h, cfg.grid_w, cfg.enc_dim, patch_tokens, cls_tokens)?;
    let text: Vec<u32> = (0..3).map(|_| rng.random_range(0..cfg.vocab as u32)).collect();
    Ok((fe, text))
}

/// Max relative error between analytic and central-difference gradients of
/// the training loss, over every parameter scalar.
pub fn model_gradient_check(cfg: &ModelConfig, data_seed: u64) -> Result<f64> {
    cfg.validate()?;
    let (fe, text) = random_input(cfg, data_seed)?;
    let prompt_len = 1;
    let answer_len = text.len() - 1;

    let params = ModelParams::init(cfg)?;
    let flat = params.to_flat();

    let loss_of = |flat: &[f64]| -> Result<f64> {
        let mut p = ModelParams::init(cfg)?;
        p.load_flat(flat)?;
        let mut pass = forward(&fe, &text, &p, cfg)?;
        let (mask, targets) = supervision(&text, prompt_len, answer_len)?;
        let loss = pass.tape.cross_entropy(pass.logits, &targets, &mask)?;
        Ok(pass.tape.value(loss).get(0, 0))
    };

    let mut pass = forward(&fe, &text, &params, cfg)?;
    let (mask, targets) = supervision(&text, prompt_len, answer_len)?;
    let loss = pass.tape.cross_entropy(pass.logits, &targets, &mask)?;
    pass.tape.backward(loss)?;
    let mut analytic = Vec::with_capacity(flat.len());
    for &node in &pass.params.nodes {
        match pass.tape.grad(node) {
            Some(g) => analytic.extend_from_slice(g.data()),
            None => analytic.extend(std::iter::repeat(0.0).take(pass.tape.value(node).len())),
        }
    }

    finite_diff_check(loss_of, &flat, &analytic, 1e-5)
}
