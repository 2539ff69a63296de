//! Desk-scale autoregressive decoder built around two mechanisms: attention
//! masking that keeps spatial and temporal video tokens disentangled inside
//! the decoder, and a rotary position embedding that interleaves two
//! positional-ID tracks so both token groups sit at balanced distances from
//! the text tokens.
//!
//! The crate is organized bottom-up:
//!
//! - [`numerics`] — dense `f64` matrices, a reverse-mode gradient tape, and a
//!   central-difference gradient checker.
//! - [`token_pipeline`] — turns per-frame embeddings into spatial and
//!   temporal token streams and assembles the tagged sequence.
//! - [`positional`] — rotary rotation plus the distinct / balanced / harmonic
//!   positional-ID schemes.
//! - [`dst_attention`] — disentangling and structured spatio-temporal masks,
//!   and masked multi-head attention over the tape.
//! - [`model`] — a K-block pre-norm decoder with projector, embedding table,
//!   training step, and greedy decoding.
//! - [`harness`] — synthetic action-scene dataset, dual-validation
//!   evaluation, attention profiles, checkpoint/config/CSV formats, and the
//!   experiment runner behind the CLI.

pub mod dst_attention;
pub mod error;
pub mod harness;
pub mod model;
pub mod numerics;
pub mod positional;
pub mod token_pipeline;

pub use error::{Error, Result};
pub use numerics::{Matrix, Tape};
