//! Few-shot goal-oriented dialogue generation.
//!
//! Stage 1 learns discrete latent dialogue codes (DI-VAE, DI-VST, LAED) on a
//! large multi-domain corpus without annotations. Stage 2 trains a
//! hierarchical encoder-decoder with pointer-sentinel copying on source
//! domains plus a handful of target-domain dialogues, conditioned on the
//! frozen stage-1 codes. Evaluation uses corpus BLEU and Entity F1.

pub mod corpus;
pub mod generator;
pub mod latent;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod seed;
pub mod synth;
mod error;

pub use error::{Error, Result};
