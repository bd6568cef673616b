//! Stage 1: discrete latent utterance and dialogue-act codes.
//!
//! DI-VAE reconstructs an utterance from its code, DI-VST reconstructs the
//! neighbouring utterances, and LAED adds a policy that predicts the system
//! code from context. All discrete variants are regularized with batch prior
//! regularization against a uniform prior. A Gaussian VAE is kept as a
//! baseline.

mod bpr;
mod cluster;
mod gumbel;
mod laed;
mod model;
mod train;

use std::fmt;

pub use bpr::{bpr_kl, bpr_kl_tensor, vae_kl};
pub use cluster::{cluster_by_code, cluster_purity};
pub use gumbel::{gumbel_noise, gumbel_softmax_sample, gumbel_softmax_with_noise};
pub use laed::{laed_loss, policy_nll, LaedExample, LaedModel};
pub use model::{di_vae_loss, di_vst_loss, encode_codes, vae_loss, LatentModel, LatentVariant};
pub use train::{
    evaluate_laed, evaluate_latent, train_laed, train_latent, Stage1Data, TrainLog, TrainOptions, VstTriple,
    MAX_UTTERANCE_TOKENS,
};

pub(crate) use train::segment;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LatentConfig {
    /// Number of latent variables.
    pub m: usize,
    /// Classes per variable.
    pub k: usize,
    pub tau_start: f64,
    pub tau_end: f64,
    /// Steps over which the temperature falls from start to end; 0 spans the whole run.
    pub anneal_steps: usize,
    pub hard: bool,
    pub embed: usize,
    pub hidden: usize,
    /// Width of the continuous code of the VAE baseline.
    pub vae_dim: usize,
}

impl Default for LatentConfig {
    fn default() -> Self {
        LatentConfig {
            m: 10,
            k: 5,
            tau_start: 1.0,
            tau_end: 0.5,
            anneal_steps: 0,
            hard: true,
            embed: 64,
            hidden: 128,
            vae_dim: 16,
        }
    }
}

impl LatentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("latent: {m}")));
        if self.m < 1 {
            return bad("M must be >= 1");
        }
        if self.k < 2 {
            return bad("K must be >= 2");
        }
        if !(self.tau_start > 0.0 && self.tau_end > 0.0) {
            return bad("temperatures must be > 0");
        }
        if self.tau_end > self.tau_start {
            return bad("tau_end must not exceed tau_start");
        }
        if self.embed == 0 || self.hidden == 0 || self.vae_dim == 0 {
            return bad("sizes must be >= 1");
        }
        Ok(())
    }

    /// Linearly annealed temperature at `step` of a run lasting `total_steps`.
    pub fn temperature(&self, step: usize, total_steps: usize) -> f64 {
        let span = if self.anneal_steps > 0 {
            self.anneal_steps
        } else {
            total_steps.saturating_sub(1).max(1)
        };
        let frac = (step as f64 / span as f64).min(1.0);
        self.tau_start + (self.tau_end - self.tau_start) * frac
    }
}

/// One discrete code: `M` values, each in `[0, K)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LatentCode {
    values: Vec<usize>,
}

impl LatentCode {
    pub fn new(values: Vec<usize>, k: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDistribution("latent code has no variables".into()));
        }
        if let Some(v) = values.iter().find(|&&v| v >= k) {
            return Err(Error::InvalidDistribution(format!("code value {v} out of range for K={k}")));
        }
        Ok(LatentCode { values })
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Flat `M*K` one-hot encoding.
    pub fn one_hot(&self, k: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.values.len() * k];
        for (m, &v) in self.values.iter().enumerate() {
            out[m * k + v] = 1.0;
        }
        out
    }
}

impl fmt::Display for LatentCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.values.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("-"))
    }
}

impl std::str::FromStr for LatentCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let values = s
            .split('-')
            .map(|p| p.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Data(format!("bad latent code `{s}`: {e}")))?;
        let k = values.iter().max().map_or(1, |m| m + 1);
        LatentCode::new(values, k)
    }
}

/// Scalar view of one loss evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub reconstruction_nll: f64,
    pub kl: f64,
    /// LAED policy cross-entropy; zero for the autoencoders.
    pub policy_nll: f64,
}

/// A loss as a differentiable tensor plus its scalar breakdown.
#[derive(Debug)]
pub struct LossOutput {
    pub total: candle_core::Tensor,
    pub breakdown: LossBreakdown,
}
