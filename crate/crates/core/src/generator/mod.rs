//! Stage 2: hierarchical encoder-decoder with pointer-sentinel copying.
//!
//! The encoder reads the flattened `[KB ; context ; user query]` sequence one
//! segment at a time (KB record, speaker-tagged turn, query), then runs a
//! dialogue-level GRU over segment summaries. The decoder is a GRU started
//! from the summary, optionally mixed with stage-1 latent information, and
//! emits a mixture of a vocabulary softmax and a pointer over memory tokens.

mod copy;
mod external;
mod instance;
mod model;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

pub use copy::{mean_token_nll, mix_copy, CopyState};
pub use external::{external_encoder_embed, utterance_hash, ExternalEncoder};
pub use instance::{encode_instance, EncodedInstance, LatentInput, Stage1};
pub use model::{
    condition_latent, copy_distribution, encode_context, generate_response, hred_step_loss, ContextEncoding,
    GeneratorModel,
};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Conditioning {
    None,
    EncoderConcat,
    CodeConcat,
    VaeConcat,
}

impl Conditioning {
    pub fn needs_latent(self) -> bool {
        self != Conditioning::None
    }
}

impl fmt::Display for Conditioning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Conditioning::None => "none",
            Conditioning::EncoderConcat => "encoder_concat",
            Conditioning::CodeConcat => "code_concat",
            Conditioning::VaeConcat => "vae_concat",
        })
    }
}

impl FromStr for Conditioning {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Conditioning::None),
            "encoder_concat" => Ok(Conditioning::EncoderConcat),
            "code_concat" => Ok(Conditioning::CodeConcat),
            "vae_concat" => Ok(Conditioning::VaeConcat),
            _ => Err(Error::Config(format!("unknown conditioning mode `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExternalKind {
    None,
    Stub,
    Plugin,
}

impl fmt::Display for ExternalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExternalKind::None => "none",
            ExternalKind::Stub => "stub",
            ExternalKind::Plugin => "plugin",
        })
    }
}

impl FromStr for ExternalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(ExternalKind::None),
            "stub" => Ok(ExternalKind::Stub),
            "plugin" => Ok(ExternalKind::Plugin),
            _ => Err(Error::Config(format!("unknown external encoder `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub embed: usize,
    pub utt_hidden: usize,
    pub dlg_hidden: usize,
    pub dec_hidden: usize,
    pub conditioning: Conditioning,
    pub external: ExternalKind,
    pub external_dim: usize,
    /// Sidecar file for the plugin encoder.
    pub external_path: Option<PathBuf>,
    pub max_decode_len: usize,
    /// With `false` the gate is pinned to the vocabulary distribution.
    pub copy: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            embed: 128,
            utt_hidden: 256,
            dlg_hidden: 512,
            dec_hidden: 512,
            conditioning: Conditioning::None,
            external: ExternalKind::None,
            external_dim: 32,
            external_path: None,
            max_decode_len: 40,
            copy: true,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if [self.embed, self.utt_hidden, self.dlg_hidden, self.dec_hidden].contains(&0) {
            return Err(Error::Config("generator sizes must be >= 1".into()));
        }
        if self.external != ExternalKind::None && self.external_dim == 0 {
            return Err(Error::Config("generator.external_dim must be >= 1".into()));
        }
        if self.conditioning == Conditioning::None && self.dec_hidden != self.dlg_hidden {
            return Err(Error::Config(format!(
                "conditioning none passes the summary through unchanged, so dec_hidden ({}) must equal dlg_hidden ({})",
                self.dec_hidden, self.dlg_hidden
            )));
        }
        if self.external == ExternalKind::Plugin && self.external_path.is_none() {
            return Err(Error::Config("plugin external encoder needs generator.external_path".into()));
        }
        Ok(())
    }

    /// Width of external vectors appended to each word embedding.
    pub fn external_width(&self) -> usize {
        if self.external == ExternalKind::None {
            0
        } else {
            self.external_dim
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_modes() {
        assert_eq!("CODE_CONCAT".parse::<Conditioning>().unwrap(), Conditioning::CodeConcat);
        assert_eq!(Conditioning::VaeConcat.to_string().parse::<Conditioning>().unwrap(), Conditioning::VaeConcat);
        assert!("bogus".parse::<Conditioning>().is_err());
        assert_eq!("stub".parse::<ExternalKind>().unwrap(), ExternalKind::Stub);
    }

    #[test]
    fn none_mode_needs_matching_sizes() {
        let mut c = GeneratorConfig::default();
        assert!(c.validate().is_ok());
        c.dec_hidden = 100;
        assert!(c.validate().is_err());
        c.conditioning = Conditioning::CodeConcat;
        assert!(c.validate().is_ok());
        c.utt_hidden = 0;
        assert!(c.validate().is_err());
    }
}
