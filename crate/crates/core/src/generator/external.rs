use std::collections::HashMap;
use std::path::Path;

use super::{ExternalKind, GeneratorConfig};
use crate::seed::{fnv1a64, splitmix64};
use crate::{Error, Result};

/// Source of extra per-token vectors appended to word embeddings.
#[derive(Clone, Debug, PartialEq)]
pub enum ExternalEncoder {
    None,
    /// Hash-seeded pseudo-random vectors, one per token.
    Stub { dim: usize },
    /// Vectors read from a sidecar file, keyed by utterance hash.
    Plugin { dim: usize, table: HashMap<String, Vec<Vec<f32>>> },
}

/// Lowercase hex FNV-1a 64 of the space-joined tokens.
pub fn utterance_hash<S: AsRef<str>>(tokens: &[S]) -> String {
    let joined: Vec<&str> = tokens.iter().map(|t| t.as_ref()).collect();
    format!("{:016x}", fnv1a64(joined.join(" ").as_bytes()))
}

impl ExternalEncoder {
    pub fn from_config(config: &GeneratorConfig) -> Result<Self> {
        match config.external {
            ExternalKind::None => Ok(ExternalEncoder::None),
            ExternalKind::Stub => Ok(ExternalEncoder::Stub { dim: config.external_dim }),
            ExternalKind::Plugin => {
                let path = config
                    .external_path
                    .as_deref()
                    .ok_or_else(|| Error::Config("plugin external encoder needs a sidecar path".into()))?;
                Self::load_plugin(path, config.external_dim)
            }
        }
    }

    /// Parses `<hash> <dim> <v1> ... <vdim>` lines. Consecutive lines sharing a
    /// hash give the vectors of successive tokens of that utterance.
    pub fn load_plugin(path: &Path, dim: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut table: HashMap<String, Vec<Vec<f32>>> = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: String| Error::Parse {
                path: path.to_path_buf(),
                locus: format!("line {}", n + 1),
                message: m,
            };
            let mut parts = line.split_whitespace();
            let hash = parts.next().unwrap_or_default().to_ascii_lowercase();
            let d: usize = parts
                .next()
                .ok_or_else(|| err("missing dimension".into()))?
                .parse()
                .map_err(|e| err(format!("bad dimension: {e}")))?;
            if d != dim {
                return Err(err(format!("dimension {d}, configured {dim}")));
            }
            let v = parts
                .map(|p| p.parse::<f32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| err(format!("bad value: {e}")))?;
            if v.len() != d {
                return Err(err(format!("expected {d} values, found {}", v.len())));
            }
            table.entry(hash).or_default().push(v);
        }
        Ok(ExternalEncoder::Plugin { dim, table })
    }

    pub fn dim(&self) -> usize {
        match self {
            ExternalEncoder::None => 0,
            ExternalEncoder::Stub { dim } | ExternalEncoder::Plugin { dim, .. } => *dim,
        }
    }

    /// Vectors for `tokens`. The plugin returns sidecar rows verbatim.
    pub fn embed<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<Vec<f32>>> {
        match self {
            ExternalEncoder::None => Ok(vec![Vec::new(); tokens.len()]),
            ExternalEncoder::Stub { dim } => Ok(tokens.iter().map(|t| stub_vector(t.as_ref(), *dim)).collect()),
            ExternalEncoder::Plugin { table, .. } => {
                let h = utterance_hash(tokens);
                table.get(&h).cloned().ok_or(Error::PluginLookupMiss(h))
            }
        }
    }

    /// Like [`embed`](Self::embed) but always one row per token: a single
    /// sidecar row is broadcast across the utterance.
    pub fn embed_aligned<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<Vec<f32>>> {
        if tokens.is_empty() {
            return Ok(Vec::new());
        }
        let rows = self.embed(tokens)?;
        match rows.len() {
            n if n == tokens.len() => Ok(rows),
            1 => Ok(vec![rows[0].clone(); tokens.len()]),
            n => Err(Error::Data(format!(
                "sidecar has {n} vectors for a {}-token utterance",
                tokens.len()
            ))),
        }
    }
}

/// Values in `[-1, 1)` from a splitmix64 stream seeded by the token hash.
fn stub_vector(token: &str, dim: usize) -> Vec<f32> {
    let base = fnv1a64(token.as_bytes());
    (0..dim as u64)
        .map(|i| {
            let bits = splitmix64(base.wrapping_add(i)) >> 11;
            (bits as f64 / (1u64 << 53) as f64 * 2.0 - 1.0) as f32
        })
        .collect()
}

/// Standalone entry point for one utterance.
pub fn external_encoder_embed<S: AsRef<str>>(utterance: &[S], encoder: &ExternalEncoder) -> Result<Vec<Vec<f32>>> {
    encoder.embed(utterance)
}
