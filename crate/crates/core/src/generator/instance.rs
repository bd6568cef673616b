use super::{Conditioning, ExternalEncoder};
use crate::corpus::{Speaker, TrainingInstance, Vocab, EOS, KB_CLOSE};
use crate::latent::{LaedModel, LatentCode, LatentModel, MAX_UTTERANCE_TOKENS};
use crate::{Error, Result};

/// Responses longer than this are truncated for training.
pub const MAX_RESPONSE_TOKENS: usize = 60;

/// Stage-1 information attached to one instance.
#[derive(Clone, Debug, PartialEq)]
pub enum LatentInput {
    None,
    /// Argmax codes of the query (DI-VAE) and of the predicted system action (LAED policy).
    Codes { usr: LatentCode, sys: LatentCode, k: usize },
    /// Posterior probabilities from the same two encoders.
    Encoded { usr: Vec<f64>, sys: Vec<f64> },
    /// Posterior mean of the VAE baseline.
    Continuous(Vec<f64>),
}

impl LatentInput {
    /// Feature block for `mode`, concatenated in the order the adapter expects.
    pub fn features(&self, mode: Conditioning) -> Result<Vec<f64>> {
        let missing = || Error::MissingCodes(mode.to_string());
        match (mode, self) {
            (Conditioning::None, _) => Ok(Vec::new()),
            (Conditioning::CodeConcat, LatentInput::Codes { usr, sys, k }) => {
                let mut v = usr.one_hot(*k);
                v.extend(sys.one_hot(*k));
                Ok(v)
            }
            (Conditioning::EncoderConcat, LatentInput::Encoded { usr, sys }) => {
                Ok(usr.iter().chain(sys).copied().collect())
            }
            (Conditioning::VaeConcat, LatentInput::Continuous(z)) => Ok(z.clone()),
            _ => Err(missing()),
        }
    }
}

/// Frozen stage-1 models and the vocabulary they were trained with.
#[derive(Debug)]
pub struct Stage1 {
    pub vocab: Vocab,
    pub di_vae: Option<LatentModel>,
    pub laed: Option<LaedModel>,
    pub vae: Option<LatentModel>,
}

impl Stage1 {
    /// Width of the latent feature block for `mode`.
    pub fn latent_width(&self, mode: Conditioning) -> Result<usize> {
        let discrete = |m: &Option<LatentModel>| m.as_ref().map(|m| 2 * m.config().m * m.config().k);
        let w = match mode {
            Conditioning::None => Some(0),
            Conditioning::CodeConcat | Conditioning::EncoderConcat => discrete(&self.di_vae),
            Conditioning::VaeConcat => self.vae.as_ref().map(|m| m.config().vae_dim),
        };
        w.ok_or_else(|| Error::MissingStage1(mode.to_string()))
    }

    fn ids(&self, tokens: &[String]) -> Vec<u32> {
        let mut v = self.vocab.encode(tokens);
        v.truncate(MAX_UTTERANCE_TOKENS);
        v
    }

    /// Latent inputs for each instance. Codes come from the DI-VAE on the
    /// query and from the LAED policy on the context; the gold response is
    /// never consulted.
    pub fn latent_inputs(&self, mode: Conditioning, instances: &[TrainingInstance]) -> Result<Vec<LatentInput>> {
        if mode == Conditioning::None {
            return Ok(vec![LatentInput::None; instances.len()]);
        }
        let missing = || Error::MissingStage1(mode.to_string());
        let mut out = Vec::with_capacity(instances.len());
        for chunk in instances.chunks(64) {
            let queries: Vec<Vec<u32>> = chunk.iter().map(|i| self.ids(&i.user)).collect();
            if mode == Conditioning::VaeConcat {
                let vae = self.vae.as_ref().ok_or_else(missing)?;
                let (mu, _) = vae.gaussian(&queries)?;
                for row in crate::nn::to_rows(&mu)? {
                    out.push(LatentInput::Continuous(row));
                }
                continue;
            }
            let di_vae = self.di_vae.as_ref().ok_or_else(missing)?;
            let laed = self.laed.as_ref().ok_or_else(missing)?;
            let contexts: Vec<Vec<Vec<u32>>> = chunk
                .iter()
                .map(|i| {
                    i.history()
                        .iter()
                        .map(|(s, t)| crate::latent::segment(&self.vocab, *s, t))
                        .collect()
                })
                .collect();
            if mode == Conditioning::CodeConcat {
                let k = di_vae.config().k;
                let usr = di_vae.codes(&queries)?;
                let sys = laed.policy_codes(&contexts)?;
                out.extend(usr.into_iter().zip(sys).map(|(usr, sys)| LatentInput::Codes { usr, sys, k }));
            } else {
                let usr = crate::nn::to_rows(&di_vae.posterior_probs(&queries)?)?;
                let sys = crate::nn::to_rows(&laed.policy_probs(&contexts)?)?;
                out.extend(usr.into_iter().zip(sys).map(|(usr, sys)| LatentInput::Encoded { usr, sys }));
            }
        }
        Ok(out)
    }
}

/// One instance mapped through a generator vocabulary, ready for batching.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedInstance {
    pub vocab_hash: String,
    /// KB records, then speaker-tagged context turns, then the bare query.
    pub segments: Vec<Vec<u32>>,
    /// External vectors per segment token; empty without an external encoder.
    pub segment_ext: Vec<Vec<Vec<f32>>>,
    /// Extended ids of the flattened segments: vocabulary ids, or `V + i` for
    /// the `i`-th out-of-vocabulary memory token.
    pub memory_ids: Vec<u32>,
    pub memory_tokens: Vec<String>,
    pub oov: Vec<String>,
    /// Extended gold ids followed by EOS. Tokens that are neither in the
    /// vocabulary nor in memory become UNK.
    pub target: Vec<u32>,
    /// BOS followed by the gold tokens as vocabulary ids, aligned with `target`.
    pub decoder_input: Vec<u32>,
    pub latent: LatentInput,
    pub reference: Vec<String>,
    pub entities: Vec<String>,
    pub domain: String,
}

fn truncated(tokens: &[String], n: usize) -> &[String] {
    &tokens[..tokens.len().min(n)]
}

pub fn encode_instance(
    vocab: &Vocab,
    inst: &TrainingInstance,
    latent: LatentInput,
    external: &ExternalEncoder,
) -> Result<EncodedInstance> {
    let mut token_segments: Vec<Vec<String>> = Vec::new();
    let mut ext_segments: Vec<Vec<Vec<f32>>> = Vec::new();
    let with_ext = external.dim() > 0;
    let mut push = |tokens: Vec<String>, body_from: usize| -> Result<()> {
        let mut ext = Vec::new();
        if with_ext {
            ext = vec![vec![0.0; external.dim()]; body_from];
            ext.extend(external.embed_aligned(&tokens[body_from..])?);
        }
        token_segments.push(tokens);
        ext_segments.push(ext);
        Ok(())
    };
    let mut record = Vec::new();
    for t in &inst.kb {
        record.push(t.clone());
        if t == KB_CLOSE {
            push(std::mem::take(&mut record), 0)?;
        }
    }
    if !record.is_empty() {
        push(record, 0)?;
    }
    for (speaker, toks) in &inst.context {
        let mut seg = vec![Speaker::sentinel(*speaker).to_string()];
        seg.extend_from_slice(truncated(toks, MAX_UTTERANCE_TOKENS));
        push(seg, 1)?;
    }
    push(truncated(&inst.user, MAX_UTTERANCE_TOKENS).to_vec(), 0)?;

    let v = vocab.len() as u32;
    let mut oov: Vec<String> = Vec::new();
    let mut memory_ids = Vec::new();
    let mut memory_tokens = Vec::new();
    for tok in token_segments.iter().flatten() {
        let id = match vocab.get(tok) {
            Some(id) => id,
            None => match oov.iter().position(|o| o == tok) {
                Some(i) => v + i as u32,
                None => {
                    oov.push(tok.clone());
                    v + oov.len() as u32 - 1
                }
            },
        };
        memory_ids.push(id);
        memory_tokens.push(tok.clone());
    }
    let response = truncated(&inst.response, MAX_RESPONSE_TOKENS);
    let mut target: Vec<u32> = response
        .iter()
        .map(|t| {
            vocab
                .get(t)
                .or_else(|| oov.iter().position(|o| o == t).map(|i| v + i as u32))
                .unwrap_or(crate::corpus::UNK_ID)
        })
        .collect();
    target.push(vocab.id(EOS));
    let mut decoder_input = vec![crate::corpus::BOS_ID];
    decoder_input.extend(vocab.encode(response));
    Ok(EncodedInstance {
        vocab_hash: vocab.hash(),
        segments: token_segments.iter().map(|s| vocab.encode(s)).collect(),
        segment_ext: ext_segments,
        memory_ids,
        memory_tokens,
        oov,
        target,
        decoder_input,
        latent,
        reference: inst.response.clone(),
        entities: inst.entities.clone(),
        domain: inst.domain.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, Vocab, KB_OPEN, UNK_ID};

    fn vocab() -> Vocab {
        let words = ["the", "weather", "is", "what", "poi", "address", "at"];
        Vocab::from_tokens(words.iter().map(|w| w.to_string()).collect::<Vec<_>>())
    }

    fn inst(context: Vec<(Speaker, &str)>, kb: Vec<&str>, user: &str, response: &str) -> TrainingInstance {
        TrainingInstance {
            dialogue_id: "d".into(),
            domain: "weather".into(),
            context: context.into_iter().map(|(s, t)| (s, tokenize(t))).collect(),
            user: tokenize(user),
            response: tokenize(response),
            kb: kb.into_iter().map(String::from).collect(),
            entities: vec![],
        }
    }

    #[test]
    fn query_only_layout() {
        let e = encode_instance(&vocab(), &inst(vec![], vec![], "what is the weather", "x"), LatentInput::None, &ExternalEncoder::None).unwrap();
        assert_eq!(e.memory_tokens, tokenize("what is the weather"));
        assert_eq!(e.segments.len(), 1);
    }

    #[test]
    fn kb_and_query_lengths() {
        let kb = vec![KB_OPEN, "poi", "stanford", "express", "care", "address", "214", "el", "camino", "real", KB_CLOSE];
        let e = encode_instance(&vocab(), &inst(vec![], kb, "what is the address ?", "at 214 el camino real"), LatentInput::None, &ExternalEncoder::None).unwrap();
        assert_eq!(e.memory_ids.len(), 16);
        let with_ctx = encode_instance(
            &vocab(),
            &inst(vec![(Speaker::User, "hi"), (Speaker::System, "hello")], vec![], "a b c d e", "x"),
            LatentInput::None,
            &ExternalEncoder::None,
        )
        .unwrap();
        assert_eq!(with_ctx.memory_ids.len(), 5 + 2 + 2);
        assert_eq!(with_ctx.memory_tokens.iter().filter(|t| *t == "<usr>").count(), 1);
    }

    #[test]
    fn out_of_vocab_targets_point_into_memory() {
        let v = vocab();
        let kb = vec![KB_OPEN, "poi", "zorbix", KB_CLOSE];
        let e = encode_instance(&v, &inst(vec![], kb, "what", "at zorbix blorf"), LatentInput::None, &ExternalEncoder::None).unwrap();
        let ext = v.len() as u32;
        assert_eq!(e.oov, vec!["zorbix".to_string(), "what".to_string()].into_iter().filter(|t| v.get(t).is_none()).collect::<Vec<_>>());
        assert_eq!(e.target, vec![v.id("at"), ext, UNK_ID, v.id(EOS)]);
        assert_eq!(e.decoder_input, vec![crate::corpus::BOS_ID, v.id("at"), UNK_ID, UNK_ID]);
    }

    #[test]
    fn external_vectors_align() {
        let e = encode_instance(
            &vocab(),
            &inst(vec![(Speaker::User, "hi there")], vec![], "what", "x"),
            LatentInput::None,
            &ExternalEncoder::Stub { dim: 3 },
        )
        .unwrap();
        for (seg, ext) in e.segments.iter().zip(&e.segment_ext) {
            assert_eq!(seg.len(), ext.len());
        }
        assert_eq!(e.segment_ext[0][0], vec![0.0; 3]);
    }

    #[test]
    fn features_require_matching_input() {
        let c = LatentCode::new(vec![1, 0], 3).unwrap();
        let input = LatentInput::Codes { usr: c.clone(), sys: c, k: 3 };
        assert_eq!(input.features(Conditioning::CodeConcat).unwrap().len(), 12);
        assert!(matches!(LatentInput::None.features(Conditioning::CodeConcat), Err(Error::MissingCodes(_))));
        assert!(LatentInput::None.features(Conditioning::None).unwrap().is_empty());
    }
}
