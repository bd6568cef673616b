use candle_core::{DType, Device, Tensor, D};

use super::{mean_token_nll, mix_copy, Conditioning, CopyState, EncodedInstance, GeneratorConfig};
use crate::corpus::{Vocab, BOS_ID, EOS_ID, UNK_ID};
use crate::nn::{group_segments, pad_batch, tensor_f32, to_rows, Embedding, Gru, Init, Linear, Lstm, ParamStore};
use crate::{Error, Result};

/// Encoder outputs for a batch.
#[derive(Clone, Debug)]
pub struct ContextEncoding {
    /// Per-position memory states `(B, L, H_utt)`; row `j` is flattened token `j`.
    pub memory: Tensor,
    /// 1 for real memory positions, 0 for padding `(B, L)`.
    pub mask: Tensor,
    /// Dialogue-level summary `(B, H_dlg)`.
    pub summary: Tensor,
    /// Latent features `(B, W)` when the conditioning mode uses them.
    pub latent: Option<Tensor>,
    pub memory_ids: Vec<Vec<u32>>,
    pub memory_tokens: Vec<Vec<String>>,
    pub oov: Vec<Vec<String>>,
}

impl ContextEncoding {
    pub fn memory_len(&self, b: usize) -> usize {
        self.memory_ids[b].len()
    }
}

pub struct GeneratorModel {
    store: ParamStore,
    config: GeneratorConfig,
    vocab: Vocab,
    vocab_hash: String,
    latent_width: usize,
    emb: Embedding,
    utt: Lstm,
    dlg: Gru,
    cond: Option<Linear>,
    dec: Gru,
    attn: Linear,
    sentinel: Tensor,
    out: Linear,
}

impl std::fmt::Debug for GeneratorModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GeneratorModel")
            .field("config", &self.config)
            .field("vocab", &self.vocab.len())
            .field("latent_width", &self.latent_width)
            .finish()
    }
}

/// Logit penalty for padded memory positions.
const MASK_PENALTY: f64 = 1e9;

impl GeneratorModel {
    pub fn new(config: &GeneratorConfig, vocab: Vocab, latent_width: usize, dtype: DType, seed: u64) -> Result<Self> {
        Self::from_store(ParamStore::new(dtype, seed), config, vocab, latent_width)
    }

    pub fn from_store(mut store: ParamStore, config: &GeneratorConfig, vocab: Vocab, latent_width: usize) -> Result<Self> {
        config.validate()?;
        let c = config;
        let v = vocab.len();
        let latent_width = if c.conditioning.needs_latent() { latent_width } else { 0 };
        if c.conditioning.needs_latent() && latent_width == 0 {
            return Err(Error::Config(format!("conditioning {} needs a latent width", c.conditioning)));
        }
        let emb = Embedding::new(&mut store, "emb", v, c.embed)?;
        let utt = Lstm::new(&mut store, "utt", c.embed + c.external_width(), c.utt_hidden)?;
        let dlg = Gru::new(&mut store, "dlg", c.utt_hidden, c.dlg_hidden)?;
        let cond = if c.conditioning.needs_latent() {
            Some(Linear::new(&mut store, "cond", c.dlg_hidden + latent_width, c.dec_hidden, true)?)
        } else {
            None
        };
        let dec = Gru::new(&mut store, "dec", c.embed, c.dec_hidden)?;
        let attn = Linear::new(&mut store, "attn", c.dec_hidden, c.utt_hidden, false)?;
        let sentinel = store.get_or_init("sentinel", &[c.utt_hidden, 1], Init::FanIn)?;
        let out = Linear::new(&mut store, "out", c.dec_hidden + c.utt_hidden, v, true)?;
        Ok(GeneratorModel {
            store,
            config: config.clone(),
            vocab_hash: vocab.hash(),
            vocab,
            latent_width,
            emb,
            utt,
            dlg,
            cond,
            dec,
            attn,
            sentinel,
            out,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn latent_width(&self) -> usize {
        self.latent_width
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    pub fn conditioning_layer(&self) -> Option<&Linear> {
        self.cond.as_ref()
    }

    pub fn encode(&self, batch: &[&EncodedInstance]) -> Result<ContextEncoding> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        for inst in batch {
            if inst.vocab_hash != self.vocab_hash {
                return Err(Error::VocabMismatch {
                    expected: self.vocab_hash.clone(),
                    found: inst.vocab_hash.clone(),
                });
            }
        }
        let dtype = self.dtype();
        let c = &self.config;
        let segments: Vec<Vec<u32>> = batch.iter().flat_map(|i| i.segments.iter().cloned()).collect();
        let counts: Vec<usize> = batch.iter().map(|i| i.segments.len()).collect();
        let padded = pad_batch(&segments, dtype)?;
        let (s, t) = (segments.len(), padded.width);
        let mut x = self.emb.forward(&padded.ids)?;
        let xw = c.external_width();
        if xw > 0 {
            let mut data = vec![0f32; s * t * xw];
            let rows = batch.iter().flat_map(|i| i.segment_ext.iter());
            for (si, seg) in rows.enumerate() {
                for (ti, v) in seg.iter().enumerate() {
                    let off = (si * t + ti) * xw;
                    data[off..off + xw].copy_from_slice(&v[..xw]);
                }
            }
            x = Tensor::cat(&[&x, &tensor_f32(data, &[s, t, xw], dtype)?], 2)?;
        }
        let (outs, finals) = self.utt.run(&x, &padded.mask)?;

        let hu = c.utt_hidden;
        let flat = Tensor::cat(&[&outs.reshape((s * t, hu))?, &Tensor::zeros((1, hu), dtype, &Device::Cpu)?], 0)?;
        let width = batch.iter().map(|i| i.memory_ids.len()).max().unwrap_or(0).max(1);
        let mut idx = Vec::with_capacity(batch.len() * width);
        let mut mask = Vec::with_capacity(batch.len() * width);
        let mut seg_base = 0;
        for inst in batch {
            let mut n = 0;
            for (k, seg) in inst.segments.iter().enumerate() {
                for p in 0..seg.len() {
                    idx.push(((seg_base + k) * t + p) as u32);
                    mask.push(1f32);
                    n += 1;
                }
            }
            for _ in n..width {
                idx.push((s * t) as u32);
                mask.push(0.0);
            }
            seg_base += inst.segments.len();
        }
        let idx = Tensor::from_vec(idx, batch.len() * width, &Device::Cpu)?;
        let memory = flat.index_select(&idx, 0)?.reshape((batch.len(), width, hu))?;
        let mask = tensor_f32(mask, &[batch.len(), width], dtype)?;

        let (rows, seg_mask) = group_segments(&finals, &counts)?;
        let h0 = Tensor::zeros((batch.len(), c.dlg_hidden), dtype, &Device::Cpu)?;
        let (_, summary) = self.dlg.run(&rows, &seg_mask, &h0)?;

        let latent = if c.conditioning.needs_latent() {
            let mut data = Vec::with_capacity(batch.len() * self.latent_width);
            for inst in batch {
                let f = inst.latent.features(c.conditioning)?;
                if f.len() != self.latent_width {
                    return Err(Error::Data(format!(
                        "latent features have width {}, model expects {}",
                        f.len(),
                        self.latent_width
                    )));
                }
                data.extend(f);
            }
            Some(crate::nn::tensor_f64(data, &[batch.len(), self.latent_width], dtype)?)
        } else {
            None
        };
        Ok(ContextEncoding {
            memory,
            mask,
            summary,
            latent,
            memory_ids: batch.iter().map(|i| i.memory_ids.clone()).collect(),
            memory_tokens: batch.iter().map(|i| i.memory_tokens.clone()).collect(),
            oov: batch.iter().map(|i| i.oov.clone()).collect(),
        })
    }

    /// Decoder initial state from the summary and optional latent features.
    pub fn condition(&self, summary: &Tensor, latent: Option<&Tensor>) -> Result<Tensor> {
        let mode = self.config.conditioning;
        let Some(cond) = &self.cond else {
            return Ok(summary.clone());
        };
        let z = latent.ok_or_else(|| Error::MissingCodes(mode.to_string()))?;
        let input = match mode {
            Conditioning::EncoderConcat => Tensor::cat(&[z, summary], 1)?,
            _ => Tensor::cat(&[summary, z], 1)?,
        };
        Ok(cond.forward(&input)?)
    }

    /// Vocabulary softmax `(B,T,V)`, pointer weights `(B,T,L)` already scaled
    /// by `1 - g`, gate `(B,T,1)`, and normalized attention `(B,T,L)`.
    fn step_outputs(&self, states: &Tensor, enc: &ContextEncoding) -> Result<(Tensor, Tensor, Tensor, Tensor)> {
        let q = self.attn.forward(states)?.tanh()?;
        let mem_t = enc.memory.transpose(1, 2)?.contiguous()?;
        let z = q.matmul(&mem_t)?;
        let neg = ((&enc.mask - 1.0)? * MASK_PENALTY)?.unsqueeze(1)?;
        let z = z.broadcast_add(&neg)?;
        let alpha = candle_nn::ops::softmax(&z, D::Minus1)?;
        let ctx = alpha.matmul(&enc.memory)?;
        let logits = self.out.forward(&Tensor::cat(&[states, &ctx], 2)?)?;
        let p_vocab = candle_nn::ops::softmax(&logits, D::Minus1)?;
        let (b, t, l) = z.dims3()?;
        if !self.config.copy {
            let gate = Tensor::ones((b, t, 1), z.dtype(), z.device())?;
            return Ok((p_vocab, alpha.zeros_like()?, gate, alpha));
        }
        let zs = q.broadcast_matmul(&self.sentinel)?;
        let joint = candle_nn::ops::softmax(&Tensor::cat(&[&z, &zs], 2)?, D::Minus1)?;
        Ok((p_vocab, joint.narrow(2, 0, l)?, joint.narrow(2, l, 1)?, alpha))
    }

    /// Teacher-forced mean token NLL under the copy mixture.
    pub fn loss(&self, batch: &[&EncodedInstance]) -> Result<Tensor> {
        let enc = self.encode(batch)?;
        let dtype = self.dtype();
        let h0 = self.condition(&enc.summary, enc.latent.as_ref())?;
        let inputs: Vec<Vec<u32>> = batch.iter().map(|i| i.decoder_input.clone()).collect();
        let padded = pad_batch(&inputs, dtype)?;
        let (states, _) = self.dec.run(&self.emb.forward(&padded.ids)?, &padded.mask, &h0)?;
        let (p_vocab, alpha_ptr, gate, _) = self.step_outputs(&states, &enc)?;
        let v = self.vocab.len() as u32;
        let (b, t) = (batch.len(), padded.width);
        let l = enc.memory.dim(1)?;
        let mut gold = vec![0u32; b * t];
        let mut in_vocab = vec![0f32; b * t];
        let mut copy_mask = vec![0f32; if self.config.copy { b * t * l } else { 0 }];
        for (bi, inst) in batch.iter().enumerate() {
            for (ti, &g) in inst.target.iter().enumerate() {
                let g = if !self.config.copy && g >= v { UNK_ID } else { g };
                if g < v {
                    gold[bi * t + ti] = g;
                    in_vocab[bi * t + ti] = 1.0;
                }
                if self.config.copy {
                    for (j, &m) in inst.memory_ids.iter().enumerate() {
                        if m == g {
                            copy_mask[(bi * t + ti) * l + j] = 1.0;
                        }
                    }
                }
            }
        }
        let gold = Tensor::from_vec(gold, (b, t), &Device::Cpu)?;
        let in_vocab = tensor_f32(in_vocab, &[b, t], dtype)?;
        let pv = p_vocab.gather(&gold.unsqueeze(2)?, 2)?.squeeze(2)?;
        let mut p = gate.squeeze(2)?.mul(&pv)?.mul(&in_vocab)?;
        if self.config.copy {
            let cm = tensor_f32(copy_mask, &[b, t, l], dtype)?;
            p = (p + alpha_ptr.mul(&cm)?.sum(2)?)?;
        }
        Ok(mean_token_nll(&p, &padded.mask)?)
    }

    fn extended_size(&self, enc: &ContextEncoding, b: usize) -> usize {
        self.vocab.len() + enc.oov[b].len()
    }

    /// Copy states for decoder states `(N, H_dec)` against one encoded instance.
    pub fn copy_states(&self, states: &Tensor, enc: &ContextEncoding) -> Result<Vec<CopyState>> {
        let (p_vocab, _, gate, alpha) = self.step_outputs(&states.unsqueeze(0)?, enc)?;
        let l = enc.memory_len(0);
        let pv = to_rows(&p_vocab.squeeze(0)?)?;
        let al = to_rows(&alpha.squeeze(0)?)?;
        let g = to_rows(&gate.squeeze(0)?)?;
        Ok(pv
            .iter()
            .zip(&al)
            .zip(&g)
            .map(|((p, a), g)| mix_copy(p, &a[..l], g[0], &enc.memory_ids[0], self.extended_size(enc, 0)))
            .collect())
    }

    /// Greedy decoding for a batch; copied tokens come back as their surface form.
    pub fn generate(&self, batch: &[&EncodedInstance], max_len: usize) -> Result<Vec<Vec<String>>> {
        let mut outs = vec![Vec::new(); batch.len()];
        if max_len == 0 || batch.is_empty() {
            return Ok(outs);
        }
        let enc = self.encode(batch)?;
        let mut h = self.condition(&enc.summary, enc.latent.as_ref())?;
        let v = self.vocab.len();
        let mut prev = vec![BOS_ID; batch.len()];
        let mut done = vec![false; batch.len()];
        for _ in 0..max_len {
            let x = self.emb.forward(&Tensor::from_vec(prev.clone(), prev.len(), &Device::Cpu)?)?;
            h = self.dec.step(&self.dec.project_inputs(&x)?, &h)?;
            let (p_vocab, alpha_ptr, gate, _) = self.step_outputs(&h.unsqueeze(1)?, &enc)?;
            let pv = to_rows(&p_vocab.squeeze(1)?)?;
            let ap = to_rows(&alpha_ptr.squeeze(1)?)?;
            let g = to_rows(&gate.squeeze(1)?)?;
            for b in 0..batch.len() {
                if done[b] {
                    continue;
                }
                let mut mix: Vec<f64> = pv[b].iter().map(|p| p * g[b][0]).collect();
                mix.resize(self.extended_size(&enc, b), 0.0);
                for (j, &m) in enc.memory_ids[b].iter().enumerate() {
                    mix[m as usize] += ap[b][j];
                }
                let mut best = 0;
                for (i, &p) in mix.iter().enumerate() {
                    if p > mix[best] {
                        best = i;
                    }
                }
                if best as u32 == EOS_ID {
                    done[b] = true;
                    continue;
                }
                if best < v {
                    outs[b].push(self.vocab.token(best as u32).to_string());
                    prev[b] = best as u32;
                } else {
                    outs[b].push(enc.oov[b][best - v].clone());
                    prev[b] = UNK_ID;
                }
            }
            if done.iter().all(|&d| d) {
                break;
            }
        }
        Ok(outs)
    }
}

pub fn encode_context(model: &GeneratorModel, instance: &EncodedInstance) -> Result<ContextEncoding> {
    model.encode(&[instance])
}

/// Copy state for a single decoder state `(H_dec)` or `(1, H_dec)`.
pub fn copy_distribution(model: &GeneratorModel, state: &Tensor, encoding: &ContextEncoding) -> Result<CopyState> {
    let s = if state.rank() == 1 { state.unsqueeze(0)? } else { state.clone() };
    Ok(model.copy_states(&s, encoding)?.remove(0))
}

pub fn condition_latent(model: &GeneratorModel, summary: &Tensor, latent: Option<&Tensor>) -> Result<Tensor> {
    model.condition(summary, latent)
}

pub fn hred_step_loss(model: &GeneratorModel, batch: &[EncodedInstance]) -> Result<Tensor> {
    let refs: Vec<&EncodedInstance> = batch.iter().collect();
    model.loss(&refs)
}

pub fn generate_response(model: &GeneratorModel, instance: &EncodedInstance, max_len: usize) -> Result<Vec<String>> {
    Ok(model.generate(&[instance], max_len)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, Speaker, TrainingInstance, KB_CLOSE, KB_OPEN};
    use crate::generator::{encode_instance, ExternalEncoder, LatentInput};
    use crate::latent::LatentCode;

    fn vocab() -> Vocab {
        let words = ["what", "is", "the", "weather", "sunny", "it", "will", "be", "poi", "address"];
        Vocab::from_tokens(words.iter().map(|w| w.to_string()).collect::<Vec<_>>())
    }

    fn config(mode: Conditioning) -> GeneratorConfig {
        GeneratorConfig {
            embed: 6,
            utt_hidden: 5,
            dlg_hidden: 7,
            dec_hidden: if mode == Conditioning::None { 7 } else { 4 },
            conditioning: mode,
            max_decode_len: 10,
            ..GeneratorConfig::default()
        }
    }

    fn instance(v: &Vocab, latent: LatentInput) -> EncodedInstance {
        let t = TrainingInstance {
            dialogue_id: "d".into(),
            domain: "weather".into(),
            context: vec![(Speaker::User, tokenize("hi")), (Speaker::System, tokenize("hello"))],
            user: tokenize("what is the weather"),
            response: tokenize("it will be zorbix"),
            kb: [KB_OPEN, "poi", "zorbix", KB_CLOSE].iter().map(|s| s.to_string()).collect(),
            entities: vec!["zorbix".into()],
        };
        encode_instance(v, &t, latent, &ExternalEncoder::None).unwrap()
    }

    #[test]
    fn none_mode_is_identity() {
        let m = GeneratorModel::new(&config(Conditioning::None), vocab(), 0, DType::F64, 1).unwrap();
        let s = Tensor::from_vec(vec![0.1, -2.0, 3.5, 0.0, 1.0, 2.0, 3.0], (1, 7), &Device::Cpu).unwrap();
        let out = condition_latent(&m, &s, None).unwrap();
        assert_eq!(out.to_vec2::<f64>().unwrap(), s.to_vec2::<f64>().unwrap());
    }

    #[test]
    fn code_concat_width_and_ablation() {
        let (mm, k) = (10, 5);
        let m = GeneratorModel::new(&config(Conditioning::CodeConcat), vocab(), 2 * mm * k, DType::F64, 1).unwrap();
        let w = m.conditioning_layer().unwrap().weight();
        assert_eq!(w.dims(), &[7 + 100, 4]);
        // Zero the code rows: the output no longer depends on the codes.
        let summary_rows = w.narrow(0, 0, 7).unwrap();
        let zeroed = Tensor::cat(&[&summary_rows, &Tensor::zeros((100, 4), DType::F64, &Device::Cpu).unwrap()], 0).unwrap();
        for (name, var) in m.store().named_vars() {
            if name == "cond.w" {
                var.set(&zeroed).unwrap();
            }
        }
        let s = Tensor::ones((1, 7), DType::F64, &Device::Cpu).unwrap();
        let z1 = Tensor::ones((1, 100), DType::F64, &Device::Cpu).unwrap();
        let z2 = Tensor::zeros((1, 100), DType::F64, &Device::Cpu).unwrap();
        let a = condition_latent(&m, &s, Some(&z1)).unwrap().to_vec2::<f64>().unwrap();
        let b = condition_latent(&m, &s, Some(&z2)).unwrap().to_vec2::<f64>().unwrap();
        assert_eq!(a, b);
        assert!(matches!(condition_latent(&m, &s, None), Err(Error::MissingCodes(_))));
    }

    #[test]
    fn mixture_normalizes_and_pointer_stays_in_context() {
        let v = vocab();
        let m = GeneratorModel::new(&config(Conditioning::None), v.clone(), 0, DType::F64, 2).unwrap();
        let inst = instance(&v, LatentInput::None);
        let enc = encode_context(&m, &inst).unwrap();
        assert_eq!(enc.memory_len(0), inst.memory_ids.len());
        let states = Tensor::randn(0.0, 1.0, (20, 7), &Device::Cpu).unwrap();
        for s in m.copy_states(&states, &enc).unwrap() {
            assert!((s.mixture.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!((s.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!((0.0..=1.0).contains(&s.gate));
            for (w, &p) in s.p_ptr.iter().enumerate() {
                if !inst.memory_ids.contains(&(w as u32)) {
                    assert_eq!(p, 0.0);
                }
            }
        }
    }

    #[test]
    fn loss_finite_and_generation_bounded() {
        let v = vocab();
        let code = LatentCode::new(vec![1, 2], 3).unwrap();
        let latent = LatentInput::Codes { usr: code.clone(), sys: code, k: 3 };
        let m = GeneratorModel::new(&config(Conditioning::CodeConcat), v.clone(), 12, DType::F32, 3).unwrap();
        let batch = vec![instance(&v, latent.clone()), instance(&v, latent)];
        let l = hred_step_loss(&m, &batch).unwrap().to_scalar::<f32>().unwrap();
        assert!(l.is_finite() && l > 0.0);
        assert!(generate_response(&m, &batch[0], 0).unwrap().is_empty());
        for n in [1, 3, 10] {
            assert!(generate_response(&m, &batch[0], n).unwrap().len() <= n);
        }
        let a = generate_response(&m, &batch[0], 10).unwrap();
        assert_eq!(a, generate_response(&m, &batch[0], 10).unwrap());
    }

    #[test]
    fn padding_does_not_change_outputs() {
        let v = vocab();
        let m = GeneratorModel::new(&config(Conditioning::None), v.clone(), 0, DType::F64, 4).unwrap();
        let short = instance(&v, LatentInput::None);
        let mut long = short.clone();
        long.segments.push(vec![5, 6, 7, 8, 9, 5, 6]);
        long.memory_ids.extend([5, 6, 7, 8, 9, 5, 6]);
        long.memory_tokens.extend(std::iter::repeat_n("x".to_string(), 7));
        let alone = m.loss(&[&short]).unwrap().to_scalar::<f64>().unwrap();
        let both = m.loss(&[&short, &short]).unwrap().to_scalar::<f64>().unwrap();
        assert!((alone - both).abs() < 1e-12);
        let a = m.generate(&[&short], 6).unwrap();
        let b = m.generate(&[&short, &long], 6).unwrap();
        assert_eq!(a[0], b[0]);
        let padded = m.encode(&[&short, &long]).unwrap();
        let single = m.encode(&[&short]).unwrap();
        let l = short.memory_ids.len();
        let x = padded.memory.narrow(0, 0, 1).unwrap().narrow(1, 0, l).unwrap();
        let diff = (x - &single.memory).unwrap().abs().unwrap().max_all().unwrap().to_scalar::<f64>().unwrap();
        assert!(diff < 1e-12);
    }

    #[test]
    fn errors() {
        let v = vocab();
        let m = GeneratorModel::new(&config(Conditioning::CodeConcat), v.clone(), 12, DType::F32, 3).unwrap();
        assert!(matches!(hred_step_loss(&m, &[]), Err(Error::EmptyBatch)));
        assert!(matches!(hred_step_loss(&m, &[instance(&v, LatentInput::None)]), Err(Error::MissingCodes(_))));
        let mut other = instance(&v, LatentInput::None);
        other.vocab_hash = "feedface".into();
        let plain = GeneratorModel::new(&config(Conditioning::None), v, 0, DType::F32, 3).unwrap();
        assert!(matches!(encode_context(&plain, &other), Err(Error::VocabMismatch { .. })));
    }
}
