use candle_core::{DType, Device, Tensor, D};
use rand::Rng;

use super::model::sample_code;
use super::{LatentCode, LatentConfig, LatentModel, LatentVariant, LossBreakdown, LossOutput};
use crate::nn::{group_segments, pad_batch, scalar, Gru, Linear, ParamStore, SeqDecoder};
use crate::seed;
use crate::{Error, Result};

/// A dialogue context (speaker-prefixed segments) and the system reply that follows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LaedExample {
    pub context: Vec<Vec<u32>>,
    pub response: Vec<u32>,
}

/// DI-VST plus a hierarchical context encoder, a policy over system codes and a
/// response decoder conditioned on context and code.
pub struct LaedModel {
    vst: LatentModel,
    store: ParamStore,
    utt: Gru,
    dlg: Gru,
    policy: Linear,
    resp_init: Linear,
    resp: SeqDecoder,
}

impl std::fmt::Debug for LaedModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LaedModel").field("vst", &self.vst).finish()
    }
}

impl LaedModel {
    pub fn new(config: &LatentConfig, vocab_size: usize, dtype: DType, seed: u64) -> Result<Self> {
        let vst = LatentModel::new(LatentVariant::DiVst, config, vocab_size, dtype, seed)?;
        Self::from_parts(vst, ParamStore::new(dtype, seed::derive(seed, "policy")))
    }

    /// Attaches the policy side held in `store` (fresh or loaded) to a DI-VST model.
    pub fn from_parts(vst: LatentModel, mut store: ParamStore) -> Result<Self> {
        if vst.variant() != LatentVariant::DiVst {
            return Err(Error::Config("LAED needs a DI-VST component".into()));
        }
        let c = vst.config().clone();
        let v = vst.vocab_size();
        let utt = Gru::new(&mut store, "ctx_utt", c.embed, c.hidden)?;
        let dlg = Gru::new(&mut store, "ctx_dlg", c.hidden, c.hidden)?;
        let policy = Linear::new(&mut store, "policy", c.hidden, c.m * c.k, true)?;
        let resp_init = Linear::new(&mut store, "resp_init", c.hidden + c.m * c.k, c.hidden, true)?;
        let resp = SeqDecoder::new(&mut store, "resp", c.embed, c.hidden, v)?;
        Ok(LaedModel {
            vst,
            store,
            utt,
            dlg,
            policy,
            resp_init,
            resp,
        })
    }

    pub fn vst(&self) -> &LatentModel {
        &self.vst
    }

    pub fn policy_store(&self) -> &ParamStore {
        &self.store
    }

    pub fn config(&self) -> &LatentConfig {
        self.vst.config()
    }

    pub fn vars(&self) -> Vec<candle_core::Var> {
        let mut v = self.vst.store().vars();
        v.extend(self.store.vars());
        v
    }

    /// Dialogue-level summary `(B, H)` of each context.
    pub fn encode_context(&self, contexts: &[Vec<Vec<u32>>]) -> Result<Tensor> {
        let dtype = self.vst.dtype();
        let hidden = self.config().hidden;
        let mut segments = Vec::new();
        let mut counts = Vec::with_capacity(contexts.len());
        for c in contexts {
            if c.is_empty() {
                segments.push(Vec::new());
                counts.push(1);
            } else {
                segments.extend(c.iter().cloned());
                counts.push(c.len());
            }
        }
        let batch = pad_batch(&segments, dtype)?;
        let h0 = Tensor::zeros((segments.len(), hidden), dtype, &Device::Cpu)?;
        let (_, finals) = self.utt.run(&self.vst.emb.forward(&batch.ids)?, &batch.mask, &h0)?;
        let (rows, mask) = group_segments(&finals, &counts)?;
        let h0 = Tensor::zeros((contexts.len(), hidden), dtype, &Device::Cpu)?;
        let (_, summary) = self.dlg.run(&rows, &mask, &h0)?;
        Ok(summary)
    }

    /// Policy logits `(B, M, K)` over system codes.
    pub fn policy_logits(&self, contexts: &[Vec<Vec<u32>>]) -> Result<Tensor> {
        let c = self.config();
        let s = self.encode_context(contexts)?;
        Ok(self.policy.forward(&s)?.reshape((contexts.len(), c.m, c.k))?)
    }

    /// Flattened policy probabilities `(B, M*K)`.
    pub fn policy_probs(&self, contexts: &[Vec<Vec<u32>>]) -> Result<Tensor> {
        Ok(candle_nn::ops::softmax(&self.policy_logits(contexts)?, D::Minus1)?.flatten_from(1)?)
    }

    /// Argmax of the policy: the predicted system code for each context.
    pub fn policy_codes(&self, contexts: &[Vec<Vec<u32>>]) -> Result<Vec<LatentCode>> {
        if contexts.is_empty() {
            return Ok(Vec::new());
        }
        let k = self.config().k;
        self.policy_logits(contexts)?
            .argmax(D::Minus1)?
            .to_vec2::<u32>()?
            .into_iter()
            .map(|row| LatentCode::new(row.into_iter().map(|v| v as usize).collect(), k))
            .collect()
    }
}

/// Cross-entropy of policy logits `(B, M, K)` against target classes `(B, M)`,
/// summed over variables and averaged over the batch.
pub fn policy_nll(logits: &Tensor, targets: &Tensor) -> candle_core::Result<Tensor> {
    let logp = candle_nn::ops::log_softmax(logits, D::Minus1)?;
    let picked = logp.gather(&targets.unsqueeze(2)?, 2)?.squeeze(2)?;
    picked.sum(1)?.mean(0)?.neg()
}

/// LAED objective: policy cross-entropy against the recognition sample on the
/// reply, plus per-token NLL of the reply given context and code.
pub fn laed_loss<R: Rng + ?Sized>(model: &LaedModel, batch: &[LaedExample], tau: f64, rng: &mut R) -> Result<LossOutput> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let responses: Vec<Vec<u32>> = batch.iter().map(|e| e.response.clone()).collect();
    let contexts: Vec<Vec<Vec<u32>>> = batch.iter().map(|e| e.context.clone()).collect();
    let c = model.config();
    let (z, _, _) = sample_code(&model.vst, &responses, tau, rng)?;
    let target = z.detach().reshape((batch.len(), c.m, c.k))?.argmax(D::Minus1)?;
    let summary = model.encode_context(&contexts)?;
    let logits = model.policy.forward(&summary)?.reshape((batch.len(), c.m, c.k))?;
    let pol = policy_nll(&logits, &target)?;
    let h0 = model.resp_init.forward(&Tensor::cat(&[&summary, &z], 1)?)?.tanh()?;
    let (nll, counts) = model.resp.nll(&model.vst.emb, &h0, &responses)?;
    let n: usize = counts.iter().sum();
    let recon = (nll.sum_all()? / n.max(1) as f64)?;
    let total = (&pol + &recon)?;
    Ok(LossOutput {
        breakdown: LossBreakdown {
            total: scalar(&total)?,
            reconstruction_nll: scalar(&recon)?,
            kl: 0.0,
            policy_nll: scalar(&pol)?,
        },
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> LaedModel {
        let cfg = LatentConfig {
            m: 2,
            k: 3,
            embed: 4,
            hidden: 6,
            ..LatentConfig::default()
        };
        LaedModel::new(&cfg, 14, DType::F64, 9).unwrap()
    }

    #[test]
    fn uniform_policy_costs_m_ln_k() {
        let logits = Tensor::zeros((3, 10, 5), DType::F64, &Device::Cpu).unwrap();
        let targets = Tensor::from_vec(vec![1u32; 30], (3, 10), &Device::Cpu).unwrap();
        let v = policy_nll(&logits, &targets).unwrap().to_scalar::<f64>().unwrap();
        assert!((v - 10.0 * 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn exact_policy_costs_nothing() {
        let mut data = vec![-100.0; 2 * 3];
        data[2] = 100.0;
        data[3] = 100.0;
        let logits = Tensor::from_vec(data, (1, 2, 3), &Device::Cpu).unwrap();
        let targets = Tensor::from_vec(vec![2u32, 0], (1, 2), &Device::Cpu).unwrap();
        let v = policy_nll(&logits, &targets).unwrap().to_scalar::<f64>().unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn loss_is_finite_with_empty_context() {
        let m = tiny();
        let batch = vec![
            LaedExample {
                context: vec![],
                response: vec![8, 9],
            },
            LaedExample {
                context: vec![vec![4, 10], vec![5, 11, 12]],
                response: vec![13],
            },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l = laed_loss(&m, &batch, 1.0, &mut rng).unwrap().breakdown;
        assert!(l.total.is_finite());
        assert!((l.total - l.policy_nll - l.reconstruction_nll).abs() < 1e-9);
        let codes = m.policy_codes(&[batch[1].context.clone()]).unwrap();
        assert_eq!(codes[0].len(), 2);
    }
}
