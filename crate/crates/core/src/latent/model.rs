use candle_core::{DType, Device, Tensor, D};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{bpr_kl_tensor, gumbel_softmax_sample, vae_kl, LatentCode, LatentConfig, LossBreakdown, LossOutput};
use crate::nn::{pad_batch, scalar, Embedding, Gru, Linear, ParamStore, SeqDecoder};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LatentVariant {
    DiVae,
    DiVst,
    Vae,
}

impl LatentVariant {
    pub fn tag(self) -> &'static str {
        match self {
            LatentVariant::DiVae => "di-vae",
            LatentVariant::DiVst => "di-vst",
            LatentVariant::Vae => "vae",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "di-vae" => Ok(LatentVariant::DiVae),
            "di-vst" => Ok(LatentVariant::DiVst),
            "vae" => Ok(LatentVariant::Vae),
            _ => Err(Error::Data(format!("unknown latent variant `{tag}`"))),
        }
    }
}

#[derive(Clone, Debug)]
enum Head {
    Discrete(Linear),
    Gaussian { mu: Linear, logvar: Linear },
}

/// Recognition encoder, code head and one or two generators.
pub struct LatentModel {
    store: ParamStore,
    variant: LatentVariant,
    config: LatentConfig,
    vocab_size: usize,
    pub(crate) emb: Embedding,
    encoder: Gru,
    head: Head,
    z_proj: Linear,
    /// `[self]` for DI-VAE and VAE, `[prev, next]` for DI-VST.
    decoders: Vec<SeqDecoder>,
}

impl std::fmt::Debug for LatentModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LatentModel")
            .field("variant", &self.variant)
            .field("config", &self.config)
            .field("vocab_size", &self.vocab_size)
            .finish()
    }
}

impl LatentModel {
    pub fn new(variant: LatentVariant, config: &LatentConfig, vocab_size: usize, dtype: DType, seed: u64) -> Result<Self> {
        Self::from_store(ParamStore::new(dtype, seed), variant, config, vocab_size)
    }

    /// Builds the model on `store`, reusing any parameters it already holds.
    pub fn from_store(mut store: ParamStore, variant: LatentVariant, config: &LatentConfig, vocab_size: usize) -> Result<Self> {
        config.validate()?;
        let c = config;
        let emb = Embedding::new(&mut store, "emb", vocab_size, c.embed)?;
        let encoder = Gru::new(&mut store, "enc", c.embed, c.hidden)?;
        let (head, z_width) = match variant {
            LatentVariant::Vae => (
                Head::Gaussian {
                    mu: Linear::new(&mut store, "mu", c.hidden, c.vae_dim, true)?,
                    logvar: Linear::new(&mut store, "logvar", c.hidden, c.vae_dim, true)?,
                },
                c.vae_dim,
            ),
            _ => (Head::Discrete(Linear::new(&mut store, "code", c.hidden, c.m * c.k, true)?), c.m * c.k),
        };
        let z_proj = Linear::new(&mut store, "z_proj", z_width, c.hidden, true)?;
        let names: &[&str] = match variant {
            LatentVariant::DiVst => &["dec_prev", "dec_next"],
            _ => &["dec"],
        };
        let decoders = names
            .iter()
            .map(|n| SeqDecoder::new(&mut store, n, c.embed, c.hidden, vocab_size))
            .collect::<Result<Vec<_>>>()?;
        Ok(LatentModel {
            store,
            variant,
            config: config.clone(),
            vocab_size,
            emb,
            encoder,
            head,
            z_proj,
            decoders,
        })
    }

    pub fn variant(&self) -> LatentVariant {
        self.variant
    }

    pub fn config(&self) -> &LatentConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    fn encode(&self, utts: &[Vec<u32>]) -> Result<Tensor> {
        let batch = pad_batch(utts, self.dtype())?;
        let h0 = Tensor::zeros((utts.len(), self.config.hidden), self.dtype(), &Device::Cpu)?;
        let (_, h) = self.encoder.run(&self.emb.forward(&batch.ids)?, &batch.mask, &h0)?;
        Ok(h)
    }

    /// Posterior logits `(B, M, K)` of the recognition network.
    pub fn posterior_logits(&self, utts: &[Vec<u32>]) -> Result<Tensor> {
        let Head::Discrete(head) = &self.head else {
            return Err(Error::Config("the VAE baseline has no discrete codes".into()));
        };
        let h = self.encode(utts)?;
        Ok(head.forward(&h)?.reshape((utts.len(), self.config.m, self.config.k))?)
    }

    /// Flattened posterior probabilities `(B, M*K)`.
    pub fn posterior_probs(&self, utts: &[Vec<u32>]) -> Result<Tensor> {
        let logits = self.posterior_logits(utts)?;
        Ok(candle_nn::ops::softmax(&logits, D::Minus1)?.flatten_from(1)?)
    }

    /// Gaussian posterior `(mu, logvar)` of the VAE baseline.
    pub fn gaussian(&self, utts: &[Vec<u32>]) -> Result<(Tensor, Tensor)> {
        let Head::Gaussian { mu, logvar } = &self.head else {
            return Err(Error::Config("discrete latent models have no Gaussian posterior".into()));
        };
        let h = self.encode(utts)?;
        Ok((mu.forward(&h)?, logvar.forward(&h)?))
    }

    /// Argmax codes, one per utterance.
    pub fn codes(&self, utts: &[Vec<u32>]) -> Result<Vec<LatentCode>> {
        if utts.is_empty() {
            return Ok(Vec::new());
        }
        let idx = self.posterior_logits(utts)?.argmax(D::Minus1)?.to_vec2::<u32>()?;
        idx.into_iter()
            .map(|row| LatentCode::new(row.into_iter().map(|v| v as usize).collect(), self.config.k))
            .collect()
    }

    fn decoder_state(&self, z: &Tensor) -> Result<Tensor> {
        Ok(self.z_proj.forward(z)?.tanh()?)
    }

    fn decoder(&self, i: usize) -> &SeqDecoder {
        &self.decoders[i]
    }
}

/// Argmax code of a single utterance; no sampling.
pub fn encode_codes(model: &LatentModel, utterance: &[u32]) -> Result<LatentCode> {
    Ok(model.codes(&[utterance.to_vec()])?.remove(0))
}

fn per_token(nll: &Tensor, counts: &[usize]) -> Result<Tensor> {
    let n: usize = counts.iter().sum();
    Ok((nll.sum_all()? / n.max(1) as f64)?)
}

fn require(model: &LatentModel, v: LatentVariant) -> Result<()> {
    if model.variant != v {
        return Err(Error::Config(format!(
            "loss for {} called on a {} model",
            v.tag(),
            model.variant.tag()
        )));
    }
    Ok(())
}

fn finish(recon: Tensor, kl: Tensor) -> Result<LossOutput> {
    let total = (&recon + &kl)?;
    let reconstruction_nll = scalar(&recon)?;
    let kl_v = scalar(&kl)?;
    Ok(LossOutput {
        breakdown: LossBreakdown {
            total: scalar(&total)?,
            reconstruction_nll,
            kl: kl_v,
            policy_nll: 0.0,
        },
        total,
    })
}

/// Samples a code per utterance and returns it with the BPR term.
pub(crate) fn sample_code<R: Rng + ?Sized>(
    model: &LatentModel,
    utts: &[Vec<u32>],
    tau: f64,
    rng: &mut R,
) -> Result<(Tensor, Tensor, Tensor)> {
    let logits = model.posterior_logits(utts)?;
    let kl = bpr_kl_tensor(&candle_nn::ops::softmax(&logits, D::Minus1)?)?;
    let y = gumbel_softmax_sample(&logits, tau, model.config.hard, rng)?;
    Ok((y.flatten_from(1)?, kl, logits))
}

/// DI-VAE objective: per-token reconstruction NLL of `x` from a sampled code plus BPR.
pub fn di_vae_loss<R: Rng + ?Sized>(model: &LatentModel, batch: &[Vec<u32>], tau: f64, rng: &mut R) -> Result<LossOutput> {
    require(model, LatentVariant::DiVae)?;
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let (z, kl, _) = sample_code(model, batch, tau, rng)?;
    let (nll, counts) = model.decoder(0).nll(&model.emb, &model.decoder_state(&z)?, batch)?;
    finish(per_token(&nll, &counts)?, kl)
}

/// DI-VST objective over `(prev, x, next)`; an empty neighbour is the null utterance.
pub fn di_vst_loss<R: Rng + ?Sized>(
    model: &LatentModel,
    batch: &[(Vec<u32>, Vec<u32>, Vec<u32>)],
    tau: f64,
    rng: &mut R,
) -> Result<LossOutput> {
    require(model, LatentVariant::DiVst)?;
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let xs: Vec<Vec<u32>> = batch.iter().map(|t| t.1.clone()).collect();
    let prev: Vec<Vec<u32>> = batch.iter().map(|t| t.0.clone()).collect();
    let next: Vec<Vec<u32>> = batch.iter().map(|t| t.2.clone()).collect();
    let (z, kl, _) = sample_code(model, &xs, tau, rng)?;
    let h0 = model.decoder_state(&z)?;
    let (np, cp) = model.decoder(0).nll(&model.emb, &h0, &prev)?;
    let (nn, cn) = model.decoder(1).nll(&model.emb, &h0, &next)?;
    finish((per_token(&np, &cp)? + per_token(&nn, &cn)?)?, kl)
}

/// Gaussian VAE baseline with a reparameterized sample and analytic KL.
pub fn vae_loss<R: Rng + ?Sized>(model: &LatentModel, batch: &[Vec<u32>], rng: &mut R) -> Result<LossOutput> {
    require(model, LatentVariant::Vae)?;
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let (mu, logvar) = model.gaussian(batch)?;
    let eps: Vec<f64> = (0..mu.elem_count()).map(|_| rng.sample(StandardNormal)).collect();
    let eps = crate::nn::tensor_f64(eps, mu.dims(), mu.dtype())?;
    let z = (&mu + (logvar.clone() * 0.5)?.exp()?.mul(&eps)?)?;
    let kl = vae_kl(&mu, &logvar)?;
    let (nll, counts) = model.decoder(0).nll(&model.emb, &model.decoder_state(&z)?, batch)?;
    finish(per_token(&nll, &counts)?, kl)
}
