use rand::seq::SliceRandom;

use super::{di_vae_loss, di_vst_loss, laed_loss, vae_loss, LaedExample, LaedModel, LatentModel, LatentVariant, LossBreakdown};
use crate::corpus::{Corpus, Speaker, Vocab};
use crate::nn::{scalar, Trainer};
use crate::seed;
use crate::{Error, Result};

/// Utterances longer than this are truncated for stage-1 training.
pub const MAX_UTTERANCE_TOKENS: usize = 40;

/// `(previous, utterance, next)`; an empty neighbour stands for the null utterance.
pub type VstTriple = (Vec<u32>, Vec<u32>, Vec<u32>);

/// Id-encoded training material for every stage-1 model.
#[derive(Clone, Debug, Default)]
pub struct Stage1Data {
    pub utterances: Vec<Vec<u32>>,
    pub triples: Vec<VstTriple>,
    pub laed: Vec<LaedExample>,
}

fn ids(vocab: &Vocab, tokens: &[String]) -> Vec<u32> {
    let mut v = vocab.encode(tokens);
    v.truncate(MAX_UTTERANCE_TOKENS);
    v
}

/// Speaker-prefixed segment for context encoders.
pub(crate) fn segment(vocab: &Vocab, speaker: Speaker, tokens: &[String]) -> Vec<u32> {
    let mut v = vec![vocab.id(speaker.sentinel())];
    v.extend(ids(vocab, tokens));
    v
}

impl Stage1Data {
    pub fn from_corpus(corpus: &Corpus, vocab: &Vocab) -> Self {
        let mut data = Stage1Data::default();
        for d in &corpus.dialogues {
            let turns: Vec<Vec<u32>> = d.turns.iter().map(|t| ids(vocab, &t.tokens())).collect();
            for (i, t) in turns.iter().enumerate() {
                if t.is_empty() {
                    continue;
                }
                data.utterances.push(t.clone());
                let prev = if i > 0 { turns[i - 1].clone() } else { Vec::new() };
                let next = turns.get(i + 1).cloned().unwrap_or_default();
                data.triples.push((prev, t.clone(), next));
            }
            if let Ok(instances) = crate::corpus::to_training_instances(d) {
                for inst in instances {
                    let context = inst
                        .history()
                        .iter()
                        .map(|(s, toks)| segment(vocab, *s, toks))
                        .collect();
                    data.laed.push(LaedExample {
                        context,
                        response: ids(vocab, &inst.response),
                    });
                }
            }
        }
        data
    }

    /// Splits `corpus` at dialogue level into training and held-out data.
    /// At least one dialogue is held out whenever there are two or more.
    pub fn split(corpus: &Corpus, vocab: &Vocab, heldout_fraction: f64, seed: u64) -> (Self, Self) {
        let n = corpus.dialogues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seed::rng(seed, "heldout"));
        let k = if n >= 2 {
            ((n as f64 * heldout_fraction).round() as usize).clamp(1, n - 1)
        } else {
            0
        };
        let held: std::collections::BTreeSet<usize> = order[..k].iter().copied().collect();
        let pick = |keep: bool| Corpus {
            name: corpus.name.clone(),
            dialogues: corpus
                .dialogues
                .iter()
                .enumerate()
                .filter(|(i, _)| held.contains(i) != keep)
                .map(|(_, d)| d.clone())
                .collect(),
        };
        (Self::from_corpus(&pick(true), vocab), Self::from_corpus(&pick(false), vocab))
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: String,
    pub lr: f64,
    pub clip: f64,
    /// Train DI-VST and the policy together rather than one after the other.
    pub joint: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 5,
            batch_size: 32,
            optimizer: "adam".into(),
            lr: 1e-3,
            clip: 5.0,
            joint: true,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainLog {
    pub steps: Vec<LossBreakdown>,
    pub heldout_start: Option<f64>,
    pub heldout_end: Option<f64>,
}

fn batches(n: usize, size: usize, rng: &mut impl rand::Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(size.max(1)).map(|c| c.to_vec()).collect()
}

const EVAL_BATCH: usize = 64;

/// Mean held-out loss at the final temperature with a fixed noise stream.
pub fn evaluate_latent(model: &LatentModel, data: &Stage1Data, seed: u64) -> Result<Option<f64>> {
    let tau = model.config().tau_end;
    let mut rng = seed::rng(seed, "eval");
    let mut sum = 0.0;
    let mut n = 0usize;
    match model.variant() {
        LatentVariant::DiVst => {
            for chunk in data.triples.chunks(EVAL_BATCH) {
                sum += di_vst_loss(model, chunk, tau, &mut rng)?.breakdown.total * chunk.len() as f64;
                n += chunk.len();
            }
        }
        v => {
            for chunk in data.utterances.chunks(EVAL_BATCH) {
                let l = if v == LatentVariant::Vae {
                    vae_loss(model, chunk, &mut rng)?
                } else {
                    di_vae_loss(model, chunk, tau, &mut rng)?
                };
                sum += l.breakdown.total * chunk.len() as f64;
                n += chunk.len();
            }
        }
    }
    Ok((n > 0).then(|| sum / n as f64))
}

pub fn evaluate_laed(model: &LaedModel, data: &Stage1Data, seed: u64) -> Result<Option<f64>> {
    let Some(vst) = evaluate_latent(model.vst(), data, seed)? else {
        return Ok(None);
    };
    let tau = model.config().tau_end;
    let mut rng = seed::rng(seed, "eval-laed");
    let mut sum = 0.0;
    for chunk in data.laed.chunks(EVAL_BATCH) {
        sum += laed_loss(model, chunk, tau, &mut rng)?.breakdown.total * chunk.len() as f64;
    }
    Ok(Some(vst + sum / data.laed.len().max(1) as f64))
}

/// Trains a DI-VAE, DI-VST or VAE model in place.
pub fn train_latent(model: &LatentModel, train: &Stage1Data, heldout: &Stage1Data, opts: &TrainOptions, seed: u64) -> Result<TrainLog> {
    if train.is_empty() {
        return Err(Error::Data("no stage-1 training utterances".into()));
    }
    let mut log = TrainLog {
        heldout_start: evaluate_latent(model, heldout, seed)?,
        ..TrainLog::default()
    };
    let mut trainer = Trainer::new(model.store().vars(), &opts.optimizer, opts.lr, opts.clip)?;
    let n = match model.variant() {
        LatentVariant::DiVst => train.triples.len(),
        _ => train.utterances.len(),
    };
    let per_epoch = n.div_ceil(opts.batch_size.max(1));
    let total = per_epoch * opts.epochs;
    let mut shuffle = seed::rng(seed, seed::SHUFFLE);
    let mut noise = seed::rng(seed, seed::NOISE);
    let mut step = 0;
    for _ in 0..opts.epochs {
        for b in batches(n, opts.batch_size, &mut shuffle) {
            let tau = model.config().temperature(step, total);
            let out = match model.variant() {
                LatentVariant::DiVst => {
                    let batch: Vec<VstTriple> = b.iter().map(|&i| train.triples[i].clone()).collect();
                    di_vst_loss(model, &batch, tau, &mut noise)?
                }
                LatentVariant::DiVae => {
                    let batch: Vec<Vec<u32>> = b.iter().map(|&i| train.utterances[i].clone()).collect();
                    di_vae_loss(model, &batch, tau, &mut noise)?
                }
                LatentVariant::Vae => {
                    let batch: Vec<Vec<u32>> = b.iter().map(|&i| train.utterances[i].clone()).collect();
                    vae_loss(model, &batch, &mut noise)?
                }
            };
            trainer.step(&out.total)?;
            log.steps.push(out.breakdown);
            step += 1;
        }
        log::debug!(
            "{} epoch done, last loss {:.4}",
            model.variant().tag(),
            log.steps.last().map_or(f64::NAN, |l| l.total)
        );
    }
    log.heldout_end = evaluate_latent(model, heldout, seed)?;
    Ok(log)
}

/// Trains LAED. Joint mode optimizes DI-VST and LAED losses together each step;
/// otherwise DI-VST is trained first and then frozen while the policy side trains.
pub fn train_laed(model: &LaedModel, train: &Stage1Data, heldout: &Stage1Data, opts: &TrainOptions, seed: u64) -> Result<TrainLog> {
    if train.laed.is_empty() || train.triples.is_empty() {
        return Err(Error::Data("no stage-1 LAED training examples".into()));
    }
    let start = evaluate_laed(model, heldout, seed)?;
    let mut log = TrainLog::default();
    let vars = if opts.joint {
        model.vars()
    } else {
        let vst_log = train_latent(model.vst(), train, heldout, opts, seed)?;
        log.steps.extend(vst_log.steps);
        model.policy_store().vars()
    };
    let mut trainer = Trainer::new(vars, &opts.optimizer, opts.lr, opts.clip)?;
    let n = train.laed.len();
    let total = n.div_ceil(opts.batch_size.max(1)) * opts.epochs;
    let mut shuffle = seed::rng(seed, "laed-shuffle");
    let mut noise = seed::rng(seed, "laed-noise");
    let mut triple_order: Vec<usize> = Vec::new();
    let mut step = 0;
    for _ in 0..opts.epochs {
        for b in batches(n, opts.batch_size, &mut shuffle) {
            let tau = model.config().temperature(step, total);
            let batch: Vec<LaedExample> = b.iter().map(|&i| train.laed[i].clone()).collect();
            let mut out = laed_loss(model, &batch, tau, &mut noise)?;
            if opts.joint {
                let mut tb = Vec::with_capacity(b.len());
                for _ in 0..b.len() {
                    if triple_order.is_empty() {
                        triple_order = (0..train.triples.len()).collect();
                        triple_order.shuffle(&mut shuffle);
                    }
                    tb.push(train.triples[triple_order.pop().unwrap_or(0)].clone());
                }
                let vst = di_vst_loss(model.vst(), &tb, tau, &mut noise)?;
                out.total = (&out.total + &vst.total)?;
                out.breakdown.reconstruction_nll += vst.breakdown.reconstruction_nll;
                out.breakdown.kl += vst.breakdown.kl;
                out.breakdown.total = scalar(&out.total)?;
            }
            trainer.step(&out.total)?;
            log.steps.push(out.breakdown);
            step += 1;
        }
    }
    log.heldout_start = start;
    log.heldout_end = evaluate_laed(model, heldout, seed)?;
    Ok(log)
}
