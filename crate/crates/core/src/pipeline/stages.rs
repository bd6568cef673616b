use std::path::Path;

use candle_core::DType;
use rand::seq::SliceRandom;

use super::{save_laed, save_latent, ExperimentConfig, Stage1Paths, Variant};
use crate::corpus::{build_vocab, corpus_instances, exclusion_list, Corpus, TrainingInstance, Vocab};
use crate::generator::{encode_instance, EncodedInstance, ExternalEncoder, GeneratorModel, Stage1};
use crate::latent::{
    cluster_by_code, train_laed, train_latent, LaedModel, LatentModel, LatentVariant, Stage1Data, TrainLog,
};
use crate::metrics::{evaluate_pairs, EvalPair, EvalSummary};
use crate::nn::{scalar, Trainer};
use crate::seed;
use crate::{Error, Result};

/// Trained stage-1 models, their logs and (when saved) their directories.
#[derive(Debug)]
pub struct Stage1Outcome {
    pub stage1: Stage1,
    pub paths: Stage1Paths,
    pub di_vae_log: TrainLog,
    pub laed_log: TrainLog,
    pub vae_log: Option<TrainLog>,
    pub exclusion: Vec<String>,
}

/// `code count` lines, largest bucket first.
pub fn code_inventory(corpus: &Corpus, vocab: &Vocab, model: &LatentModel) -> Result<String> {
    Ok(cluster_by_code(corpus, vocab, model)?
        .iter()
        .map(|(code, utts)| format!("{code} {}\n", utts.len()))
        .collect())
}

fn fmt_loss(v: Option<f64>) -> String {
    v.map_or_else(|| "none".into(), |x| format!("{x:.6}"))
}

/// Trains DI-VAE and LAED (plus the VAE baseline when a configured variant
/// needs it) on a transfer corpus that has already had overlapping domains
/// removed. With `out`, checkpoints go to `out/di-vae`, `out/laed`, `out/vae`.
pub fn train_stage1(config: &ExperimentConfig, transfer: &Corpus, out: Option<&Path>) -> Result<Stage1Outcome> {
    config.latent.validate()?;
    if transfer.is_empty() {
        return Err(Error::Data("transfer corpus is empty after domain exclusion".into()));
    }
    let exclusion = exclusion_list(&config.target_domain, config.exclude.as_deref())?;
    let vocab = build_vocab(transfer, config.min_freq);
    let (train, heldout) = Stage1Data::split(transfer, &vocab, config.heldout_fraction, seed::derive(config.seed, "stage1-split"));
    if train.is_empty() {
        return Err(Error::Data("transfer corpus has no usable utterances".into()));
    }
    let opts = config.stage1_options();
    let dtype = DType::F32;
    let base = config.seed;
    let extra = |log: &TrainLog| -> Vec<(String, String)> {
        vec![
            ("target_domain".into(), config.target_domain.clone()),
            ("exclusion".into(), exclusion.join(",")),
            ("seed".into(), base.to_string()),
            ("epochs".into(), opts.epochs.to_string()),
            ("laed.joint".into(), opts.joint.to_string()),
            ("heldout_loss_start".into(), fmt_loss(log.heldout_start)),
            ("heldout_loss_end".into(), fmt_loss(log.heldout_end)),
        ]
    };

    log::info!("stage 1: {} utterances, vocab {}", train.utterances.len(), vocab.len());
    let di_vae = LatentModel::new(LatentVariant::DiVae, &config.latent, vocab.len(), dtype, seed::derive(base, "di-vae"))?;
    let di_vae_log = train_latent(&di_vae, &train, &heldout, &opts, seed::derive(base, "di-vae-train"))?;
    log::info!("DI-VAE held-out loss {} -> {}", fmt_loss(di_vae_log.heldout_start), fmt_loss(di_vae_log.heldout_end));

    let laed = LaedModel::new(&config.latent, vocab.len(), dtype, seed::derive(base, "laed"))?;
    let laed_log = train_laed(&laed, &train, &heldout, &opts, seed::derive(base, "laed-train"))?;
    log::info!("LAED held-out loss {} -> {}", fmt_loss(laed_log.heldout_start), fmt_loss(laed_log.heldout_end));

    let (vae, vae_log) = if config.needs_vae() {
        let vae = LatentModel::new(LatentVariant::Vae, &config.latent, vocab.len(), dtype, seed::derive(base, "vae"))?;
        let log = train_latent(&vae, &train, &heldout, &opts, seed::derive(base, "vae-train"))?;
        (Some(vae), Some(log))
    } else {
        (None, None)
    };

    let mut paths = Stage1Paths::default();
    if let Some(out) = out {
        let d = out.join("di-vae");
        save_latent(&d, &di_vae, &vocab, &extra(&di_vae_log), Some(&code_inventory(transfer, &vocab, &di_vae)?))?;
        paths.di_vae = Some(d);
        let d = out.join("laed");
        save_laed(&d, &laed, &vocab, &extra(&laed_log), Some(&code_inventory(transfer, &vocab, laed.vst())?))?;
        paths.laed = Some(d);
        if let (Some(vae), Some(log)) = (&vae, &vae_log) {
            let d = out.join("vae");
            save_latent(&d, vae, &vocab, &extra(log), None)?;
            paths.vae = Some(d);
        }
    }
    Ok(Stage1Outcome {
        stage1: Stage1 {
            vocab,
            di_vae: Some(di_vae),
            laed: Some(laed),
            vae,
        },
        paths,
        di_vae_log,
        laed_log,
        vae_log,
        exclusion,
    })
}

/// Maps instances through the generator vocabulary and attaches stage-1 inputs.
pub fn prepare_instances(
    model: &GeneratorModel,
    stage1: Option<&Stage1>,
    external: &ExternalEncoder,
    instances: &[TrainingInstance],
) -> Result<Vec<EncodedInstance>> {
    let mode = model.config().conditioning;
    let latent = match stage1 {
        Some(s) => s.latent_inputs(mode, instances)?,
        None if mode.needs_latent() => return Err(Error::MissingStage1(mode.to_string())),
        None => vec![crate::generator::LatentInput::None; instances.len()],
    };
    instances
        .iter()
        .zip(latent)
        .map(|(i, l)| encode_instance(model.vocab(), i, l, external))
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Stage2Log {
    pub train_loss: Vec<f64>,
    pub heldout_loss: Vec<f64>,
    /// Epoch (0-based) whose weights were kept.
    pub best_epoch: usize,
    pub steps: usize,
}

#[derive(Debug)]
pub struct Stage2Outcome {
    pub model: GeneratorModel,
    pub external: ExternalEncoder,
    pub log: Stage2Log,
}

fn split_dialogues(corpus: &Corpus, fraction: f64, seed: u64) -> (Corpus, Corpus) {
    let n = corpus.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed, "stage2-heldout"));
    let k = if n >= 2 {
        ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
    } else {
        0
    };
    let held: std::collections::BTreeSet<usize> = order[..k].iter().copied().collect();
    let part = |keep: bool| Corpus {
        name: corpus.name.clone(),
        dialogues: corpus
            .dialogues
            .iter()
            .enumerate()
            .filter(|(i, _)| held.contains(i) != keep)
            .map(|(_, d)| d.clone())
            .collect(),
    };
    (part(true), part(false))
}

fn mean_loss(model: &GeneratorModel, data: &[EncodedInstance]) -> Result<f64> {
    let mut sum = 0.0;
    for chunk in data.chunks(64) {
        let refs: Vec<&EncodedInstance> = chunk.iter().collect();
        sum += scalar(&model.loss(&refs)?)? * chunk.len() as f64;
    }
    Ok(sum / data.len().max(1) as f64)
}

/// Trains a generator on all source dialogues plus the target seed dialogues,
/// shuffled together. Stage-1 models stay frozen: only generator parameters
/// reach the optimizer. Early stopping watches a held-out slice of the source
/// dialogues and restores the best epoch.
pub fn train_stage2(
    config: &ExperimentConfig,
    variant: Variant,
    source: &Corpus,
    target_seed: &Corpus,
    stage1: Option<&Stage1>,
    seed: u64,
) -> Result<Stage2Outcome> {
    let gcfg = config.generator_config(variant);
    gcfg.validate()?;
    if gcfg.conditioning.needs_latent() && stage1.is_none() {
        return Err(Error::MissingStage1(variant.to_string()));
    }
    let (source_train, source_heldout) = split_dialogues(source, config.heldout_fraction, seed);
    let mut pool = source_train.clone();
    pool.dialogues.extend(target_seed.dialogues.iter().cloned());
    if pool.is_empty() {
        return Err(Error::Data("no stage-2 training dialogues".into()));
    }
    let vocab = build_vocab(&pool, config.min_freq);
    let latent_width = match stage1 {
        Some(s) => s.latent_width(gcfg.conditioning)?,
        None => 0,
    };
    let model = GeneratorModel::new(&gcfg, vocab, latent_width, DType::F32, seed::derive(seed, seed::INIT))?;
    let external = ExternalEncoder::from_config(&gcfg)?;
    let train = prepare_instances(&model, stage1, &external, &corpus_instances(&pool))?;
    let heldout = prepare_instances(&model, stage1, &external, &corpus_instances(&source_heldout))?;
    if train.is_empty() {
        return Err(Error::Data("stage-2 pool has no training instances".into()));
    }
    log::info!(
        "stage 2 {variant}: {} train / {} held-out instances, vocab {}",
        train.len(),
        heldout.len(),
        model.vocab().len()
    );
    let mut trainer = Trainer::new(model.store().vars(), &config.optimizer, config.lr, config.clip)?;
    let mut shuffle = seed::rng(seed, seed::SHUFFLE);
    let mut log = Stage2Log::default();
    let mut best: Option<(f64, std::collections::BTreeMap<String, candle_core::Tensor>)> = None;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..config.stage2_epochs {
        order.shuffle(&mut shuffle);
        let mut sum = 0.0;
        let mut n = 0;
        for chunk in order.chunks(config.stage2_batch) {
            let batch: Vec<&EncodedInstance> = chunk.iter().map(|&i| &train[i]).collect();
            sum += trainer.step(&model.loss(&batch)?)?;
            n += 1;
            log.steps += 1;
        }
        log.train_loss.push(sum / n.max(1) as f64);
        if heldout.is_empty() {
            continue;
        }
        let h = mean_loss(&model, &heldout)?;
        log.heldout_loss.push(h);
        log::debug!("epoch {epoch}: train {:.4} held-out {h:.4}", log.train_loss[epoch]);
        if best.as_ref().is_none_or(|(b, _)| h < *b) {
            best = Some((h, model.store().snapshot()?));
            log.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                log::debug!("early stop after epoch {epoch}");
                break;
            }
        }
    }
    match best {
        Some((_, snap)) => model.store().restore(&snap)?,
        None => log.best_epoch = log.train_loss.len().saturating_sub(1),
    }
    Ok(Stage2Outcome { model, external, log })
}

/// Greedy-decodes every instance of `corpus` and scores BLEU and Entity F1.
pub fn evaluate_generator(
    model: &GeneratorModel,
    stage1: Option<&Stage1>,
    external: &ExternalEncoder,
    corpus: &Corpus,
) -> Result<(EvalSummary, Vec<EvalPair>)> {
    let instances = corpus_instances(corpus);
    let encoded = prepare_instances(model, stage1, external, &instances)?;
    let mut pairs = Vec::with_capacity(encoded.len());
    for chunk in encoded.chunks(32) {
        let refs: Vec<&EncodedInstance> = chunk.iter().collect();
        for (inst, hyp) in chunk.iter().zip(model.generate(&refs, model.config().max_decode_len)?) {
            pairs.push(EvalPair::new(inst.reference.clone(), hyp, inst.entities.clone()));
        }
    }
    Ok((evaluate_pairs(&pairs)?, pairs))
}
