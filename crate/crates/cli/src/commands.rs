use std::path::{Path, PathBuf};

use kbdialog::corpus::{exclude_overlap, load_corpus, sample_few_shot, save_normalized, CorpusFormat, FewShotSpec};
use kbdialog::latent::cluster_by_code;
use kbdialog::metrics::EvalSummary;
use kbdialog::pipeline::{
    evaluate_generator, load_generator, load_laed, load_latent, run_experiment, save_generator, train_stage1,
    train_stage2, ExperimentConfig, Manifest, Stage1Paths, Variant, CODES,
};
use kbdialog::{seed, Error, Result};

use crate::{Cli, Command, Overrides};

fn load_config(path: Option<&Path>, seed: Option<u64>, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    for kv in &overrides.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(d) = &overrides.target_domain {
        cfg.target_domain = d.clone();
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn format(s: &str) -> Result<CorpusFormat> {
    s.parse()
}

fn required(p: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    p.ok_or_else(|| Error::Config(format!("{what} is not set (use the flag or the config key)")))
}

pub fn dispatch(cli: Cli) -> Result<()> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::PrepareData { input, format: f, output } => {
            let corpus = load_corpus(&input, format(&f)?)?;
            save_normalized(&corpus, &output)?;
            log::info!(
                "wrote {} dialogues ({} domains) to {}",
                corpus.len(),
                corpus.domains().len(),
                output.display()
            );
        }
        Command::TrainStage1 {
            output,
            transfer,
            transfer_format,
            overrides,
        } => {
            let cfg = load_config(config, cli.seed, &overrides)?;
            let path = required(transfer.or(cfg.transfer_path.clone()), "data.transfer")?;
            let fmt = transfer_format.as_deref().map(format).transpose()?.unwrap_or(cfg.transfer_format);
            let raw = load_corpus(&path, fmt)?;
            let transfer = exclude_overlap(&raw, &cfg.target_domain, cfg.exclude.as_deref())?;
            log::info!("transfer corpus: {} of {} dialogues kept", transfer.len(), raw.len());
            let out = train_stage1(&cfg, &transfer, Some(&output))?;
            println!("excluded domains: {}", out.exclusion.join(", "));
            for (name, log) in [("di-vae", Some(&out.di_vae_log)), ("laed", Some(&out.laed_log)), ("vae", out.vae_log.as_ref())] {
                if let Some(log) = log {
                    println!(
                        "{name}: held-out loss {:.4} -> {:.4}",
                        log.heldout_start.unwrap_or(f64::NAN),
                        log.heldout_end.unwrap_or(f64::NAN)
                    );
                }
            }
        }
        Command::TrainStage2 {
            output,
            stage1,
            variant,
            ratio,
            main,
            main_format,
            overrides,
        } => {
            let cfg = load_config(config, cli.seed, &overrides)?;
            let variant: Variant = match variant {
                Some(v) => v.parse()?,
                None => cfg.variants[0],
            };
            let ratio = ratio.unwrap_or(cfg.ratios[0]);
            let path = required(main.or(cfg.main_path.clone()), "data.main")?;
            let fmt = main_format.as_deref().map(format).transpose()?.unwrap_or(cfg.main_format);
            let corpus = load_corpus(&path, fmt)?;
            let spec = FewShotSpec::new(&cfg.target_domain, ratio, seed::derive(cfg.seed, seed::SAMPLING))?;
            let seed_data = sample_few_shot(&corpus, &spec)?;
            let source = corpus.without_domain(&cfg.target_domain);
            let paths = stage1.as_deref().map(Stage1Paths::under).unwrap_or_default();
            let loaded = if paths.is_empty() { None } else { Some(paths.load()?) };
            if stage1.is_some() && loaded.is_none() {
                return Err(Error::MissingStage1(format!("no stage-1 checkpoints under {}", stage1.unwrap().display())));
            }
            let out = train_stage2(&cfg, variant, &source, &seed_data, loaded.as_ref(), cfg.seed)?;
            let ids: Vec<&str> = seed_data.dialogues.iter().map(|d| d.id.as_str()).collect();
            let extra = [
                ("target_domain".to_string(), cfg.target_domain.clone()),
                ("ratio".to_string(), ratio.to_string()),
                ("seed".to_string(), cfg.seed.to_string()),
                ("seed_dialogues".to_string(), ids.join(",")),
                ("best_epoch".to_string(), out.log.best_epoch.to_string()),
            ];
            save_generator(&output, &out.model, variant, &paths, &extra)?;
            println!(
                "{variant}: {} seed dialogues, best epoch {}, saved to {}",
                ids.len(),
                out.log.best_epoch,
                output.display()
            );
        }
        Command::Evaluate {
            checkpoint,
            corpus,
            format: f,
            domain,
        } => {
            let g = load_generator(&checkpoint)?;
            let all = load_corpus(&corpus, format(&f)?)?;
            let data = all.filter_domain(&domain);
            if data.is_empty() {
                return Err(Error::UnknownDomain(domain));
            }
            let (summary, _) = evaluate_generator(&g.model, g.stage1.as_ref(), &g.external, &data)?;
            print!("{}", summary_table(&domain, &summary));
            println!("{}", serde_json::to_string(&summary).map_err(|e| Error::Data(e.to_string()))?);
        }
        Command::RunExperiment { output, overrides } => {
            let cfg = load_config(config, cli.seed, &overrides)?;
            let out = run_experiment(&cfg, Some(&output))?;
            print!("{}", out.report.to_table());
        }
        Command::InspectCodes {
            checkpoint,
            corpus,
            format: f,
            top,
        } => inspect_codes(&checkpoint, corpus.as_deref(), &f, top)?,
        Command::Chat { checkpoint, kb } => crate::chat::run(&checkpoint, &kb)?,
    }
    Ok(())
}

fn summary_table(domain: &str, s: &EvalSummary) -> String {
    format!(
        "{:<12} {:>7} {:>7} {:>9} {:>9} {:>10}\n{:<12} {:>7} {:>7.2} {:>9.2} {:>9.2} {:>10.2}\n",
        "domain", "pairs", "BLEU", "Entity P", "Entity R", "Entity F1", domain, s.n_pairs, s.bleu, s.entity_p, s.entity_r,
        s.entity_f1
    )
}

fn inspect_codes(dir: &Path, corpus: Option<&Path>, fmt: &str, top: usize) -> Result<()> {
    let manifest = Manifest::read(dir)?;
    let Some(corpus) = corpus else {
        let p = dir.join(CODES);
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        text.lines().take(top).for_each(|l| println!("{l}"));
        return Ok(());
    };
    let corpus = load_corpus(corpus, format(fmt)?)?;
    let laed;
    let latent;
    let (model, vocab) = if manifest.get("variant") == Some("laed") {
        laed = load_laed(dir)?;
        (laed.0.vst(), &laed.1)
    } else {
        latent = load_latent(dir)?;
        (&latent.0, &latent.1)
    };
    for (code, utts) in cluster_by_code(&corpus, vocab, model)?.into_iter().take(top) {
        println!("{code}  ({} utterances)", utts.len());
        for u in utts.iter().take(3) {
            println!("    {u}");
        }
    }
    Ok(())
}
