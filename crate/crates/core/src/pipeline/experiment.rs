use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use super::{evaluate_generator, train_stage1, train_stage2, ExperimentConfig, Stage1Outcome};
use crate::corpus::{exclude_overlap, load_corpus, sample_few_shot, Corpus, FewShotSpec};
use crate::metrics::{EvalReport, RunResult};
use crate::seed;
use crate::{Error, Result};

pub const REPORT_FILE: &str = "report.md";
pub const RUNS_FILE: &str = "runs.json";
pub const TIMINGS_FILE: &str = "timings.txt";

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub report: EvalReport,
    pub runs: Vec<RunResult>,
}

fn required<'a>(p: &'a Option<std::path::PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Config(format!("{key} is not set")))
}

/// For every variant, ratio and run `i`, seed `base + i` drives seed-data
/// sampling, initialization and shuffling; each run trains stage 2 from
/// scratch and is scored on held-back target dialogues. Stage 1 is trained
/// once. With `out`, writes the report, the per-run log and timings there.
pub fn run_experiment(config: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentOutcome> {
    config.validate()?;
    let main = load_corpus(required(&config.main_path, "data.main")?, config.main_format)?;
    let target_all = main.filter_domain(&config.target_domain);
    if target_all.is_empty() {
        return Err(Error::UnknownDomain(config.target_domain.clone()));
    }
    let source = main.without_domain(&config.target_domain);
    let fixed_eval = match &config.eval_path {
        Some(p) => Some(load_corpus(p, config.eval_format)?.filter_domain(&config.target_domain)),
        None => None,
    };

    let stage1: Option<Stage1Outcome> = if config.needs_stage1() {
        let transfer = load_corpus(required(&config.transfer_path, "data.transfer")?, config.transfer_format)?;
        let transfer = exclude_overlap(&transfer, &config.target_domain, config.exclude.as_deref())?;
        Some(train_stage1(config, &transfer, out.map(|o| o.join("stage1")).as_deref())?)
    } else {
        None
    };

    let mut runs = Vec::new();
    for &variant in &config.variants {
        for &ratio in &config.ratios {
            for i in 0..config.runs {
                let run_seed = config.seed + i as u64;
                let started = Instant::now();
                let spec = FewShotSpec::new(&config.target_domain, ratio, seed::derive(run_seed, seed::SAMPLING))?;
                let seed_data = sample_few_shot(&target_all, &spec)?;
                let eval = match &fixed_eval {
                    Some(e) => e.clone(),
                    None => {
                        let chosen: std::collections::BTreeSet<&str> =
                            seed_data.dialogues.iter().map(|d| d.id.as_str()).collect();
                        Corpus::new(
                            "eval",
                            target_all
                                .dialogues
                                .iter()
                                .filter(|d| !chosen.contains(d.id.as_str()))
                                .cloned()
                                .collect(),
                        )
                    }
                };
                let eval = match config.eval_max_dialogues {
                    Some(n) => Corpus::new(eval.name.clone(), eval.dialogues.into_iter().take(n).collect()),
                    None => eval,
                };
                let s1 = stage1.as_ref().map(|s| &s.stage1);
                let trained = train_stage2(config, variant, &source, &seed_data, s1, run_seed)?;
                let (summary, _) = evaluate_generator(&trained.model, s1, &trained.external, &eval)?;
                let r = RunResult {
                    variant: variant.to_string(),
                    ratio,
                    seed: run_seed,
                    domain: config.target_domain.clone(),
                    bleu: summary.bleu,
                    entity_f1: summary.entity_f1,
                    entity_p: summary.entity_p,
                    entity_r: summary.entity_r,
                    wall_time_s: started.elapsed().as_secs_f64(),
                };
                log::info!(
                    "{variant}@{} seed {run_seed}: BLEU {:.2} Entity F1 {:.2} ({:.1}s)",
                    crate::metrics::format_ratio(ratio),
                    r.bleu,
                    r.entity_f1,
                    r.wall_time_s
                );
                runs.push(r);
            }
        }
    }
    let report = EvalReport::from_runs(&runs)?;
    let outcome = ExperimentOutcome { report, runs };
    if let Some(out) = out {
        write_report(out, &outcome)?;
    }
    Ok(outcome)
}

/// Writes the table, the per-run JSON log and the wall-time log.
pub fn write_report(dir: &Path, outcome: &ExperimentOutcome) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: &str| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write(REPORT_FILE, &outcome.report.to_table())?;
    let json = serde_json::to_string_pretty(&outcome.runs).map_err(|e| Error::Data(e.to_string()))?;
    write(RUNS_FILE, &(json + "\n"))?;
    let mut t = String::new();
    for r in &outcome.runs {
        let _ = writeln!(t, "{} {} {} {:.3}", r.variant, r.ratio, r.seed, r.wall_time_s);
    }
    write(TIMINGS_FILE, &t)
}
