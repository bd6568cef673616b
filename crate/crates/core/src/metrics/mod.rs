//! Corpus BLEU, Entity F1 and multi-run aggregation.

mod aggregate;
mod bleu;
mod entity;
mod report;

use serde::{Deserialize, Serialize};

pub use aggregate::{aggregate_runs, MetricSummary};
pub use bleu::corpus_bleu;
pub use entity::{entity_f1, entity_mentions, EntityScores};
pub use report::{format_ratio, EvalReport, ReportRow, RunResult};

/// A generated response next to its reference and the dialogue's KB entities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPair {
    pub reference: Vec<String>,
    pub hypothesis: Vec<String>,
    /// Canonical entity strings (space-joined tokens).
    pub kb_entities: Vec<String>,
}

impl EvalPair {
    pub fn new(reference: Vec<String>, hypothesis: Vec<String>, kb_entities: Vec<String>) -> Self {
        EvalPair {
            reference,
            hypothesis,
            kb_entities,
        }
    }
}

/// The JSON record emitted by `evaluate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub bleu: f64,
    pub entity_p: f64,
    pub entity_r: f64,
    pub entity_f1: f64,
    pub n_pairs: usize,
}

pub fn evaluate_pairs(pairs: &[EvalPair]) -> crate::Result<EvalSummary> {
    let bleu = corpus_bleu(pairs)?;
    let ent = entity_f1(pairs)?;
    Ok(EvalSummary {
        bleu,
        entity_p: ent.precision,
        entity_r: ent.recall,
        entity_f1: ent.f1,
        n_pairs: pairs.len(),
    })
}
