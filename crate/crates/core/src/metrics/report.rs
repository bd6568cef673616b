use std::collections::BTreeSet;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{aggregate_runs, MetricSummary};
use crate::{Error, Result};

/// Metrics of one seeded stage-2 run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub variant: String,
    pub ratio: f64,
    pub seed: u64,
    pub domain: String,
    pub bleu: f64,
    pub entity_f1: f64,
    pub entity_p: f64,
    pub entity_r: f64,
    /// Not persisted in the per-run log, so that logs stay reproducible.
    #[serde(skip)]
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub variant: String,
    pub ratio: f64,
    pub domain: String,
    pub bleu: MetricSummary,
    pub entity_f1: MetricSummary,
    pub runs: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
}

/// `0.01 -> "1%"`, `0.025 -> "2.5%"`.
pub fn format_ratio(ratio: f64) -> String {
    let pct = format!("{:.4}", ratio * 100.0);
    let pct = pct.trim_end_matches('0').trim_end_matches('.');
    format!("{pct}%")
}

impl EvalReport {
    /// Groups runs by (variant, ratio, domain). Variants keep first-appearance
    /// order, ratios ascend, domains sort lexicographically.
    pub fn from_runs(runs: &[RunResult]) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut variants: Vec<&str> = Vec::new();
        for r in runs {
            if !variants.contains(&r.variant.as_str()) {
                variants.push(&r.variant);
            }
        }
        let mut ratios: Vec<f64> = runs.iter().map(|r| r.ratio).collect();
        ratios.sort_by(f64::total_cmp);
        ratios.dedup();
        let domains: BTreeSet<&str> = runs.iter().map(|r| r.domain.as_str()).collect();

        let mut rows = Vec::new();
        for variant in &variants {
            for &ratio in &ratios {
                for domain in &domains {
                    let group: Vec<&RunResult> = runs
                        .iter()
                        .filter(|r| r.variant == *variant && r.ratio == ratio && r.domain == *domain)
                        .collect();
                    if group.is_empty() {
                        continue;
                    }
                    let bleu: Vec<f64> = group.iter().map(|r| r.bleu).collect();
                    let f1: Vec<f64> = group.iter().map(|r| r.entity_f1).collect();
                    rows.push(ReportRow {
                        variant: variant.to_string(),
                        ratio,
                        domain: domain.to_string(),
                        bleu: aggregate_runs(&bleu)?,
                        entity_f1: aggregate_runs(&f1)?,
                        runs: group.len(),
                    });
                }
            }
        }
        Ok(EvalReport { rows })
    }

    /// Markdown table: one row per `variant@ratio`, a BLEU and an Entity F1
    /// column per domain, cells formatted `mean±std`.
    pub fn to_table(&self) -> String {
        let domains: BTreeSet<&str> = self.rows.iter().map(|r| r.domain.as_str()).collect();
        let mut keys: Vec<(&str, f64)> = Vec::new();
        for r in &self.rows {
            if !keys.iter().any(|(v, x)| *v == r.variant && *x == r.ratio) {
                keys.push((&r.variant, r.ratio));
            }
        }
        let mut out = String::from("| Model |");
        for d in &domains {
            let _ = write!(out, " {d} BLEU, % | {d} Entity F1, % |");
        }
        out.push_str("\n|---|");
        for _ in &domains {
            out.push_str("---|---|");
        }
        out.push('\n');
        for (variant, ratio) in keys {
            let _ = write!(out, "| {variant}@{} |", format_ratio(ratio));
            for d in &domains {
                match self
                    .rows
                    .iter()
                    .find(|r| r.variant == variant && r.ratio == ratio && r.domain == *d)
                {
                    Some(r) => {
                        let _ = write!(out, " {} | {} |", r.bleu, r.entity_f1);
                    }
                    None => out.push_str(" - | - |"),
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(variant: &str, ratio: f64, seed: u64, bleu: f64, f1: f64) -> RunResult {
        RunResult {
            variant: variant.into(),
            ratio,
            seed,
            domain: "weather".into(),
            bleu,
            entity_f1: f1,
            entity_p: f1,
            entity_r: f1,
            wall_time_s: 1.0,
        }
    }

    #[test]
    fn ratio_labels() {
        assert_eq!(format_ratio(0.01), "1%");
        assert_eq!(format_ratio(0.1), "10%");
        assert_eq!(format_ratio(0.025), "2.5%");
        assert_eq!(format_ratio(1.0), "100%");
    }

    #[test]
    fn single_run_has_zero_std() {
        let rep = EvalReport::from_runs(&[run("HRED", 0.01, 0, 8.0, 15.0)]).unwrap();
        assert_eq!(rep.rows[0].bleu.std, 0.0);
        assert!(rep.to_table().contains("| HRED@1% | 8.0±0.0 | 15.0±0.0 |"));
    }

    #[test]
    fn table_layout() {
        let runs = [
            run("HRED", 0.03, 0, 8.0, 10.0),
            run("HRED", 0.01, 0, 6.0, 10.0),
            run("HRED", 0.01, 1, 8.0, 12.0),
            run("HRED_LAED", 0.01, 0, 9.0, 20.0),
        ];
        let table = EvalReport::from_runs(&runs).unwrap().to_table();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0], "| Model | weather BLEU, % | weather Entity F1, % |");
        assert_eq!(lines[2], "| HRED@1% | 7.0±1.4 | 11.0±1.4 |");
        assert_eq!(lines[3], "| HRED@3% | 8.0±0.0 | 10.0±0.0 |");
        assert_eq!(lines[4], "| HRED_LAED@1% | 9.0±0.0 | 20.0±0.0 |");
    }
}
