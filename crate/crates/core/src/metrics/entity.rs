use std::collections::BTreeSet;

use super::EvalPair;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntityScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Entities whose token sequence occurs contiguously in `tokens`.
pub fn entity_mentions<'a>(entities: &'a [String], tokens: &[String]) -> BTreeSet<&'a str> {
    entities
        .iter()
        .filter(|e| {
            let needle: Vec<&str> = e.split_whitespace().collect();
            !needle.is_empty()
                && tokens.len() >= needle.len()
                && tokens
                    .windows(needle.len())
                    .any(|w| w.iter().zip(&needle).all(|(a, b)| a == b))
        })
        .map(String::as_str)
        .collect()
}

/// Micro-averaged Entity precision, recall and F1 in percent.
pub fn entity_f1(pairs: &[EvalPair]) -> Result<EntityScores> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (mut tp, mut n_pred, mut n_gold) = (0usize, 0usize, 0usize);
    for pair in pairs {
        let gold = entity_mentions(&pair.kb_entities, &pair.reference);
        let pred = entity_mentions(&pair.kb_entities, &pair.hypothesis);
        tp += gold.intersection(&pred).count();
        n_pred += pred.len();
        n_gold += gold.len();
    }
    let precision = if n_pred == 0 { 0.0 } else { tp as f64 / n_pred as f64 };
    let recall = if n_gold == 0 { 0.0 } else { tp as f64 / n_gold as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(EntityScores {
        precision: 100.0 * precision,
        recall: 100.0 * recall,
        f1: 100.0 * f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn ents(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn verbatim_mention() {
        let p = EvalPair::new(t("it is at 214 el camino real"), t("go to 214 el camino real now"), ents(&["214 el camino real"]));
        let s = entity_f1(&[p]).unwrap();
        assert_eq!(s.f1, 100.0);
    }

    #[test]
    fn half_right() {
        let p = EvalPair::new(t("a and b"), t("a and c"), ents(&["a", "b", "c"]));
        let s = entity_f1(&[p]).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (50.0, 50.0, 50.0));
    }

    #[test]
    fn nothing_predicted() {
        let p = EvalPair::new(t("a"), t("z"), ents(&["a"]));
        let s = entity_f1(&[p]).unwrap();
        assert_eq!((s.precision, s.f1), (0.0, 0.0));
    }

    #[test]
    fn partial_token_match_does_not_count() {
        let p = EvalPair::new(t("el camino real"), t("el camino"), ents(&["el camino real"]));
        assert_eq!(entity_f1(&[p]).unwrap().f1, 0.0);
    }

    #[test]
    fn empty_gold_only_hits_precision() {
        let a = EvalPair::new(t("x"), t("a"), ents(&["a"]));
        let b = EvalPair::new(t("b"), t("b"), ents(&["b"]));
        let s = entity_f1(&[a, b]).unwrap();
        assert_eq!(s.precision, 50.0);
        assert_eq!(s.recall, 100.0);
    }

    #[test]
    fn empty_input() {
        assert!(matches!(entity_f1(&[]), Err(Error::EmptyInput)));
    }
}
