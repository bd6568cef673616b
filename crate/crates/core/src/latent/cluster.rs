use std::collections::BTreeMap;

use super::{LatentCode, LatentModel};
use crate::corpus::{Corpus, Vocab};
use crate::Result;

/// Groups every utterance of `corpus` by its argmax code, largest bucket first.
pub fn cluster_by_code(corpus: &Corpus, vocab: &Vocab, model: &LatentModel) -> Result<Vec<(LatentCode, Vec<String>)>> {
    let mut texts = Vec::new();
    let mut ids = Vec::new();
    for turn in corpus.dialogues.iter().flat_map(|d| &d.turns) {
        let toks = turn.tokens();
        if toks.is_empty() {
            continue;
        }
        texts.push(toks.join(" "));
        ids.push(vocab.encode(&toks));
    }
    let mut buckets: BTreeMap<LatentCode, Vec<String>> = BTreeMap::new();
    for (chunk_ids, chunk_texts) in ids.chunks(128).zip(texts.chunks(128)) {
        for (code, text) in model.codes(chunk_ids)?.into_iter().zip(chunk_texts) {
            buckets.entry(code).or_default().push(text.clone());
        }
    }
    let mut out: Vec<_> = buckets.into_iter().collect();
    out.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}

/// Fraction of items whose label is the majority label of their cluster.
pub fn cluster_purity<C: Ord, L: Ord>(assignments: &[(C, L)]) -> f64 {
    if assignments.is_empty() {
        return 0.0;
    }
    let mut counts: BTreeMap<&C, BTreeMap<&L, usize>> = BTreeMap::new();
    for (c, l) in assignments {
        *counts.entry(c).or_default().entry(l).or_default() += 1;
    }
    let majority: usize = counts.values().map(|m| m.values().copied().max().unwrap_or(0)).sum();
    majority as f64 / assignments.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Dialogue, Speaker, Turn};
    use crate::latent::{LatentConfig, LatentVariant};
    use candle_core::DType;

    #[test]
    fn purity() {
        assert_eq!(cluster_purity::<u8, u8>(&[]), 0.0);
        assert_eq!(cluster_purity(&[(0, 'a'), (0, 'a'), (1, 'b'), (1, 'a')]), 0.75);
    }

    #[test]
    fn buckets_partition_the_corpus() {
        let cfg = LatentConfig {
            m: 1,
            k: 3,
            embed: 4,
            hidden: 4,
            ..LatentConfig::default()
        };
        let dialogues = vec![Dialogue {
            id: "d".into(),
            domain: "x".into(),
            turns: vec![
                Turn::new(Speaker::User, "hello there"),
                Turn::new(Speaker::System, "hi"),
                Turn::new(Speaker::User, "bye now"),
            ],
            kb: vec![],
        }];
        let corpus = Corpus::new("c", dialogues);
        let vocab = crate::corpus::build_vocab(&corpus, 1);
        let model = LatentModel::new(LatentVariant::DiVae, &cfg, vocab.len(), DType::F32, 0).unwrap();
        let buckets = cluster_by_code(&corpus, &vocab, &model).unwrap();
        assert_eq!(buckets.iter().map(|b| b.1.len()).sum::<usize>(), 3);
        assert!(buckets.windows(2).all(|w| w[0].1.len() >= w[1].1.len()));
        let empty = Corpus::new("e", vec![]);
        assert!(cluster_by_code(&empty, &vocab, &model).unwrap().is_empty());
    }
}
