use std::collections::HashMap;

use super::EvalPair;
use crate::{Error, Result};

const MAX_ORDER: usize = 4;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU-4 in percent: uniform weights, clipped n-gram counts,
/// brevity penalty `exp(1 - r/h)` when `h <= r`, no smoothing.
///
/// An order for which neither hypotheses nor references contain any n-gram
/// (all sentences shorter than n) counts as precision 1; an order where only
/// the hypotheses lack n-grams counts as 0.
pub fn corpus_bleu(pairs: &[EvalPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut matched = [0usize; MAX_ORDER];
    let mut total = [0usize; MAX_ORDER];
    let mut ref_total = [0usize; MAX_ORDER];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;
    for pair in pairs {
        hyp_len += pair.hypothesis.len();
        ref_len += pair.reference.len();
        for n in 1..=MAX_ORDER {
            let hyp = ngram_counts(&pair.hypothesis, n);
            let reference = ngram_counts(&pair.reference, n);
            total[n - 1] += pair.hypothesis.len().saturating_sub(n - 1);
            ref_total[n - 1] += pair.reference.len().saturating_sub(n - 1);
            matched[n - 1] += hyp
                .iter()
                .map(|(g, &c)| c.min(reference.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }
    if hyp_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 0..MAX_ORDER {
        if total[n] == 0 {
            if ref_total[n] == 0 {
                continue;
            }
            return Ok(0.0);
        }
        if matched[n] == 0 {
            return Ok(0.0);
        }
        log_sum += (matched[n] as f64 / total[n] as f64).ln();
    }
    let brevity = if hyp_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok(100.0 * brevity * (log_sum / MAX_ORDER as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(r: &str, h: &str) -> EvalPair {
        let t = |s: &str| s.split_whitespace().map(str::to_string).collect();
        EvalPair::new(t(r), t(h), vec![])
    }

    #[test]
    fn identity_is_100() {
        let pairs = [pair("a b c d e", "a b c d e"), pair("x y", "x y")];
        assert_eq!(corpus_bleu(&pairs).unwrap(), 100.0);
    }

    #[test]
    fn no_overlap_is_zero() {
        assert_eq!(corpus_bleu(&[pair("a b c d", "e f g h")]).unwrap(), 0.0);
    }

    #[test]
    fn brevity_penalty_case() {
        let got = corpus_bleu(&[pair("a b c d e", "a b c d")]).unwrap();
        let expected = 100.0 * (1.0f64 - 5.0 / 4.0).exp();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 77.8801).abs() < 1e-3);
    }

    #[test]
    fn clipping() {
        // unigram precision 2/4 ("the" clipped to 2), no higher-order matches
        assert_eq!(corpus_bleu(&[pair("the cat the", "the the the the")]).unwrap(), 0.0);
    }

    #[test]
    fn known_value() {
        // p1 = 5/6, p2 = 3/5, p3 = 2/4, p4 = 1/3, h = r
        let got = corpus_bleu(&[pair("the cat sat on the mat", "the cat sat on a mat")]).unwrap();
        let expected = 100.0 * ((5.0f64 / 6.0) * (3.0 / 5.0) * (2.0 / 4.0) * (1.0 / 3.0)).powf(0.25);
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
        // no 4-gram overlap -> 0
        assert_eq!(corpus_bleu(&[pair("a b c d e", "a b c x e")]).unwrap(), 0.0);
        // p1 = 6/7, p2 = 4/6, p3 = 3/5, p4 = 2/4, h = 7 > r = 6
        let got = corpus_bleu(&[pair("the cat sat on the mat", "the cat sat on the red mat")]).unwrap();
        let expected = 100.0 * ((6.0f64 / 7.0) * (4.0 / 6.0) * (3.0 / 5.0) * (2.0 / 4.0)).powf(0.25);
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
    }

    #[test]
    fn empty_input() {
        assert!(matches!(corpus_bleu(&[]), Err(Error::EmptyInput)));
    }

    fn arb_pairs() -> impl Strategy<Value = Vec<EvalPair>> {
        let sent = prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]), 1..8)
            .prop_map(|v| v.into_iter().map(str::to_string).collect::<Vec<_>>());
        prop::collection::vec((sent.clone(), sent), 1..6).prop_map(|v| {
            v.into_iter()
                .map(|(r, h)| EvalPair::new(r, h, vec![]))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn permutation_invariant(pairs in arb_pairs(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(corpus_bleu(&pairs).unwrap(), corpus_bleu(&shuffled).unwrap());
        }

        #[test]
        fn self_bleu_is_100(pairs in arb_pairs()) {
            let same: Vec<EvalPair> = pairs.iter()
                .map(|p| EvalPair::new(p.reference.clone(), p.reference.clone(), vec![])).collect();
            prop_assert_eq!(corpus_bleu(&same).unwrap(), 100.0);
        }

        #[test]
        fn bounded(pairs in arb_pairs()) {
            let b = corpus_bleu(&pairs).unwrap();
            prop_assert!((0.0..=100.0).contains(&b));
        }
    }
}
