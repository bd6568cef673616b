use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Corpus;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FewShotSpec {
    pub target_domain: String,
    pub ratio: f64,
    pub seed: u64,
}

impl FewShotSpec {
    pub fn new(target_domain: impl Into<String>, ratio: f64, seed: u64) -> Result<Self> {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::Config(format!("few-shot ratio {ratio} outside (0, 1]")));
        }
        Ok(FewShotSpec {
            target_domain: target_domain.into(),
            ratio,
            seed,
        })
    }

    /// Number of dialogues drawn from a domain of `n` dialogues.
    pub fn sample_size(&self, n: usize) -> usize {
        round_half_up(self.ratio * n as f64).max(1).min(n)
    }
}

pub fn round_half_up(x: f64) -> usize {
    // 1e-9 absorbs representation error such as 0.05 * 800 = 40.000000000000007
    // or 0.5 stored as 0.49999999999999994.
    (x + 0.5 + 1e-9).floor().max(0.0) as usize
}

/// Seeded uniform sample of the target domain's dialogues, kept in corpus order.
pub fn sample_few_shot(corpus: &Corpus, spec: &FewShotSpec) -> Result<Corpus> {
    let pool: Vec<usize> = corpus
        .dialogues
        .iter()
        .enumerate()
        .filter(|(_, d)| d.domain == spec.target_domain)
        .map(|(i, _)| i)
        .collect();
    if pool.is_empty() {
        return Err(Error::UnknownDomain(spec.target_domain.clone()));
    }
    let n = spec.sample_size(pool.len());
    let mut shuffled = pool;
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut chosen = shuffled[..n].to_vec();
    chosen.sort_unstable();
    Ok(Corpus {
        name: format!("{}:{}@{}", corpus.name, spec.target_domain, spec.ratio),
        dialogues: chosen.into_iter().map(|i| corpus.dialogues[i].clone()).collect(),
    })
}

/// Transfer-corpus domains that overlap with a target domain.
pub fn exclusion_list(target_domain: &str, custom: Option<&[String]>) -> Result<Vec<String>> {
    if let Some(custom) = custom {
        return Ok(custom.to_vec());
    }
    let list: &[&str] = match target_domain.to_ascii_lowercase().as_str() {
        "navigate" => &["STORE_DETAILS"],
        "weather" => &["WEATHER_CHECK"],
        "schedule" => &["UPDATE_CALENDAR", "APPOINTMENT_REMINDER"],
        _ => return Err(Error::UnknownDomain(target_domain.to_string())),
    };
    Ok(list.iter().map(|s| s.to_string()).collect())
}

/// Drops transfer dialogues whose domain overlaps with `target_domain`.
pub fn exclude_overlap(
    transfer: &Corpus,
    target_domain: &str,
    custom: Option<&[String]>,
) -> Result<Corpus> {
    let excluded = exclusion_list(target_domain, custom)?;
    Ok(Corpus {
        name: transfer.name.clone(),
        dialogues: transfer
            .dialogues
            .iter()
            .filter(|d| !excluded.iter().any(|x| x.eq_ignore_ascii_case(&d.domain)))
            .cloned()
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Dialogue, Speaker, Turn};
    use proptest::prelude::*;

    fn corpus(domains: &[(&str, usize)]) -> Corpus {
        let mut dialogues = Vec::new();
        for (domain, n) in domains {
            for i in 0..*n {
                dialogues.push(Dialogue {
                    id: format!("{domain}-{i}"),
                    domain: domain.to_string(),
                    turns: vec![Turn::new(Speaker::User, "hi"), Turn::new(Speaker::System, "hello")],
                    kb: vec![],
                });
            }
        }
        Corpus::new("c", dialogues)
    }

    #[test]
    fn counts_for_table_sizes() {
        let c = corpus(&[("navigate", 800), ("weather", 797)]);
        let count = |d: &str, r: f64| {
            sample_few_shot(&c, &FewShotSpec::new(d, r, 7).unwrap())
                .unwrap()
                .len()
        };
        assert_eq!(count("navigate", 0.01), 8);
        assert_eq!(count("navigate", 0.03), 24);
        assert_eq!(count("navigate", 0.05), 40);
        assert_eq!(count("navigate", 0.10), 80);
        assert_eq!(count("weather", 0.03), 24);
        assert_eq!(count("weather", 1.0), 797);
    }

    #[test]
    fn rounding() {
        assert_eq!(round_half_up(23.91), 24);
        assert_eq!(round_half_up(2.5), 3);
        assert_eq!(round_half_up(0.01 * 50.0), 1);
        assert_eq!(round_half_up(0.049), 0);
    }

    #[test]
    fn minimum_one() {
        let c = corpus(&[("weather", 20)]);
        let s = sample_few_shot(&c, &FewShotSpec::new("weather", 0.01, 1).unwrap()).unwrap();
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn rejects_bad_ratio() {
        assert!(FewShotSpec::new("x", 0.0, 0).is_err());
        assert!(FewShotSpec::new("x", 1.5, 0).is_err());
    }

    #[test]
    fn unknown_domain() {
        let c = corpus(&[("weather", 5)]);
        let err = sample_few_shot(&c, &FewShotSpec::new("navigate", 0.5, 0).unwrap());
        assert!(matches!(err, Err(Error::UnknownDomain(_))));
    }

    #[test]
    fn exclusions() {
        let t = corpus(&[
            ("STORE_DETAILS", 2),
            ("WEATHER_CHECK", 3),
            ("UPDATE_CALENDAR", 1),
            ("APPOINTMENT_REMINDER", 1),
            ("ALARM_SET", 4),
        ]);
        let w = exclude_overlap(&t, "weather", None).unwrap();
        assert!(!w.domains().contains("WEATHER_CHECK"));
        assert_eq!(w.len(), 8);
        let s = exclude_overlap(&t, "schedule", None).unwrap();
        assert!(!s.domains().contains("UPDATE_CALENDAR"));
        assert!(!s.domains().contains("APPOINTMENT_REMINDER"));
        assert_eq!(s.len(), 9);
        let n = exclude_overlap(&t, "navigate", None).unwrap();
        assert_eq!(n.len(), 9);
        assert_eq!(exclude_overlap(&t, "custom", Some(&[])).unwrap(), t);
        assert!(matches!(
            exclude_overlap(&t, "custom", None),
            Err(Error::UnknownDomain(_))
        ));
    }

    proptest! {
        #[test]
        fn sample_is_seeded_subset(n in 1usize..200, ratio in 0.001f64..1.0, seed in any::<u64>()) {
            let c = corpus(&[("t", n), ("other", 3)]);
            let spec = FewShotSpec::new("t", ratio, seed).unwrap();
            let a = sample_few_shot(&c, &spec).unwrap();
            let b = sample_few_shot(&c, &spec).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.len(), round_half_up(ratio * n as f64).max(1).min(n));
            let ids: std::collections::BTreeSet<_> = a.dialogues.iter().map(|d| d.id.clone()).collect();
            prop_assert_eq!(ids.len(), a.len());
            prop_assert!(a.dialogues.iter().all(|d| d.domain == "t"));
        }
    }
}
