use super::tokenize::tokenize;
use super::vocab::{KB_CLOSE, KB_OPEN};
use super::KbRecord;

/// Renders KB rows as `<kb> key value-tokens ... </kb>` segments in source order.
pub fn serialize_kb(kb: &[KbRecord]) -> Vec<String> {
    let mut out = Vec::new();
    for record in kb {
        out.extend(serialize_record(record));
    }
    out
}

pub fn serialize_record(record: &KbRecord) -> Vec<String> {
    let mut out = vec![KB_OPEN.to_string()];
    for attr in &record.attributes {
        out.extend(tokenize(&attr.key));
        out.extend(tokenize(&attr.value));
    }
    out.push(KB_CLOSE.to_string());
    out
}

/// Canonical entity strings of a KB: every value, tokenized and space-joined.
pub fn kb_entities(kb: &[KbRecord]) -> Vec<String> {
    let mut out: Vec<String> = kb
        .iter()
        .flat_map(|r| r.attributes.iter())
        .map(|a| tokenize(&a.value).join(" "))
        .filter(|s| !s.is_empty())
        .collect();
    out.sort();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::KbAttribute;
    use proptest::prelude::*;

    fn record(pairs: &[(&str, &str)]) -> KbRecord {
        KbRecord {
            attributes: pairs
                .iter()
                .map(|(k, v)| KbAttribute::new(*k, *v))
                .collect(),
        }
    }

    #[test]
    fn empty_kb() {
        assert!(serialize_kb(&[]).is_empty());
    }

    #[test]
    fn single_record() {
        let kb = [record(&[("poi", "Stanford Express Care"), ("address", "214 El Camino Real")])];
        assert_eq!(
            serialize_kb(&kb),
            [
                KB_OPEN, "poi", "stanford", "express", "care", "address", "214", "el", "camino",
                "real", KB_CLOSE
            ]
        );
    }

    #[test]
    fn records_keep_order() {
        let kb = [record(&[("poi", "a")]), record(&[("poi", "b")])];
        assert_eq!(
            serialize_kb(&kb),
            [KB_OPEN, "poi", "a", KB_CLOSE, KB_OPEN, "poi", "b", KB_CLOSE]
        );
    }

    #[test]
    fn entities_are_values() {
        let kb = [record(&[("poi", "Stanford Express Care"), ("distance", "3 miles")])];
        assert_eq!(kb_entities(&kb), ["3 miles", "stanford express care"]);
    }

    proptest! {
        #[test]
        fn serialized_length(rows in prop::collection::vec(
            prop::collection::vec(("[a-z]{1,6}( [a-z]{1,4})?", "[A-Za-z0-9 ,.]{0,12}"), 0..4), 0..4)
        ) {
            let kb: Vec<KbRecord> = rows.iter().map(|r| KbRecord {
                attributes: r.iter().map(|(k, v)| KbAttribute::new(k.as_str(), v.as_str())).collect(),
            }).collect();
            let expected: usize = kb.iter().map(|r| 2 + r.attributes.iter()
                .map(|a| tokenize(&a.key).len() + tokenize(&a.value).len()).sum::<usize>()).sum();
            prop_assert_eq!(serialize_kb(&kb).len(), expected);
        }
    }
}
