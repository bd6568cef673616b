//! Dialogue corpora: the normalized data model, format adapters, tokenization,
//! KB serialization, vocabularies, training instances and few-shot sampling.

mod instance;
mod io;
mod kb;
mod sampling;
mod tokenize;
mod vocab;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use instance::{corpus_instances, to_training_instances, TrainingInstance};
pub use io::{
    load_corpus, save_normalized, to_metalwoz_lines, to_normalized_json, to_smd_json, CorpusFormat,
};
pub use kb::{kb_entities, serialize_kb, serialize_record};
pub use sampling::{
    exclude_overlap, exclusion_list, round_half_up, sample_few_shot, FewShotSpec,
};
pub use tokenize::tokenize;
pub use vocab::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Speaker {
    #[serde(rename = "USER")]
    User,
    #[serde(rename = "SYSTEM")]
    System,
}

impl Speaker {
    /// Sentinel token marking turns of this speaker in flattened contexts.
    pub fn sentinel(self) -> &'static str {
        match self {
            Speaker::User => USR,
            Speaker::System => SYS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
}

impl Turn {
    pub fn new(speaker: Speaker, text: impl Into<String>) -> Self {
        Turn {
            speaker,
            text: text.into(),
        }
    }

    pub fn tokens(&self) -> Vec<String> {
        tokenize(&self.text)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbAttribute {
    pub key: String,
    pub value: String,
}

impl KbAttribute {
    pub fn new(key: impl Into<String>, value: impl Into<String>) -> Self {
        KbAttribute {
            key: key.into(),
            value: value.into(),
        }
    }
}

/// One KB row; attribute order is the source column order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KbRecord {
    pub attributes: Vec<KbAttribute>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub domain: String,
    pub turns: Vec<Turn>,
    pub kb: Vec<KbRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub name: String,
    pub dialogues: Vec<Dialogue>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, dialogues: Vec<Dialogue>) -> Self {
        Corpus {
            name: name.into(),
            dialogues,
        }
    }

    pub fn domains(&self) -> BTreeSet<String> {
        self.dialogues.iter().map(|d| d.domain.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.dialogues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dialogues.is_empty()
    }

    pub fn filter_domain(&self, domain: &str) -> Corpus {
        Corpus {
            name: format!("{}:{domain}", self.name),
            dialogues: self
                .dialogues
                .iter()
                .filter(|d| d.domain == domain)
                .cloned()
                .collect(),
        }
    }

    /// Dialogues whose domain is not `domain`.
    pub fn without_domain(&self, domain: &str) -> Corpus {
        Corpus {
            name: format!("{}:-{domain}", self.name),
            dialogues: self
                .dialogues
                .iter()
                .filter(|d| d.domain != domain)
                .cloned()
                .collect(),
        }
    }

    /// Every utterance as (speaker, tokens), in corpus order.
    pub fn utterances(&self) -> impl Iterator<Item = (Speaker, Vec<String>)> + '_ {
        self.dialogues
            .iter()
            .flat_map(|d| d.turns.iter().map(|t| (t.speaker, t.tokens())))
    }
}
