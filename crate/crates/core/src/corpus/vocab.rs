use std::collections::HashMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::Corpus;
use crate::{Error, Result};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const USR: &str = "<usr>";
pub const SYS: &str = "<sys>";
pub const KB_OPEN: &str = "<kb>";
pub const KB_CLOSE: &str = "</kb>";

/// Special tokens, in id order.
pub const SPECIALS: [&str; 8] = [PAD, UNK, BOS, EOS, USR, SYS, KB_OPEN, KB_CLOSE];

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const BOS_ID: u32 = 2;
pub const EOS_ID: u32 = 3;
pub const USR_ID: u32 = 4;
pub const SYS_ID: u32 = 5;
pub const KB_OPEN_ID: u32 = 6;
pub const KB_CLOSE_ID: u32 = 7;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::from_tokens(std::iter::empty::<String>())
    }
}

impl Vocab {
    /// Specials followed by `tokens` (duplicates and specials skipped).
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for tok in SPECIALS.iter().map(|s| s.to_string()).chain(tokens.into_iter().map(Into::into)) {
            if !vocab.index.contains_key(&tok) {
                vocab.index.insert(tok.clone(), vocab.tokens.len() as u32);
                vocab.tokens.push(tok);
            }
        }
        vocab
    }

    /// Keeps tokens with count >= `min_freq`, ordered by (count desc, token asc).
    pub fn from_counts(counts: &HashMap<String, usize>, min_freq: usize) -> Self {
        let mut kept: Vec<(&String, usize)> = counts
            .iter()
            .filter(|(_, &c)| c >= min_freq.max(1))
            .map(|(t, &c)| (t, c))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Self::from_tokens(kept.into_iter().map(|(t, _)| t.clone()))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: u32) -> &str {
        self.tokens.get(id as usize).map(String::as_str).unwrap_or(UNK)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// Short stable fingerprint of the id assignment.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for tok in &self.tokens {
            hasher.update(tok.as_bytes());
            hasher.update([b'\n']);
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens: Vec<&str> = text.lines().collect();
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                locus: "line 1".into(),
                message: "vocabulary file does not start with the special tokens".into(),
            });
        }
        Ok(Self::from_tokens(tokens[SPECIALS.len()..].iter().copied()))
    }
}

/// Counts every token in turns and KB rows of `corpus`.
pub fn token_counts(corpus: &Corpus) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for dialogue in &corpus.dialogues {
        for turn in &dialogue.turns {
            for tok in turn.tokens() {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
        for tok in super::serialize_kb(&dialogue.kb) {
            *counts.entry(tok).or_insert(0) += 1;
        }
    }
    for special in SPECIALS {
        counts.remove(special);
    }
    counts
}

pub fn build_vocab(corpus: &Corpus, min_freq: usize) -> Vocab {
    Vocab::from_counts(&token_counts(corpus), min_freq)
}
