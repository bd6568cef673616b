use serde::{Deserialize, Serialize};

use super::{kb_entities, serialize_kb, Corpus, Dialogue, Speaker};
use crate::{Error, Result};

/// A (context, user query, system response, KB, domain) training tuple.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingInstance {
    pub dialogue_id: String,
    pub domain: String,
    /// Every turn strictly before `user`.
    pub context: Vec<(Speaker, Vec<String>)>,
    pub user: Vec<String>,
    pub response: Vec<String>,
    pub kb: Vec<String>,
    /// Canonical KB value strings, used for Entity F1.
    pub entities: Vec<String>,
}

impl TrainingInstance {
    /// Context turns followed by the user query: everything the system saw
    /// before producing `response`.
    pub fn history(&self) -> Vec<(Speaker, Vec<String>)> {
        let mut turns = self.context.clone();
        turns.push((Speaker::User, self.user.clone()));
        turns
    }
}

/// One instance per SYSTEM turn that has a USER turn somewhere before it.
///
/// The query is the closest preceding USER turn and the context is every turn
/// before that query. Instances come in turn order.
pub fn to_training_instances(dialogue: &Dialogue) -> Result<Vec<TrainingInstance>> {
    let kb = serialize_kb(&dialogue.kb);
    let entities = kb_entities(&dialogue.kb);
    let mut out = Vec::new();
    let mut last_user: Option<usize> = None;
    for (i, turn) in dialogue.turns.iter().enumerate() {
        match turn.speaker {
            Speaker::User => last_user = Some(i),
            Speaker::System => {
                if let Some(u) = last_user {
                    out.push(TrainingInstance {
                        dialogue_id: dialogue.id.clone(),
                        domain: dialogue.domain.clone(),
                        context: dialogue.turns[..u]
                            .iter()
                            .map(|t| (t.speaker, t.tokens()))
                            .collect(),
                        user: dialogue.turns[u].tokens(),
                        response: turn.tokens(),
                        kb: kb.clone(),
                        entities: entities.clone(),
                    });
                }
            }
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyDialogue(dialogue.id.clone()));
    }
    Ok(out)
}

/// Instances of every usable dialogue; unusable ones are skipped with a warning.
pub fn corpus_instances(corpus: &Corpus) -> Vec<TrainingInstance> {
    let mut out = Vec::new();
    for dialogue in &corpus.dialogues {
        match to_training_instances(dialogue) {
            Ok(instances) => out.extend(instances),
            Err(e) => log::warn!("skipping dialogue: {e}"),
        }
    }
    out
}
