//! Frequency-ranked vocabularies mapping turn content to embedding ids.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::dialog_model::{DialogueTurn, Session};
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const OOV: usize = 1;
pub const AGG: usize = 2;
pub const SEP: usize = 3;
pub const RESERVED_TOKENS: [&str; 4] = ["[PAD]", "[OOV]", "[AGG]", "[SEP]"];
/// Id 0 of every categorical table is the unknown category.
pub const UNKNOWN: &str = "[UNK]";

#[derive(Debug, Clone, Default)]
struct Table {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Table {
    fn new(names: Vec<String>) -> Self {
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Table { names, index }
    }

    fn get(&self, name: &str, fallback: usize) -> usize {
        self.index.get(name).copied().unwrap_or(fallback)
    }
}

/// Token and categorical vocabularies. Only the name lists are serialized.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "VocabNames", into = "VocabNames")]
pub struct Vocab {
    tokens: Table,
    intents: Table,
    slot_keys: Table,
    items: Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabNames {
    pub tokens: Vec<String>,
    pub intents: Vec<String>,
    pub slot_keys: Vec<String>,
    pub items: Vec<String>,
}

impl From<VocabNames> for Vocab {
    fn from(v: VocabNames) -> Self {
        Vocab {
            tokens: Table::new(v.tokens),
            intents: Table::new(v.intents),
            slot_keys: Table::new(v.slot_keys),
            items: Table::new(v.items),
        }
    }
}

impl From<Vocab> for VocabNames {
    fn from(v: Vocab) -> Self {
        VocabNames {
            tokens: v.tokens.names,
            intents: v.intents.names,
            slot_keys: v.slot_keys.names,
            items: v.items.names,
        }
    }
}

impl PartialEq for Vocab {
    fn eq(&self, other: &Self) -> bool {
        self.tokens.names == other.tokens.names
            && self.intents.names == other.intents.names
            && self.slot_keys.names == other.slot_keys.names
            && self.items.names == other.items.names
    }
}

/// Names sorted by descending count, ties broken lexicographically.
fn ranked(counts: BTreeMap<String, usize>) -> Vec<String> {
    let mut v: Vec<(String, usize)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.into_iter().map(|(n, _)| n).collect()
}

impl Vocab {
    /// Builds vocabularies from a corpus, keeping at most `vocab_size`
    /// token ids (reserved ids included).
    pub fn build(sessions: &[Session], vocab_size: usize) -> Self {
        let mut tokens: BTreeMap<String, usize> = BTreeMap::new();
        let mut intents: BTreeMap<String, usize> = BTreeMap::new();
        let mut keys: BTreeMap<String, usize> = BTreeMap::new();
        let mut items: BTreeMap<String, usize> = BTreeMap::new();
        for turn in sessions.iter().flat_map(|s| &s.turns) {
            let words = turn.query.iter().chain(&turn.voice_response).chain(turn.slots.iter().flat_map(|s| &s.value));
            for w in words {
                *tokens.entry(w.clone()).or_default() += 1;
            }
            *intents.entry(turn.domain_intent.clone()).or_default() += 1;
            *items.entry(turn.result_item.clone()).or_default() += 1;
            for slot in &turn.slots {
                *keys.entry(slot.key.clone()).or_default() += 1;
            }
        }
        let mut token_names: Vec<String> = RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
        token_names.extend(ranked(tokens).into_iter().take(vocab_size.saturating_sub(RESERVED_TOKENS.len())));
        let cat = |counts| {
            let mut names = vec![UNKNOWN.to_string()];
            names.extend(ranked(counts));
            Table::new(names)
        };
        Vocab {
            tokens: Table::new(token_names),
            intents: cat(intents),
            slot_keys: cat(keys),
            items: cat(items),
        }
    }

    pub fn num_tokens(&self) -> usize {
        self.tokens.names.len()
    }
    pub fn num_intents(&self) -> usize {
        self.intents.names.len()
    }
    pub fn num_slot_keys(&self) -> usize {
        self.slot_keys.names.len()
    }
    pub fn num_items(&self) -> usize {
        self.items.names.len()
    }

    pub fn token_id(&self, token: &str) -> usize {
        self.tokens.get(token, OOV)
    }

    /// Tokenizes a turn for the encoder; text is truncated to `max_text_len`.
    pub fn encode_turn(&self, turn: &DialogueTurn, max_text_len: usize) -> Result<TurnInput> {
        if turn.query.is_empty() {
            return Err(Error::Validation("empty query".into()));
        }
        let mut ids = Vec::with_capacity(max_text_len);
        ids.push(AGG);
        ids.extend(turn.query.iter().map(|t| self.token_id(t)));
        ids.push(SEP);
        ids.extend(turn.voice_response.iter().map(|t| self.token_id(t)));
        ids.truncate(max_text_len);
        let text_len = ids.len();
        ids.resize(max_text_len, PAD);
        Ok(TurnInput {
            text_ids: ids,
            text_len,
            intent: self.intents.get(&turn.domain_intent, 0),
            item: self.items.get(&turn.result_item, 0),
            slots: turn
                .slots
                .iter()
                .map(|s| (self.slot_keys.get(&s.key, 0), s.value.iter().map(|t| self.token_id(t)).collect()))
                .collect(),
        })
    }

    /// Encodes the prediction window ending at turn `n` (at most `num_turns` turns).
    pub fn encode_window(&self, session: &Session, n: usize, num_turns: usize, max_text_len: usize) -> Result<Vec<TurnInput>> {
        if n >= session.len() {
            return Err(Error::Bounds { index: n, len: session.len() });
        }
        let start = (n + 1).saturating_sub(num_turns);
        session.turns[start..=n].iter().map(|t| self.encode_turn(t, max_text_len)).collect()
    }
}

/// A turn mapped to embedding ids. `text_ids` is padded with [`PAD`] to the
/// configured length; only the first `text_len` positions are attended.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnInput {
    pub text_ids: Vec<usize>,
    pub text_len: usize,
    pub intent: usize,
    pub item: usize,
    /// (slot key id, value token ids)
    pub slots: Vec<(usize, Vec<usize>)>,
}
