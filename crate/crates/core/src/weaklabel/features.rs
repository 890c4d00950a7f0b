//! The 21 handcrafted satisfaction signals computed from a turn and its
//! neighbours.
//!
//! | idx | signal                                             | turns      |
//! |-----|----------------------------------------------------|------------|
//! | 0   | ASR confidence                                     | n          |
//! | 1   | time gap to next utterance (s)                     | n, n+1     |
//! | 2   | affirmation prompt in utterance                    | n          |
//! | 3   | affirmation prompt in next utterance               | n+1        |
//! | 4   | negation prompt in utterance                       | n          |
//! | 5   | negation prompt in next utterance                  | n+1        |
//! | 6   | domain popularity                                  | n          |
//! | 7   | domain popularity of next turn                     | n+1        |
//! | 8   | intent popularity                                  | n          |
//! | 9   | intent popularity of next turn                     | n+1        |
//! | 10  | utterance length (tokens)                          | n          |
//! | 11  | next ASR confidence                                | n+1        |
//! | 12  | next NLU confidence                                | n+1        |
//! | 13  | NLU confidence                                     | n          |
//! | 14  | intent similarity with next turn                   | n, n+1     |
//! | 15  | utterance similarity with next utterance           | n, n+1     |
//! | 16  | response similarity with next response             | n, n+1     |
//! | 17  | response similarity with previous response         | n-1, n     |
//! | 18  | utterance / response similarity                    | n          |
//! | 19  | termination prompt in utterance                    | n          |
//! | 20  | termination prompt in next utterance               | n+1        |
//!
//! When turn n+1 does not exist the next-turn signals take fixed values:
//! similarities and popularities 0, confidences 1, prompts 0, gap
//! [`ABSENT_NEXT_GAP`]. A missing previous turn gives similarity 0.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dialog_model::{DialogueTurn, Session};
use crate::error::{Error, Result};

pub const NUM_FEATURES: usize = 21;

/// Gap (seconds) assumed after the last turn of a session.
pub const ABSENT_NEXT_GAP: f64 = 300.0;

/// Feature indices that only look at turns up to and including n.
pub const CURRENT_TURN_FEATURES: [usize; 10] = [0, 2, 4, 6, 8, 10, 13, 17, 18, 19];

pub const PROMPT_FEATURES: [usize; 6] = [2, 3, 4, 5, 19, 20];
pub const SIMILARITY_FEATURES: [usize; 5] = [14, 15, 16, 17, 18];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; NUM_FEATURES]);

impl FeatureVector {
    pub fn values(&self) -> &[f64; NUM_FEATURES] {
        &self.0
    }

    pub fn project(&self, indices: &[usize]) -> Vec<f64> {
        indices.iter().map(|&i| self.0[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicons {
    pub affirmation: BTreeSet<String>,
    pub negation: BTreeSet<String>,
    pub termination: BTreeSet<String>,
}

impl Default for Lexicons {
    fn default() -> Self {
        let set = |words: &[&str]| words.iter().map(|w| w.to_string()).collect();
        Lexicons {
            affirmation: set(&["yes", "yeah", "thanks", "thank", "great", "good", "ok", "okay", "perfect", "right"]),
            negation: set(&["no", "not", "wrong", "nope", "incorrect"]),
            termination: set(&["stop", "cancel", "quit", "exit", "bye", "forget", "enough"]),
        }
    }
}

/// Min-max scaled frequencies of domains and intents, frozen from a corpus.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Popularity {
    pub domains: BTreeMap<String, f64>,
    pub intents: BTreeMap<String, f64>,
}

impl Popularity {
    pub fn fit(sessions: &[Session]) -> Self {
        let mut domains: BTreeMap<String, f64> = BTreeMap::new();
        let mut intents: BTreeMap<String, f64> = BTreeMap::new();
        for turn in sessions.iter().flat_map(|s| &s.turns) {
            *domains.entry(turn.domain().to_string()).or_default() += 1.0;
            *intents.entry(turn.domain_intent.clone()).or_default() += 1.0;
        }
        Popularity {
            domains: min_max(domains),
            intents: min_max(intents),
        }
    }

    pub fn domain(&self, turn: &DialogueTurn) -> f64 {
        self.domains.get(turn.domain()).copied().unwrap_or(0.0)
    }

    pub fn intent(&self, turn: &DialogueTurn) -> f64 {
        self.intents.get(&turn.domain_intent).copied().unwrap_or(0.0)
    }
}

fn min_max(counts: BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    let lo = counts.values().copied().fold(f64::INFINITY, f64::min);
    let hi = counts.values().copied().fold(f64::NEG_INFINITY, f64::max);
    counts
        .into_iter()
        .map(|(k, c)| {
            let v = if hi > lo { (c - lo) / (hi - lo) } else { 1.0 };
            (k, v)
        })
        .collect()
}

/// Token-set Jaccard similarity; two empty sequences count as identical.
pub fn jaccard(a: &[String], b: &[String]) -> f64 {
    let sa: BTreeSet<&str> = a.iter().map(String::as_str).collect();
    let sb: BTreeSet<&str> = b.iter().map(String::as_str).collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 1.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

fn intent_similarity(a: &DialogueTurn, b: &DialogueTurn) -> f64 {
    if a.domain_intent == b.domain_intent {
        1.0
    } else if a.domain() == b.domain() {
        0.5
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExtractor {
    pub lexicons: Lexicons,
    pub popularity: Popularity,
}

impl FeatureExtractor {
    /// Freezes popularity statistics from `sessions` with the default lexicons.
    pub fn fit(sessions: &[Session]) -> Self {
        FeatureExtractor {
            lexicons: Lexicons::default(),
            popularity: Popularity::fit(sessions),
        }
    }

    fn has_any(&self, lexicon: &BTreeSet<String>, tokens: &[String]) -> f64 {
        f64::from(u8::from(tokens.iter().any(|t| lexicon.contains(t))))
    }

    pub fn extract(&self, session: &Session, n: usize) -> Result<FeatureVector> {
        let turns = &session.turns;
        let cur = turns.get(n).ok_or(Error::Bounds { index: n, len: turns.len() })?;
        let prev = n.checked_sub(1).map(|p| &turns[p]);
        let next = turns.get(n + 1);
        let lex = &self.lexicons;

        let mut f = [0.0; NUM_FEATURES];
        f[0] = cur.asr_confidence;
        f[2] = self.has_any(&lex.affirmation, &cur.query);
        f[4] = self.has_any(&lex.negation, &cur.query);
        f[6] = self.popularity.domain(cur);
        f[8] = self.popularity.intent(cur);
        f[10] = cur.query.len() as f64;
        f[13] = cur.nlu_confidence;
        f[17] = prev.map_or(0.0, |p| jaccard(&cur.voice_response, &p.voice_response));
        f[18] = jaccard(&cur.query, &cur.voice_response);
        f[19] = self.has_any(&lex.termination, &cur.query);

        match next {
            Some(nx) => {
                f[1] = nx.timestamp - cur.timestamp;
                f[3] = self.has_any(&lex.affirmation, &nx.query);
                f[5] = self.has_any(&lex.negation, &nx.query);
                f[7] = self.popularity.domain(nx);
                f[9] = self.popularity.intent(nx);
                f[11] = nx.asr_confidence;
                f[12] = nx.nlu_confidence;
                f[14] = intent_similarity(cur, nx);
                f[15] = jaccard(&cur.query, &nx.query);
                f[16] = jaccard(&cur.voice_response, &nx.voice_response);
                f[20] = self.has_any(&lex.termination, &nx.query);
            }
            None => {
                f[1] = ABSENT_NEXT_GAP;
                f[11] = 1.0;
                f[12] = 1.0;
            }
        }
        Ok(FeatureVector(f))
    }

    /// Features of every turn of every session, in corpus order.
    pub fn extract_corpus(&self, sessions: &[Session]) -> Vec<FeatureVector> {
        sessions
            .iter()
            .flat_map(|s| (0..s.len()).map(move |n| self.extract(s, n).expect("index in range")))
            .collect()
    }
}
