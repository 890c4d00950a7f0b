//! Dialogue log types and their JSONL serialization.
//!
//! A [`DialogueTurn`] holds one user utterance, the system's parse of it and
//! the candidate response. A [`Session`] is an ordered run of turns from one
//! conversation, optionally carrying oracle satisfaction labels and weak
//! labels. Sessions are stored one JSON object per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercases and whitespace-splits raw text into tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(|t| t.to_lowercase()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Slot {
    pub key: String,
    pub value: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialogueTurn {
    pub query: Vec<String>,
    pub domain_intent: String,
    pub slots: Vec<Slot>,
    pub result_item: String,
    pub voice_response: Vec<String>,
    /// Seconds since session start.
    pub timestamp: f64,
    pub asr_confidence: f64,
    pub nlu_confidence: f64,
}

impl DialogueTurn {
    /// The domain part of `domain_intent` ("music" for "music-play").
    pub fn domain(&self) -> &str {
        self.domain_intent
            .split_once('-')
            .map_or(self.domain_intent.as_str(), |(d, _)| d)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.query.is_empty() {
            return Err("query is empty".into());
        }
        if self.voice_response.is_empty() {
            return Err("voice_response is empty".into());
        }
        if !self.timestamp.is_finite() || self.timestamp < 0.0 {
            return Err(format!("timestamp {} is not a finite non-negative value", self.timestamp));
        }
        for (name, v) in [("asr_confidence", self.asr_confidence), ("nlu_confidence", self.nlu_confidence)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} {v} outside [0,1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Session {
    pub session_id: String,
    pub turns: Vec<DialogueTurn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_satisfaction: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weak_labels: Option<Vec<f64>>,
}

impl Session {
    pub fn new(session_id: impl Into<String>, turns: Vec<DialogueTurn>) -> Self {
        Session {
            session_id: session_id.into(),
            turns,
            oracle_satisfaction: None,
            weak_labels: None,
        }
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        for (i, turn) in self.turns.iter().enumerate() {
            turn.validate().map_err(|e| format!("turn {i}: {e}"))?;
        }
        for (i, pair) in self.turns.windows(2).enumerate() {
            if pair[1].timestamp < pair[0].timestamp {
                return Err(format!("timestamp decreases at turn {}", i + 1));
            }
        }
        if let Some(oracle) = &self.oracle_satisfaction {
            if oracle.len() != self.turns.len() {
                return Err(format!(
                    "oracle_satisfaction has {} entries for {} turns",
                    oracle.len(),
                    self.turns.len()
                ));
            }
            if let Some(bad) = oracle.iter().find(|&&v| v > 1) {
                return Err(format!("oracle_satisfaction value {bad} not in {{0,1}}"));
            }
        }
        if let Some(weak) = &self.weak_labels {
            if weak.len() != self.turns.len() {
                return Err(format!("weak_labels has {} entries for {} turns", weak.len(), self.turns.len()));
            }
            if let Some(bad) = weak.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(format!("weak label {bad} outside [0,1]"));
            }
        }
        Ok(())
    }
}

/// Parses one JSONL record. `line` is 1-based and only used in errors.
pub fn parse_session_line(text: &str, line: usize) -> Result<Session> {
    let session: Session = serde_json::from_str(text).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => Error::Schema {
            line,
            message: e.to_string(),
        },
        _ => Error::Parse {
            line,
            message: e.to_string(),
        },
    })?;
    session.validate().map_err(|message| Error::Schema { line, message })?;
    Ok(session)
}

pub fn session_to_line(session: &Session) -> String {
    serde_json::to_string(session).expect("session serialization is infallible")
}

pub fn read_sessions(path: impl AsRef<Path>) -> Result<Vec<Session>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut sessions = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        sessions.push(parse_session_line(&line, idx + 1)?);
    }
    Ok(sessions)
}

pub fn write_sessions(sessions: &[Session], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for session in sessions {
        out.write_all(session_to_line(session).as_bytes())
            .and_then(|_| out.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
